//! Strang split-step integrator for
//! `i psi_t = -psi_xx / 2 + V(x, t) psi + P(|psi|^2, t) psi`
//! on a uniform grid with homogeneous Dirichlet ends.
//!
//! The dispersive part is advanced with Crank-Nicolson (3-point Laplacian);
//! potential and nonlinearity are a pointwise phase rotation, which is exact
//! for that sub-flow because it leaves `|psi|` unchanged.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpatialGrid, WaveField};
use crate::modulation::{ModulationPlan, NonlinearitySpec, PotentialCoefficients, ScalarFn};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `lower[i] x[i-1] + diagonal[i] x[i] + upper[i] x[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<Complex64>,
    pub diagonal: Vec<Complex64>,
    pub upper: Vec<Complex64>,
    pub rhs: Vec<Complex64>,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    /// `A x` for this system's matrix.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diagonal[i] * x[i];
                if i > 0 {
                    y += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }
}

/// Thomas algorithm. No pivoting; a zero pivot is reported, not worked around.
pub fn thomas_solve(system: &TridiagonalSystem) -> Result<Vec<Complex64>> {
    let n = system.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty tridiagonal system".into()));
    }
    if [system.lower.len(), system.upper.len(), system.rhs.len()]
        .iter()
        .any(|&len| len != n)
    {
        return Err(Error::InvalidInput("tridiagonal bands of unequal length".into()));
    }
    let (a, b, c, d) = (&system.lower, &system.diagonal, &system.upper, &system.rhs);
    let mut c_prime = vec![ZERO; n];
    let mut d_prime = vec![ZERO; n];

    let mut pivot = b[0];
    if pivot == ZERO {
        return Err(Error::SingularSystem { row: 0 });
    }
    c_prime[0] = c[0] / pivot;
    d_prime[0] = d[0] / pivot;
    for i in 1..n {
        pivot = b[i] - a[i] * c_prime[i - 1];
        if pivot == ZERO || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        c_prime[i] = c[i] / pivot;
        d_prime[i] = (d[i] - a[i] * d_prime[i - 1]) / pivot;
    }

    let mut x = d_prime;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c_prime[i] * next;
    }
    Ok(x)
}

/// Crank-Nicolson factors for `i psi_t = -psi_xx / 2` over one step `dt`,
/// acting on the interior points of a Dirichlet grid.
///
/// The left matrix is constant, so its Thomas elimination is done once.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    dt: f64,
    rhs_diag: Complex64,
    rhs_off: Complex64,
    c_prime: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CrankNicolson {
    pub fn new(grid: &SpatialGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let dx = grid.dx();
        let m = grid.len() - 2;
        // H = -(1/2) D2, so H has diagonal 1/dx^2 and off-diagonals -1/(2 dx^2).
        let diag = dt / (2.0 * dx * dx);
        let off = dt / (4.0 * dx * dx);
        let lhs_diag = Complex64::new(1.0, diag);
        let lhs_off = Complex64::new(0.0, -off);

        let mut c_prime = vec![ZERO; m];
        let mut inv_pivot = vec![ZERO; m];
        let mut prev = ZERO;
        for i in 0..m {
            let pivot = lhs_diag - lhs_off * prev;
            if pivot == ZERO {
                return Err(Error::SingularSystem { row: i });
            }
            inv_pivot[i] = pivot.inv();
            c_prime[i] = lhs_off * inv_pivot[i];
            prev = c_prime[i];
        }
        Ok(Self {
            dt,
            rhs_diag: Complex64::new(1.0, -diag),
            rhs_off: Complex64::new(0.0, off),
            c_prime,
            inv_pivot,
            scratch: vec![ZERO; m],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `psi` in place; both end samples are set to zero.
    pub fn step(&mut self, psi: &mut [Complex64]) {
        let m = self.c_prime.len();
        debug_assert_eq!(psi.len(), m + 2);
        psi[0] = ZERO;
        psi[m + 1] = ZERO;

        // Interior row i is grid point i + 1. With equal off-diagonals the
        // forward sweep is d'_i = rhs_i / pivot_i - c'_i d'_{i-1}.
        let (diag, off) = (self.rhs_diag, self.rhs_off);
        for ((d, w), p) in self.scratch.iter_mut().zip(psi.windows(3)).zip(&self.inv_pivot) {
            *d = (diag * w[1] + off * (w[0] + w[2])) * p;
        }
        let mut prev = ZERO;
        for (d, c) in self.scratch.iter_mut().zip(&self.c_prime) {
            *d -= c * prev;
            prev = *d;
        }
        let mut next = ZERO;
        for ((out, d), c) in psi[1..=m].iter_mut().zip(&self.scratch).zip(&self.c_prime).rev() {
            next = d - c * next;
            *out = next;
        }
    }
}

/// One Crank-Nicolson step of the free dispersive flow for duration `dt`.
pub fn crank_nicolson_step(field: &WaveField, dt: f64) -> Result<WaveField> {
    let mut cn = CrankNicolson::new(field.grid(), dt)?;
    let mut out = field.clone();
    cn.step(out.amplitudes_mut());
    Ok(out)
}

/// Local nonlinearity `P(|psi|^2, t)`.
#[derive(Clone)]
pub enum NonlinearModel {
    /// `sum_n g_{2n+1}(t) |psi|^{2n}`, coefficients listed from the cubic one up.
    Polynomial(Vec<ScalarFn>),
    /// `(1 + 3/2 g |psi|^2) / sqrt(1 + g |psi|^2)` with strength `g(t)`.
    Nonpolynomial(ScalarFn),
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearModel::Polynomial(c) => write!(f, "Polynomial(order {})", c.len()),
            NonlinearModel::Nonpolynomial(_) => write!(f, "Nonpolynomial"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Polynomial,
    Nonpolynomial,
}

impl NonlinearModel {
    pub fn cubic(g: f64) -> Self {
        NonlinearModel::Polynomial(vec![Arc::new(move |_| g)])
    }

    pub fn polynomial(coefficients: &[f64]) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidInput("polynomial nonlinearity needs order >= 1".into()));
        }
        Ok(NonlinearModel::Polynomial(
            coefficients.iter().map(|&g| Arc::new(move |_| g) as ScalarFn).collect(),
        ))
    }

    pub fn nonpolynomial(g: f64) -> Self {
        NonlinearModel::Nonpolynomial(Arc::new(move |_| g))
    }

    /// Strengths `g_{2n+1}(t) = G_{2n+1} a(t)^{2-n}` driven by `plan`.
    ///
    /// For [`ModelKind::Nonpolynomial`] only the cubic coefficient is used.
    pub fn modulated(spec: &NonlinearitySpec, plan: &ModulationPlan, kind: ModelKind) -> Self {
        let strength = |n: usize| -> ScalarFn {
            let g = spec.coefficient(n).unwrap_or(0.0);
            let a = plan.a().clone();
            Arc::new(move |t| g * a.value(t).powi(2 - n as i32))
        };
        match kind {
            ModelKind::Polynomial => NonlinearModel::Polynomial((1..=spec.order()).map(strength).collect()),
            ModelKind::Nonpolynomial => NonlinearModel::Nonpolynomial(strength(1)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            NonlinearModel::Polynomial(_) => ModelKind::Polynomial,
            NonlinearModel::Nonpolynomial(_) => ModelKind::Nonpolynomial,
        }
    }

    /// Leading (cubic) strength at `t`.
    pub fn cubic_strength(&self, t: f64) -> f64 {
        match self {
            NonlinearModel::Polynomial(c) => c.first().map_or(0.0, |g| g(t)),
            NonlinearModel::Nonpolynomial(g) => g(t),
        }
    }

    fn freeze(&self, t: f64) -> Frozen {
        match self {
            NonlinearModel::Polynomial(c) => {
                let coeffs: Vec<f64> = c.iter().map(|g| g(t)).collect();
                if coeffs.len() == 1 {
                    Frozen::Cubic(coeffs[0])
                } else {
                    Frozen::Polynomial(coeffs)
                }
            }
            NonlinearModel::Nonpolynomial(g) => Frozen::Nonpolynomial(g(t)),
        }
    }

    /// `P(density)` at time `t`.
    pub fn energy(&self, density: f64, t: f64) -> Result<f64> {
        self.freeze(t).energy(density, 0)
    }
}

enum Frozen {
    Cubic(f64),
    Polynomial(Vec<f64>),
    Nonpolynomial(f64),
}

impl Frozen {
    #[inline]
    fn energy(&self, density: f64, index: usize) -> Result<f64> {
        match self {
            Frozen::Cubic(g) => Ok(g * density),
            Frozen::Polynomial(c) => Ok(c.iter().rev().fold(0.0, |acc, g| (acc + g) * density)),
            Frozen::Nonpolynomial(g) => {
                let u = g * density;
                let root = 1.0 + u;
                if !(root > 0.0) {
                    return Err(Error::NonpolynomialDomain { index, value: root });
                }
                Ok((1.0 + 1.5 * u) / root.sqrt())
            }
        }
    }
}

/// Where the potential coefficients come from.
#[derive(Clone)]
pub enum PotentialSource {
    Zero,
    Fixed(PotentialCoefficients),
    /// `f1, f2, f3` of a modulation plan.
    Plan(ModulationPlan),
    Custom(Arc<dyn Fn(f64) -> PotentialCoefficients + Send + Sync>),
}

impl fmt::Debug for PotentialSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSource::Zero => write!(f, "Zero"),
            PotentialSource::Fixed(p) => write!(f, "Fixed({p:?})"),
            PotentialSource::Plan(_) => write!(f, "Plan"),
            PotentialSource::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl PotentialSource {
    pub fn at(&self, t: f64) -> Result<PotentialCoefficients> {
        match self {
            PotentialSource::Zero => Ok(PotentialCoefficients::default()),
            PotentialSource::Fixed(p) => Ok(*p),
            PotentialSource::Plan(plan) => plan.potential_fast(t),
            PotentialSource::Custom(f) => Ok(f(t)),
        }
    }
}

/// Potential and nonlinearity of the equation being integrated.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub potential: PotentialSource,
    pub nonlinearity: NonlinearModel,
}

impl Dynamics {
    pub fn new(potential: PotentialSource, nonlinearity: NonlinearModel) -> Self {
        Self {
            potential,
            nonlinearity,
        }
    }

    /// The nonautonomous equation generated by `plan` and `spec`.
    pub fn from_plan(plan: &ModulationPlan, spec: &NonlinearitySpec, kind: ModelKind) -> Self {
        Self::new(
            PotentialSource::Plan(plan.clone()),
            NonlinearModel::modulated(spec, plan, kind),
        )
    }
}

/// Rotates every sample by `exp(-i (V_k + P(|psi_k|^2)) dt)`.
pub fn nonlinear_phase_step(
    field: &WaveField,
    potential: &[f64],
    model: &NonlinearModel,
    t: f64,
    dt: f64,
) -> Result<WaveField> {
    if potential.len() != field.grid().len() {
        return Err(Error::InvalidInput(format!(
            "{} potential samples for {} grid points",
            potential.len(),
            field.grid().len()
        )));
    }
    let frozen = model.freeze(t);
    let mut out = field.clone();
    for (k, (z, v)) in out.amplitudes_mut().iter_mut().zip(potential).enumerate() {
        let theta = (v + frozen.energy(z.norm_sqr(), k)?) * dt;
        let (s, c) = theta.sin_cos();
        *z *= Complex64::new(c, -s);
    }
    Ok(out)
}

/// In-place phase step with the quadratic potential evaluated on the fly.
fn rotate_in_place(
    psi: &mut [Complex64],
    grid: &SpatialGrid,
    v: PotentialCoefficients,
    frozen: &Frozen,
    dt: f64,
) -> Result<()> {
    let (x0, dx) = (grid.x_min(), grid.dx());
    if let Frozen::Cubic(g) = *frozen {
        let x1 = grid.x_max();
        let mut v_max = v.at(x0).abs().max(v.at(x1).abs());
        if v.f1 != 0.0 {
            let vertex = -v.f2 / (2.0 * v.f1);
            if (x0..=x1).contains(&vertex) {
                v_max = v_max.max(v.at(vertex).abs());
            }
        }
        let density_max = psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        if (v_max + g.abs() * density_max) * dt.abs() < SMALL_ANGLE {
            for (k, z) in psi.iter_mut().enumerate() {
                let x = x0 + k as f64 * dx;
                let theta = (v.at(x) + g * z.norm_sqr()) * dt;
                *z *= small_angle_phase(-theta);
            }
            return Ok(());
        }
    }
    for (k, z) in psi.iter_mut().enumerate() {
        let x = x0 + k as f64 * dx;
        let theta = (v.at(x) + frozen.energy(z.norm_sqr(), k)?) * dt;
        *z *= unit_phase(-theta);
    }
    Ok(())
}

const SMALL_ANGLE: f64 = 0.1;

/// `exp(i theta)` for `|theta| < 0.1`, by Taylor series; the truncation
/// error is below `0.1^10 / 10!`.
#[inline]
fn small_angle_phase(theta: f64) -> Complex64 {
    let q = theta * theta;
    let cos = 1.0 - q / 2.0 * (1.0 - q / 12.0 * (1.0 - q / 30.0 * (1.0 - q / 56.0 * (1.0 - q / 90.0))));
    let sin = theta * (1.0 - q / 6.0 * (1.0 - q / 20.0 * (1.0 - q / 42.0 * (1.0 - q / 72.0))));
    Complex64::new(cos, sin)
}

#[inline]
fn unit_phase(theta: f64) -> Complex64 {
    if theta.abs() < SMALL_ANGLE {
        small_angle_phase(theta)
    } else {
        let (sin, cos) = theta.sin_cos();
        Complex64::new(cos, sin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    /// Observers fire every this many steps (and at both ends).
    pub snapshot_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            snapshot_stride: 100,
        }
    }
}

impl SolverConfig {
    pub fn new(dt: f64, snapshot_stride: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if snapshot_stride == 0 {
            return Err(Error::InvalidInput("snapshot stride must be at least 1".into()));
        }
        Ok(Self { dt, snapshot_stride })
    }
}

const BLOW_UP_CHECK_EVERY: usize = 256;
const BLOW_UP_NORM_GROWTH: f64 = 10.0;

/// Integrates `field` from `t0` to `t1` with Strang splitting.
///
/// The step count is `round((t1 - t0) / dt)` and the step is adjusted so the
/// run ends exactly at `t1`. Each step applies a half phase rotation with
/// `V(t)`, `P(., t)`, one Crank-Nicolson step, and a half rotation with
/// `V(t + dt)`, `P(., t + dt)`. Adjacent half rotations at the same time are
/// fused, which is exact since the rotation keeps `|psi|`.
///
/// `observer` sees `(t, field)` at `t0`, every `snapshot_stride` steps, and at `t1`.
pub fn propagate(
    field: &WaveField,
    dynamics: &Dynamics,
    config: &SolverConfig,
    t0: f64,
    t1: f64,
    mut observer: impl FnMut(f64, &WaveField),
) -> Result<WaveField> {
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    let config = SolverConfig::new(config.dt, config.snapshot_stride)?;
    let steps = (((t1 - t0) / config.dt).round() as usize).max(1);
    let h = (t1 - t0) / steps as f64;
    let grid = *field.grid();
    let mut cn = CrankNicolson::new(&grid, h)?;
    let mut state = field.clone();
    let initial_norm = state.norm();

    let time = |s: usize| t0 + (t1 - t0) * (s as f64 / steps as f64);
    let rotate = |psi: &mut [Complex64], t: f64, dt: f64| -> Result<()> {
        let v = dynamics.potential.at(t)?;
        let frozen = dynamics.nonlinearity.freeze(t);
        rotate_in_place(psi, &grid, v, &frozen, dt)
    };
    let check = |state: &WaveField, t: f64| -> Result<()> {
        let norm = state.norm();
        if !norm.is_finite() {
            return Err(Error::BlowUp {
                t,
                reason: "non-finite amplitude".into(),
            });
        }
        if norm > BLOW_UP_NORM_GROWTH * initial_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::BlowUp {
                t,
                reason: format!("norm grew from {initial_norm:e} to {norm:e}"),
            });
        }
        Ok(())
    };

    observer(t0, &state);
    rotate(state.amplitudes_mut(), t0, 0.5 * h)?;
    for s in 1..=steps {
        cn.step(state.amplitudes_mut());
        let t = time(s);
        let observe = s == steps || s % config.snapshot_stride == 0;
        if observe {
            rotate(state.amplitudes_mut(), t, 0.5 * h)?;
            check(&state, t)?;
            observer(t, &state);
            if s < steps {
                rotate(state.amplitudes_mut(), t, 0.5 * h)?;
            }
        } else {
            rotate(state.amplitudes_mut(), t, h)?;
            if s % BLOW_UP_CHECK_EVERY == 0 {
                check(&state, t)?;
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    /// Gaussian elimination with partial pivoting on the dense matrix.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn dense_solve(system: &TridiagonalSystem) -> Vec<Complex64> {
        let n = system.len();
        let mut m = vec![vec![ZERO; n + 1]; n];
        for i in 0..n {
            m[i][i] = system.diagonal[i];
            if i > 0 {
                m[i][i - 1] = system.lower[i];
            }
            if i + 1 < n {
                m[i][i + 1] = system.upper[i];
            }
            m[i][n] = system.rhs[i];
        }
        for col in 0..n {
            let p = (col..n)
                .max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm()))
                .unwrap();
            m.swap(col, p);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..=n {
                    let v = m[col][k];
                    m[row][k] -= f * v;
                }
            }
        }
        let mut x = vec![ZERO; n];
        for i in (0..n).rev() {
            let mut s = m[i][n];
            for k in i + 1..n {
                s -= m[i][k] * x[k];
            }
            x[i] = s / m[i][i];
        }
        x
    }

    #[test]
    fn identity_system() {
        let rhs: Vec<_> = (0..5).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let system = TridiagonalSystem {
            lower: vec![ZERO; 5],
            diagonal: vec![Complex64::new(1.0, 0.0); 5],
            upper: vec![ZERO; 5],
            rhs: rhs.clone(),
        };
        assert_eq!(thomas_solve(&system).unwrap(), rhs);
    }

    #[test]
    fn random_system_matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        let mut system = TridiagonalSystem {
            lower: (0..n).map(|_| random_complex(&mut rng)).collect(),
            diagonal: (0..n).map(|_| random_complex(&mut rng)).collect(),
            upper: (0..n).map(|_| random_complex(&mut rng)).collect(),
            rhs: (0..n).map(|_| random_complex(&mut rng)).collect(),
        };
        for d in system.diagonal.iter_mut() {
            *d += Complex64::new(3.0, 0.0);
        }
        let x = thomas_solve(&system).unwrap();
        let oracle = dense_solve(&system);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_diagonal_is_singular() {
        let system = TridiagonalSystem {
            lower: vec![ZERO; 4],
            diagonal: vec![ZERO; 4],
            upper: vec![ZERO; 4],
            rhs: vec![Complex64::new(1.0, 0.0); 4],
        };
        assert!(matches!(thomas_solve(&system), Err(Error::SingularSystem { row: 0 })));
    }

    #[test]
    fn cn_matches_general_thomas_solve() {
        let grid = SpatialGrid::symmetric(5.0, 0.05).unwrap();
        let field = WaveField::from_fn(grid, |x| Complex64::new((-x * x).exp(), 0.3 * x.sin())).unwrap();
        let dt = 0.01;
        let fast = crank_nicolson_step(&field, dt).unwrap();

        let dx = grid.dx();
        let m = grid.len() - 2;
        let (diag, off) = (dt / (2.0 * dx * dx), dt / (4.0 * dx * dx));
        let psi = field.amplitudes();
        let mut amps = psi.to_vec();
        amps[0] = ZERO;
        amps[m + 1] = ZERO;
        let rhs = (1..=m)
            .map(|k| Complex64::new(1.0, -diag) * amps[k] + Complex64::new(0.0, off) * (amps[k - 1] + amps[k + 1]))
            .collect();
        let system = TridiagonalSystem {
            lower: vec![Complex64::new(0.0, -off); m],
            diagonal: vec![Complex64::new(1.0, diag); m],
            upper: vec![Complex64::new(0.0, -off); m],
            rhs,
        };
        let slow = thomas_solve(&system).unwrap();
        for (a, b) in fast.amplitudes()[1..=m].iter().zip(&slow) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn box_eigenmode_picks_up_cn_phase() {
        let grid = SpatialGrid::new(-1.0, 1.0, 201).unwrap();
        let (l, dx, dt) = (2.0, grid.dx(), 1e-3);
        for n in [1usize, 3, 10] {
            let mode = |x: f64| (n as f64 * PI * (x + 1.0) / l).sin();
            let field = WaveField::from_fn(grid, |x| Complex64::new(mode(x), 0.0)).unwrap();
            let out = crank_nicolson_step(&field, dt).unwrap();
            let lambda = dt * (1.0 - (n as f64 * PI * dx / l).cos()) / (dx * dx);
            let factor = Complex64::new(1.0, -0.5 * lambda) / Complex64::new(1.0, 0.5 * lambda);
            for (z_in, z_out) in field.amplitudes().iter().zip(out.amplitudes()).skip(1).take(199) {
                assert!((z_out - factor * z_in).norm() < 1e-12);
                if z_in.norm() > 0.5 {
                    assert_abs_diff_eq!(z_out.norm() / z_in.norm(), 1.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn cn_step_conserves_norm() {
        let grid = SpatialGrid::symmetric(20.0, 0.01).unwrap();
        let field = WaveField::from_fn(grid, |x| {
            Complex64::from_polar(2.0 / x.cosh(), 3.0 * x) * (1.0 + 0.1 * (17.0 * x).sin())
        })
        .unwrap();
        let out = crank_nicolson_step(&field, 1e-4).unwrap();
        assert!(((out.norm() - field.norm()) / field.norm()).abs() < 1e-13);
    }

    #[test]
    fn free_gaussian_spreads_as_predicted() {
        let grid = SpatialGrid::symmetric(20.0, 0.01).unwrap();
        let psi0 = WaveField::from_fn(grid, |x| Complex64::new(PI.powf(-0.25) * (-0.5 * x * x).exp(), 0.0)).unwrap();
        let dynamics = Dynamics::new(PotentialSource::Zero, NonlinearModel::cubic(0.0));
        let config = SolverConfig::new(1e-4, 1_000_000).unwrap();
        let out = propagate(&psi0, &dynamics, &config, 0.0, 1.0, |_, _| {}).unwrap();
        let center = out.amplitudes()[2000].norm_sqr();
        assert_abs_diff_eq!(center, (2.0 * PI).powf(-0.5), epsilon = 1e-4);
    }

    #[test]
    fn unit_phase_matches_sin_cos() {
        for i in -300..300 {
            let theta = i as f64 * 7.3e-4;
            let z = unit_phase(theta);
            assert!(
                (z.re - theta.cos()).abs() < 2e-16 && (z.im - theta.sin()).abs() < 2e-16,
                "{theta}"
            );
        }
    }

    #[test]
    fn phase_step_keeps_modulus() {
        let grid = SpatialGrid::symmetric(3.0, 0.1).unwrap();
        let field = WaveField::from_fn(grid, |x| Complex64::new(2.0 / x.cosh(), 0.5 * x)).unwrap();
        let v: Vec<f64> = grid.points().map(|x| x * x).collect();
        let out = nonlinear_phase_step(&field, &v, &NonlinearModel::cubic(-1.0), 0.0, 0.3).unwrap();
        for (a, b) in field.amplitudes().iter().zip(out.amplitudes()) {
            assert_abs_diff_eq!(a.norm(), b.norm(), epsilon = 1e-15);
        }
    }

    #[test]
    fn cubic_phase_increment() {
        let grid = SpatialGrid::new(0.0, 1.0, 3).unwrap();
        let field = WaveField::new(grid, vec![Complex64::new(2.0, 0.0); 3]).unwrap();
        let out = nonlinear_phase_step(&field, &[0.0; 3], &NonlinearModel::cubic(-1.0), 0.0, 1e-4).unwrap();
        for z in out.amplitudes() {
            assert_abs_diff_eq!(z.arg(), 4e-4, epsilon = 1e-15);
        }
    }

    #[test]
    fn nonpolynomial_energy_and_domain() {
        let model = NonlinearModel::nonpolynomial(-0.1);
        // g |psi|^2 = -0.16
        let e = model.energy(1.6, 0.0).unwrap();
        assert_abs_diff_eq!(e, (1.0 - 0.24) / 0.84f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(e, 0.8292, epsilon = 1e-4);
        assert!(matches!(
            model.energy(10.0, 0.0),
            Err(Error::NonpolynomialDomain { .. })
        ));

        let grid = SpatialGrid::new(0.0, 1.0, 3).unwrap();
        let field = WaveField::new(grid, vec![Complex64::new(4.0, 0.0); 3]).unwrap();
        assert!(nonlinear_phase_step(&field, &[0.0; 3], &model, 0.0, 0.1).is_err());
    }

    #[test]
    fn polynomial_energy_uses_all_orders() {
        let model = NonlinearModel::polynomial(&[-1.0, 0.5]).unwrap();
        assert_abs_diff_eq!(model.energy(2.0, 0.0).unwrap(), -2.0 + 0.5 * 4.0, epsilon = 1e-15);
        assert!(NonlinearModel::polynomial(&[]).is_err());
    }

    #[test]
    fn propagate_validates_inputs() {
        let grid = SpatialGrid::symmetric(3.0, 0.1).unwrap();
        let field = WaveField::zeros(grid);
        let dynamics = Dynamics::new(PotentialSource::Zero, NonlinearModel::cubic(0.0));
        let config = SolverConfig::default();
        assert!(propagate(&field, &dynamics, &config, 1.0, 1.0, |_, _| {}).is_err());
        assert!(SolverConfig::new(0.0, 1).is_err());
        assert!(SolverConfig::new(0.1, 0).is_err());
    }

    #[test]
    fn observer_sees_both_ends_and_stride() {
        let grid = SpatialGrid::symmetric(3.0, 0.1).unwrap();
        let field = WaveField::from_fn(grid, |x| Complex64::new((-x * x).exp(), 0.0)).unwrap();
        let dynamics = Dynamics::new(PotentialSource::Zero, NonlinearModel::cubic(-1.0));
        let config = SolverConfig::new(0.01, 25).unwrap();
        let mut times = Vec::new();
        propagate(&field, &dynamics, &config, 0.0, 1.0, |t, _| times.push(t)).unwrap();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn blow_up_is_reported() {
        let grid = SpatialGrid::symmetric(3.0, 0.1).unwrap();
        let field = WaveField::from_fn(grid, |x| Complex64::new((-x * x).exp(), 0.0)).unwrap();
        let dynamics = Dynamics::new(
            PotentialSource::Custom(Arc::new(|_| PotentialCoefficients {
                f1: f64::NAN,
                f2: 0.0,
                f3: 0.0,
            })),
            NonlinearModel::cubic(0.0),
        );
        let config = SolverConfig::new(0.01, 10).unwrap();
        assert!(matches!(
            propagate(&field, &dynamics, &config, 0.0, 1.0, |_, _| {}),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn constant_potential_is_a_global_phase() {
        let grid = SpatialGrid::symmetric(10.0, 0.05).unwrap();
        let field = WaveField::from_fn(grid, |x| Complex64::new(2.0 / x.cosh(), 0.0)).unwrap();
        let config = SolverConfig::new(1e-3, 1000).unwrap();
        let plain = Dynamics::new(PotentialSource::Zero, NonlinearModel::cubic(-1.0));
        let shift = 0.7;
        let shifted = Dynamics::new(
            PotentialSource::Fixed(PotentialCoefficients {
                f1: 0.0,
                f2: 0.0,
                f3: shift,
            }),
            NonlinearModel::cubic(-1.0),
        );
        let a = propagate(&field, &plain, &config, 0.0, 1.0, |_, _| {}).unwrap();
        let b = propagate(&field, &shifted, &config, 0.0, 1.0, |_, _| {}).unwrap();
        let phase = Complex64::from_polar(1.0, -shift);
        for (za, zb) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((za * phase - zb).norm() < 1e-12);
        }
    }
}
