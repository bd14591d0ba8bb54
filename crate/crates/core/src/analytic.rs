//! Exact two-soliton breather of the autonomous cubic equation and its
//! modulated image under a [`ModulationPlan`], with finite-difference
//! residual checks for both equations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{SpatialGrid, WaveField};
use crate::modulation::{KinematicsSample, ModulationPlan, NonlinearitySpec, PotentialCoefficients};

/// Autonomous cubic coefficient for which [`satsuma_yajima`] is exact.
pub const BREATHER_COUPLING: f64 = -1.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Beyond this `|zeta|` the hyperbolic terms are evaluated relative to `cosh 4 zeta`.
const LARGE_ZETA: f64 = 10.0;

/// Two-soliton breather of `i Phi_tau = -Phi_zz / 2 - |Phi|^2 Phi`:
///
/// `Phi = 4 (cosh 3z + 3 e^{4 i tau} cosh z) e^{i tau / 2} / (cosh 4z + 4 cosh 2z + 3 cos 4 tau)`.
///
/// `Phi(z, 0) = 2 sech z`; `|Phi(0, tau)|^2` swings between 4 and 16 with
/// period `pi / 2`. The denominator never drops below 2.
pub fn satsuma_yajima(zeta: f64, tau: f64) -> Complex64 {
    let rotor = Complex64::from_polar(3.0, 4.0 * tau);
    let carrier = Complex64::from_polar(4.0, 0.5 * tau);
    let s = zeta.abs();
    if s <= LARGE_ZETA {
        let num = (3.0 * s).cosh() + rotor * s.cosh();
        let den = (4.0 * s).cosh() + 4.0 * (2.0 * s).cosh() + 3.0 * (4.0 * tau).cos();
        return carrier * num / den;
    }
    // cosh(k s) / cosh(4 s) = e^{(k-4)s} (1 + e^{-2ks}) / (1 + e^{-8s})
    let tail = 1.0 + (-8.0 * s).exp();
    let ratio = |k: f64| (-(4.0 - k) * s).exp() * (1.0 + (-2.0 * k * s).exp()) / tail;
    let inv_cosh4 = 2.0 * (-4.0 * s).exp() / tail;
    let num = ratio(3.0) + rotor * ratio(1.0);
    let den = 1.0 + 4.0 * ratio(2.0) + 3.0 * (4.0 * tau).cos() * inv_cosh4;
    carrier * num / den
}

/// `sqrt(a) e^{i eta(x)} Phi(a x + b, tau)` at one point.
#[inline]
pub fn modulated_value(k: &KinematicsSample, x: f64) -> Complex64 {
    k.rho * Complex64::from_polar(1.0, k.eta(x)) * satsuma_yajima(k.zeta(x), k.tau)
}

/// Samples the modulated breather on `grid` at time `t`.
pub fn modulated_psi(plan: &ModulationPlan, grid: &SpatialGrid, t: f64) -> Result<WaveField> {
    let k = plan.kinematics(t)?;
    WaveField::from_fn(*grid, |x| modulated_value(&k, x))
}

/// Rectangle of probe points in the `(zeta, tau)` plane and the finite
/// difference steps used at each of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRect {
    pub zeta: (f64, f64),
    pub tau: (f64, f64),
    pub dzeta: f64,
    pub dtau: f64,
    pub n_zeta: usize,
    pub n_tau: usize,
}

impl ProbeRect {
    pub fn new(zeta: (f64, f64), tau: (f64, f64), dzeta: f64, dtau: f64) -> Self {
        Self {
            zeta,
            tau,
            dzeta,
            dtau,
            n_zeta: 201,
            n_tau: 101,
        }
    }

    pub fn with_counts(mut self, n_zeta: usize, n_tau: usize) -> Self {
        self.n_zeta = n_zeta.max(1);
        self.n_tau = n_tau.max(1);
        self
    }
}

fn lattice(range: (f64, f64), n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 {
        (range.1 - range.0) / (n - 1) as f64
    } else {
        0.0
    };
    (0..n).map(move |i| range.0 + i as f64 * step)
}

/// Max of `|i Phi_tau + Phi_zz / 2 - G |Phi|^2 Phi|` over the probe lattice,
/// with second-order central differences.
pub fn nlse_residual(sampler: impl Fn(f64, f64) -> Complex64, g: f64, probe: &ProbeRect) -> f64 {
    let (hz, ht) = (probe.dzeta, probe.dtau);
    let mut worst: f64 = 0.0;
    for tau in lattice(probe.tau, probe.n_tau) {
        for zeta in lattice(probe.zeta, probe.n_zeta) {
            let center = sampler(zeta, tau);
            let phi_t = (sampler(zeta, tau + ht) - sampler(zeta, tau - ht)) / (2.0 * ht);
            let phi_zz = (sampler(zeta + hz, tau) - 2.0 * center + sampler(zeta - hz, tau)) / (hz * hz);
            let r = I * phi_t + 0.5 * phi_zz - g * center.norm_sqr() * center;
            worst = worst.max(r.norm());
        }
    }
    worst
}

/// Probe times and finite-difference step for [`gpe_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpeProbe {
    pub times: (f64, f64),
    pub n_times: usize,
    /// Finite-difference step in both `x` and `t`.
    pub step: f64,
    /// Every `x_stride`-th grid point is probed.
    pub x_stride: usize,
}

impl GpeProbe {
    pub fn new(t0: f64, t1: f64) -> Self {
        Self {
            times: (t0, t1),
            n_times: 21,
            step: 2e-4,
            x_stride: 10,
        }
    }
}

/// Max of `|i psi_t + psi_xx / 2 - V psi - P(|psi|^2) psi|` for the modulated
/// breather, with `V` from the plan and `g_{2n+1}(t) = G_{2n+1} a^{2-n}`.
///
/// Probes skip three grid points at each end.
pub fn gpe_residual(
    plan: &ModulationPlan,
    spec: &NonlinearitySpec,
    grid: &SpatialGrid,
    probe: &GpeProbe,
) -> Result<f64> {
    gpe_residual_with(plan, spec, grid, probe, |k| k.potential())
}

/// As [`gpe_residual`], with the potential supplied by `potential`.
pub fn gpe_residual_with(
    plan: &ModulationPlan,
    spec: &NonlinearitySpec,
    grid: &SpatialGrid,
    probe: &GpeProbe,
    potential: impl Fn(&KinematicsSample) -> PotentialCoefficients,
) -> Result<f64> {
    let h = probe.step;
    let mut worst: f64 = 0.0;
    for t in lattice(probe.times, probe.n_times) {
        let (before, now, after) = (plan.kinematics(t - h)?, plan.kinematics(t)?, plan.kinematics(t + h)?);
        let v = potential(&now);
        let strengths = (1..=spec.order())
            .map(|n| spec.strength(n, plan, t))
            .collect::<Result<Vec<_>>>()?;
        let stride = probe.x_stride.max(1);
        for k in (3..grid.len().saturating_sub(3)).step_by(stride) {
            let x = grid.x(k);
            let psi = modulated_value(&now, x);
            let psi_t = (modulated_value(&after, x) - modulated_value(&before, x)) / (2.0 * h);
            let psi_xx = (modulated_value(&now, x + h) - 2.0 * psi + modulated_value(&now, x - h)) / (h * h);
            let density = psi.norm_sqr();
            let nonlinear: f64 = strengths
                .iter()
                .enumerate()
                .map(|(i, g)| g * density.powi(i as i32 + 1))
                .sum();
            let r = I * psi_t + 0.5 * psi_xx - (v.at(x) + nonlinear) * psi;
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}
