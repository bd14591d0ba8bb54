//! Kinematics of the similarity map `psi = sqrt(a) exp(i eta) Phi(a x + b, tau)`.
//!
//! A [`ModulationPlan`] carries the width modulation `a(t)`, the offset
//! `b(t)` and the policy for the phase offset `c(t)`. From these it derives
//! the rescaled time `tau`, the quadratic phase `eta`, the potential
//! `V = f1 x^2 + f2 x + f3` and the time-dependent nonlinearity strengths.

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const FIRST_DERIVATIVE_STEP: f64 = 1e-3;
const SECOND_DERIVATIVE_STEP: f64 = 2e-3;
const RESIDUAL_STEP: f64 = 1e-5;

/// Central difference with one Richardson extrapolation, `O(h^4)`.
fn richardson_first(f: &ScalarFn, t: f64, h: f64) -> f64 {
    let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

fn richardson_second(f: &ScalarFn, t: f64, h: f64) -> f64 {
    let f0 = f(t);
    let d = |h: f64| (f(t + h) - 2.0 * f0 + f(t - h)) / (h * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// A scalar function of time with optional closed-form derivatives.
///
/// Missing derivatives fall back to Richardson-extrapolated central
/// differences.
#[derive(Clone)]
pub struct TimeFunction {
    value: ScalarFn,
    first: Option<ScalarFn>,
    second: Option<ScalarFn>,
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeFunction")
            .field("closed_form_derivatives", &self.has_closed_form_derivatives())
            .finish()
    }
}

impl TimeFunction {
    pub fn new(value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            first: None,
            second: None,
        }
    }

    pub fn with_derivatives(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        first: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            first: Some(Arc::new(first)),
            second: Some(Arc::new(second)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_derivatives(move |_| c, |_| 0.0, |_| 0.0)
    }

    /// `t -> t`.
    pub fn linear(slope: f64) -> Self {
        Self::with_derivatives(move |t| slope * t, move |_| slope, |_| 0.0)
    }

    /// Same values, derivatives by finite differences.
    pub fn numeric(&self) -> Self {
        Self {
            value: self.value.clone(),
            first: None,
            second: None,
        }
    }

    pub fn has_closed_form_derivatives(&self) -> bool {
        self.first.is_some() && self.second.is_some()
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match &self.first {
            Some(d) => d(t),
            None => richardson_first(&self.value, t, FIRST_DERIVATIVE_STEP),
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match &self.second {
            Some(d) => d(t),
            None => richardson_second(&self.value, t, SECOND_DERIVATIVE_STEP),
        }
    }

    pub(crate) fn value_fn(&self) -> ScalarFn {
        self.value.clone()
    }
}

/// `F(t) = int_0^t f(s) ds` from a lazily grown table of panel integrals.
///
/// Each panel is integrated with 5-point Gauss-Legendre, so the table is
/// accurate to round-off for smooth integrands. Negative `t` uses a second
/// table running backwards from 0.
struct CumulativeIntegral {
    integrand: ScalarFn,
    panel: f64,
    forward: Mutex<Vec<f64>>,
    backward: Mutex<Vec<f64>>,
}

const GAUSS_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

impl CumulativeIntegral {
    fn new(integrand: ScalarFn) -> Self {
        Self {
            integrand,
            panel: 1.0 / 32.0,
            forward: Mutex::new(vec![0.0]),
            backward: Mutex::new(vec![0.0]),
        }
    }

    fn gauss(&self, lo: f64, hi: f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        GAUSS_NODES
            .iter()
            .zip(GAUSS_WEIGHTS)
            .map(|(&node, w)| w * (self.integrand)(mid + half * node))
            .sum::<f64>()
            * half
    }

    fn eval(&self, t: f64) -> f64 {
        let (table, sign) = if t >= 0.0 {
            (&self.forward, 1.0)
        } else {
            (&self.backward, -1.0)
        };
        let span = t.abs();
        let k = (span / self.panel).floor() as usize;
        let base = {
            let mut table = table.lock().unwrap_or_else(|e| e.into_inner());
            while table.len() <= k {
                let j = table.len() - 1;
                let lo = sign * j as f64 * self.panel;
                let hi = sign * (j + 1) as f64 * self.panel;
                let next = table[j] + self.gauss(lo, hi);
                table.push(next);
            }
            table[k]
        };
        let start = sign * k as f64 * self.panel;
        base + self.gauss(start, t)
    }
}

#[derive(Clone)]
enum Antiderivative {
    ClosedForm(ScalarFn),
    Quadrature(Arc<CumulativeIntegral>),
}

impl Antiderivative {
    fn quadrature(integrand: ScalarFn) -> Self {
        Antiderivative::Quadrature(Arc::new(CumulativeIntegral::new(integrand)))
    }

    fn eval(&self, t: f64) -> f64 {
        match self {
            Antiderivative::ClosedForm(f) => f(t),
            Antiderivative::Quadrature(q) => q.eval(t),
        }
    }
}

/// How the free phase offset `c(t)` is chosen.
#[derive(Clone, Debug)]
pub enum OffsetPolicy {
    /// `c = 0`.
    Zero,
    /// `c_t = -b_t^2 / (2 a^2)`, which makes `f3 = 0`; `c` by quadrature from `c(0) = 0`.
    CancelConstantPotential,
    Explicit(TimeFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicsSample {
    pub t: f64,
    pub a: f64,
    pub a_t: f64,
    pub a_tt: f64,
    pub b: f64,
    pub b_t: f64,
    pub b_tt: f64,
    pub c: f64,
    pub c_t: f64,
    pub tau: f64,
    pub rho: f64,
}

impl KinematicsSample {
    /// `zeta = a x + b`.
    pub fn zeta(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    /// `eta = -(a_t / 2a) x^2 - (b_t / a) x + c`.
    pub fn eta(&self, x: f64) -> f64 {
        -(self.a_t / (2.0 * self.a)) * x * x - (self.b_t / self.a) * x + self.c
    }

    pub fn eta_x(&self, x: f64) -> f64 {
        -(self.a_t / self.a) * x - self.b_t / self.a
    }

    pub fn potential(&self) -> PotentialCoefficients {
        let (a, a_t, b_t) = (self.a, self.a_t, self.b_t);
        PotentialCoefficients {
            f1: self.a_tt / (2.0 * a) - a_t * a_t / (a * a),
            f2: self.b_tt / a - 2.0 * a_t * b_t / (a * a),
            f3: -self.c_t - b_t * b_t / (2.0 * a * a),
        }
    }

    /// Center of the localized solution, `-b / a`.
    pub fn center(&self) -> f64 {
        -self.b / self.a
    }
}

/// `V(x) = f1 x^2 + f2 x + f3`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialCoefficients {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

impl PotentialCoefficients {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        (self.f1 * x + self.f2) * x + self.f3
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            f1: factor * self.f1,
            f2: factor * self.f2,
            f3: factor * self.f3,
        }
    }
}

#[derive(Clone)]
pub struct ModulationPlan {
    a: TimeFunction,
    b: TimeFunction,
    offset: OffsetPolicy,
    tau: Antiderivative,
    c: Option<Antiderivative>,
}

impl fmt::Debug for ModulationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModulationPlan")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("offset", &self.offset)
            .field("tau_closed_form", &matches!(self.tau, Antiderivative::ClosedForm(_)))
            .finish()
    }
}

impl ModulationPlan {
    /// Plan with `c = 0` and `tau = int_0^t a^2` by quadrature.
    pub fn new(a: TimeFunction, b: TimeFunction) -> Self {
        let a_value = a.value_fn();
        let tau = Antiderivative::quadrature(Arc::new(move |t| a_value(t).powi(2)));
        Self {
            a,
            b,
            offset: OffsetPolicy::Zero,
            tau,
            c: None,
        }
    }

    /// `a = 1`, `b = 0`, `c = 0`: the Ansatz reduces to the identity.
    pub fn identity() -> Self {
        Self::new(TimeFunction::constant(1.0), TimeFunction::constant(0.0)).with_tau(|t| t)
    }

    pub fn with_offset(mut self, offset: OffsetPolicy) -> Self {
        self.c = match &offset {
            OffsetPolicy::Zero | OffsetPolicy::Explicit(_) => None,
            OffsetPolicy::CancelConstantPotential => {
                let (a, b) = (self.a.clone(), self.b.clone());
                Some(Antiderivative::quadrature(Arc::new(move |t| {
                    let b_t = b.derivative(t);
                    let a = a.value(t);
                    -b_t * b_t / (2.0 * a * a)
                })))
            }
        };
        self.offset = offset;
        self
    }

    /// Closed form for `tau(t) = int_0^t a(s)^2 ds`.
    pub fn with_tau(mut self, tau: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.tau = Antiderivative::ClosedForm(Arc::new(tau));
        self
    }

    /// The same plan with every derivative evaluated by finite differences.
    pub fn with_numeric_derivatives(&self) -> Self {
        let plan = Self {
            a: self.a.numeric(),
            b: self.b.numeric(),
            offset: match &self.offset {
                OffsetPolicy::Explicit(c) => OffsetPolicy::Explicit(c.numeric()),
                other => other.clone(),
            },
            tau: self.tau.clone(),
            c: None,
        };
        let offset = plan.offset.clone();
        plan.with_offset(offset)
    }

    pub fn a(&self) -> &TimeFunction {
        &self.a
    }

    pub fn b(&self) -> &TimeFunction {
        &self.b
    }

    pub fn offset(&self) -> &OffsetPolicy {
        &self.offset
    }

    pub fn amplitude(&self, t: f64) -> Result<f64> {
        let a = self.a.value(t);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::NonPositiveAmplitude { t, value: a });
        }
        Ok(a)
    }

    pub fn tau(&self, t: f64) -> f64 {
        self.tau.eval(t)
    }

    pub fn kinematics(&self, t: f64) -> Result<KinematicsSample> {
        let a = self.amplitude(t)?;
        let a_t = self.a.derivative(t);
        let b_t = self.b.derivative(t);
        let (c, c_t) = match &self.offset {
            OffsetPolicy::Zero => (0.0, 0.0),
            OffsetPolicy::CancelConstantPotential => {
                let c = self.c.as_ref().map_or(0.0, |c| c.eval(t));
                (c, -b_t * b_t / (2.0 * a * a))
            }
            OffsetPolicy::Explicit(c) => (c.value(t), c.derivative(t)),
        };
        Ok(KinematicsSample {
            t,
            a,
            a_t,
            a_tt: self.a.second_derivative(t),
            b: self.b.value(t),
            b_t,
            b_tt: self.b.second_derivative(t),
            c,
            c_t,
            tau: self.tau(t),
            rho: a.sqrt(),
        })
    }

    pub fn eta(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.kinematics(t)?.eta(x))
    }

    pub fn potential_coefficients(&self, t: f64) -> Result<PotentialCoefficients> {
        Ok(self.kinematics(t)?.potential())
    }

    /// Potential coefficients from `a`, `b` and the offset policy only.
    ///
    /// Skips the `tau` and `c` integrals, which the potential does not need.
    pub fn potential_fast(&self, t: f64) -> Result<PotentialCoefficients> {
        let a = self.amplitude(t)?;
        let a_t = self.a.derivative(t);
        let b_t = self.b.derivative(t);
        let c_t = match &self.offset {
            OffsetPolicy::Zero => 0.0,
            OffsetPolicy::CancelConstantPotential => -b_t * b_t / (2.0 * a * a),
            OffsetPolicy::Explicit(c) => c.derivative(t),
        };
        Ok(PotentialCoefficients {
            f1: self.a.second_derivative(t) / (2.0 * a) - a_t * a_t / (a * a),
            f2: self.b.second_derivative(t) / a - 2.0 * a_t * b_t / (a * a),
            f3: -c_t - b_t * b_t / (2.0 * a * a),
        })
    }

    /// Center-of-mass position `-b / a`.
    pub fn center(&self, t: f64) -> Result<f64> {
        Ok(-self.b.value(t) / self.amplitude(t)?)
    }
}

/// Constant coefficients `G_{2n+1}` of the autonomous equation, `n = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    coefficients: Vec<f64>,
}

impl NonlinearitySpec {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidInput("need at least the cubic coefficient".into()));
        }
        Ok(Self { coefficients })
    }

    pub fn cubic(g: f64) -> Self {
        Self { coefficients: vec![g] }
    }

    /// `G_{2n+1}` for `n >= 1`.
    pub fn coefficient(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.coefficients.get(i)).copied()
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `g_{2n+1}(t) = G_{2n+1} a(t)^{2-n}`.
    pub fn strength(&self, n: usize, plan: &ModulationPlan, t: f64) -> Result<f64> {
        let g = self
            .coefficient(n)
            .ok_or_else(|| Error::InvalidInput(format!("no coefficient of order {}", 2 * n + 1)))?;
        Ok(g * plan.amplitude(t)?.powi(2 - n as i32))
    }
}

/// `g_3(t) = G_3 a(t)`.
pub fn cubic_strength(spec: &NonlinearitySpec, plan: &ModulationPlan, t: f64) -> Result<f64> {
    spec.strength(1, plan, t)
}

/// Absolute residuals of the three constraint equations, by central
/// differences in `t` with step `1e-5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResiduals {
    /// `|tau_t - zeta_x^2|`
    pub r_tau: f64,
    /// `|eta_x + zeta_t / zeta_x|`
    pub r_eta: f64,
    /// `|rho_t + rho eta_xx / 2|`
    pub r_rho: f64,
}

impl ConsistencyResiduals {
    pub fn max(&self) -> f64 {
        self.r_tau.max(self.r_eta).max(self.r_rho)
    }
}

pub fn consistency_residuals(plan: &ModulationPlan, t: f64, x_probe: f64) -> Result<ConsistencyResiduals> {
    let h = RESIDUAL_STEP;
    let k = plan.kinematics(t)?;
    let (before, after) = (plan.amplitude(t - h)?, plan.amplitude(t + h)?);

    let tau_t = (plan.tau(t + h) - plan.tau(t - h)) / (2.0 * h);
    let zeta = |s: f64, a: f64| a * x_probe + plan.b.value(s);
    let zeta_t = (zeta(t + h, after) - zeta(t - h, before)) / (2.0 * h);
    let rho_t = (after.sqrt() - before.sqrt()) / (2.0 * h);
    let eta_xx = -k.a_t / k.a;

    Ok(ConsistencyResiduals {
        r_tau: (tau_t - k.a * k.a).abs(),
        r_eta: (k.eta_x(x_probe) + zeta_t / k.a).abs(),
        r_rho: (rho_t + 0.5 * k.rho * eta_xx).abs(),
    })
}
