//! Catalog of named breather configurations: modulation plan, nonlinearity,
//! grid and solver defaults, and the observables each one is expected to
//! reproduce.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use serde::Serialize;

use crate::analytic::{gpe_residual, modulated_psi, GpeProbe, BREATHER_COUPLING};
use crate::error::{Error, Result};
use crate::field::{SpatialGrid, WaveField};
use crate::modulation::{ModulationPlan, NonlinearitySpec, OffsetPolicy, PotentialCoefficients, TimeFunction};
use crate::propagator::{Dynamics, ModelKind};

pub const SCENARIO_NAMES: [&str; 8] = [
    "vanishing_static",
    "vanishing_moving",
    "flying_bird",
    "flying_bird_moving",
    "seesaw",
    "combined_periodic",
    "combined_quasiperiodic",
    "npse_comparison",
];

/// Largest residual accepted by the construction-time self-check.
pub const SELF_CHECK_TOLERANCE: f64 = 5e-3;

/// Window `[0, t]` of the construction-time self-check.
pub const SELF_CHECK_WINDOW: f64 = 5.0;

/// Amplitude of the comparison scenario.
pub const NPSE_AMPLITUDE: f64 = 0.1;

/// Breathing targets with a relative tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expected {
    pub period: f64,
    pub frequency: f64,
    pub amplitude_min: Option<f64>,
    pub amplitude_max: Option<f64>,
    /// Spatial FWHM of `|psi|^2` at the density peaks.
    pub peak_width: f64,
    /// Relative tolerance on period, frequency and extrema.
    pub tolerance: f64,
    /// Relative tolerance on the width.
    pub width_tolerance: f64,
}

/// Box and step defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericsDefaults {
    /// Clearance on each side of the breather's center-of-mass range.
    pub padding: f64,
    pub dx: f64,
    pub dt: f64,
}

impl NumericsDefaults {
    const DESK: Self = Self {
        padding: 20.0,
        dx: 0.01,
        dt: 1e-4,
    };

    /// Defaults rescaled to the natural length `1 / a` and time `1 / a^2`.
    fn scaled(a: f64) -> Self {
        Self {
            padding: Self::DESK.padding / a,
            dx: Self::DESK.dx / a,
            dt: Self::DESK.dt / (a * a),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub plan: ModulationPlan,
    pub nonlinearity: NonlinearitySpec,
    pub model: ModelKind,
    pub numerics: NumericsDefaults,
    /// Window `[0, horizon]` for extracting breathing observables.
    pub horizon: f64,
    pub stability_horizon: f64,
    pub expected: Option<Expected>,
    /// Set when the scenario's modulation is not fully pinned down.
    pub experimental: bool,
    /// Closed-form potential quoted for this configuration, if any.
    pub reference_potential: Option<fn(f64) -> PotentialCoefficients>,
}

/// `a(t) = 1 / (1 + cos^2 t)` with closed-form derivatives.
pub fn flying_bird_amplitude() -> TimeFunction {
    let q = |t: f64| 1.0 + t.cos().powi(2);
    TimeFunction::with_derivatives(
        move |t| 1.0 / q(t),
        move |t| (2.0 * t).sin() / q(t).powi(2),
        move |t| 2.0 * (2.0 * t).cos() / q(t).powi(2) + 2.0 * (2.0 * t).sin().powi(2) / q(t).powi(3),
    )
}

/// `int_0^t (1 + cos^2 s)^-2 ds`, continued across the branches of `atan`.
pub fn flying_bird_tau(t: f64) -> f64 {
    let theta = t.sin().atan2(SQRT_2 * t.cos());
    let theta = theta + 2.0 * PI * ((t - theta) / (2.0 * PI)).round();
    3.0 / (4.0 * SQRT_2) * theta - t.sin() * t.cos() / (4.0 * (1.0 + t.cos().powi(2)))
}

/// Moving flying-bird shift
/// `-tan t / (16 (tan^2 t + 2)) + (3 sqrt2 / 32) atan(tan t / sqrt2)`,
/// continued through `t = pi/2 + k pi`. It equals `tau / 4`.
pub fn flying_bird_shift() -> TimeFunction {
    let a = flying_bird_amplitude();
    let a2 = a.clone();
    TimeFunction::with_derivatives(
        |t| flying_bird_tau(t) / 4.0,
        move |t| a.value(t).powi(2) / 4.0,
        move |t| a2.value(t) * a2.derivative(t) / 2.0,
    )
}

fn sine(omega: f64, sign: f64) -> TimeFunction {
    TimeFunction::with_derivatives(
        move |t| sign * (omega * t).sin(),
        move |t| sign * omega * (omega * t).cos(),
        move |t| -sign * omega * omega * (omega * t).sin(),
    )
}

fn flying_bird_potential(t: f64) -> PotentialCoefficients {
    PotentialCoefficients {
        f1: 2.0 * (2.0 * t).cos() / (3.0 + (2.0 * t).cos()),
        f2: 0.0,
        f3: 0.0,
    }
}

fn seesaw_potential(t: f64) -> PotentialCoefficients {
    PotentialCoefficients {
        f1: 0.0,
        f2: t.sin(),
        f3: 0.0,
    }
}

fn combined_potential(t: f64) -> PotentialCoefficients {
    PotentialCoefficients {
        f1: 2.0 * (2.0 * t).cos() / (3.0 + (2.0 * t).cos()),
        f2: -(1.0 + 5.0 * t.cos().powi(2)) * t.sin(),
        f3: 0.0,
    }
}

const STATIC_TARGETS: Expected = Expected {
    period: 1.57,
    frequency: 0.64,
    amplitude_min: Some(4.0),
    amplitude_max: Some(16.0),
    peak_width: 0.39,
    tolerance: 0.02,
    width_tolerance: 0.1,
};

#[allow(clippy::approx_constant)]
const FLYING_BIRD_TARGETS: Expected = Expected {
    period: 3.14,
    frequency: 0.32,
    amplitude_min: Some(2.0),
    amplitude_max: Some(16.0),
    peak_width: 0.54,
    tolerance: 0.05,
    width_tolerance: 0.1,
};

const SEESAW_TARGETS: Expected = Expected {
    peak_width: 0.41,
    ..STATIC_TARGETS
};

#[allow(clippy::approx_constant)]
const COMBINED_TARGETS: Expected = Expected {
    period: 3.14,
    frequency: 0.32,
    amplitude_min: None,
    amplitude_max: None,
    peak_width: 0.56,
    tolerance: 0.05,
    width_tolerance: 0.1,
};

fn unit_amplitude(b: TimeFunction, offset: OffsetPolicy) -> ModulationPlan {
    ModulationPlan::new(TimeFunction::constant(1.0), b)
        .with_tau(|t| t)
        .with_offset(offset)
}

fn flying_bird_plan(b: TimeFunction, offset: OffsetPolicy) -> ModulationPlan {
    ModulationPlan::new(flying_bird_amplitude(), b)
        .with_tau(flying_bird_tau)
        .with_offset(offset)
}

/// Static breather with constant amplitude `a`, `V = 0` and the
/// nonpolynomial nonlinearity. Its horizon covers six density peaks.
pub fn npse_scenario(a: f64) -> Result<ScenarioSpec> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidInput(format!("amplitude must be positive, got {a}")));
    }
    let plan = ModulationPlan::new(TimeFunction::constant(a), TimeFunction::constant(0.0))
        .with_tau(move |t| a * a * t)
        .with_offset(OffsetPolicy::CancelConstantPotential);
    Ok(ScenarioSpec {
        name: "npse_comparison".into(),
        plan,
        nonlinearity: NonlinearitySpec::cubic(BREATHER_COUPLING),
        model: ModelKind::Nonpolynomial,
        numerics: NumericsDefaults::scaled(a),
        // peaks at tau = pi/4 + k pi/2
        horizon: (FRAC_PI_4 + 5.5 * FRAC_PI_2) / (a * a),
        stability_horizon: 100.0 / (a * a),
        expected: None,
        experimental: false,
        reference_potential: None,
    })
}

/// Looks up a scenario by name without running the self-check.
pub fn scenario_unchecked(name: &str) -> Result<ScenarioSpec> {
    use OffsetPolicy::{CancelConstantPotential as Cancel, Zero};
    let base = |plan, horizon, expected, reference_potential| ScenarioSpec {
        name: name.to_string(),
        plan,
        nonlinearity: NonlinearitySpec::cubic(BREATHER_COUPLING),
        model: ModelKind::Polynomial,
        numerics: NumericsDefaults::DESK,
        horizon,
        stability_horizon: 100.0,
        expected,
        experimental: false,
        reference_potential,
    };
    let zero = || TimeFunction::constant(0.0);
    Ok(match name {
        "vanishing_static" => base(unit_amplitude(zero(), Zero), 8.0, Some(STATIC_TARGETS), None),
        "vanishing_moving" => base(
            unit_amplitude(TimeFunction::linear(1.0), Cancel),
            8.0,
            Some(STATIC_TARGETS),
            None,
        ),
        "flying_bird" => base(
            flying_bird_plan(zero(), Zero),
            40.0,
            Some(FLYING_BIRD_TARGETS),
            Some(flying_bird_potential as fn(f64) -> PotentialCoefficients),
        ),
        "flying_bird_moving" => ScenarioSpec {
            experimental: true,
            ..base(flying_bird_plan(flying_bird_shift(), Cancel), 40.0, None, None)
        },
        "seesaw" => base(
            unit_amplitude(sine(1.0, -1.0), Cancel),
            8.0,
            Some(SEESAW_TARGETS),
            Some(seesaw_potential),
        ),
        "combined_periodic" => base(
            flying_bird_plan(sine(1.0, 1.0), Cancel),
            40.0,
            Some(COMBINED_TARGETS),
            Some(combined_potential),
        ),
        "combined_quasiperiodic" => base(flying_bird_plan(sine(SQRT_2, 1.0), Cancel), 40.0, None, None),
        "npse_comparison" => npse_scenario(NPSE_AMPLITUDE)?,
        other => return Err(Error::UnknownScenario(other.to_string())),
    })
}

/// Looks up a scenario by name. Non-experimental scenarios must pass the
/// analytic self-check over `[0, SELF_CHECK_WINDOW]`.
pub fn build_scenario(name: &str) -> Result<ScenarioSpec> {
    let spec = scenario_unchecked(name)?;
    if !spec.experimental {
        let residual = spec.self_check()?;
        if !(residual < SELF_CHECK_TOLERANCE) {
            return Err(Error::SelfCheck {
                name: spec.name.clone(),
                residual,
            });
        }
    }
    Ok(spec)
}

impl ScenarioSpec {
    /// Grid covering the center-of-mass range over `[0, horizon]` plus
    /// `padding` on each side.
    pub fn grid(&self, horizon: f64, padding: Option<f64>, dx: Option<f64>) -> Result<SpatialGrid> {
        let padding = padding.unwrap_or(self.numerics.padding);
        let dx = dx.unwrap_or(self.numerics.dx);
        if !(padding > 0.0 && padding.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "box half-width must be positive, got {padding}"
            )));
        }
        let samples = 2000;
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for i in 0..=samples {
            let c = self.plan.center(horizon * i as f64 / samples as f64)?;
            lo = lo.min(c);
            hi = hi.max(c);
        }
        // keep the box symmetric about an integer multiple of dx
        let shift = ((lo + hi) / 2.0 / dx).round() * dx;
        let half = (hi - lo) / 2.0 + padding;
        let half = (half / dx).ceil() * dx;
        SpatialGrid::with_spacing(shift - half, shift + half, dx)
    }

    /// Desk-scale grid for the scenario's own horizon.
    pub fn default_grid(&self) -> Result<SpatialGrid> {
        self.grid(self.horizon, None, None)
    }

    /// Exact modulated breather at `t`.
    pub fn exact(&self, grid: &SpatialGrid, t: f64) -> Result<WaveField> {
        modulated_psi(&self.plan, grid, t)
    }

    pub fn initial_field(&self, grid: &SpatialGrid) -> Result<WaveField> {
        self.exact(grid, 0.0)
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics::from_plan(&self.plan, &self.nonlinearity, self.model)
    }

    /// The same configuration with the cubic nonlinearity.
    pub fn cubic_twin(&self) -> Self {
        Self {
            model: ModelKind::Polynomial,
            ..self.clone()
        }
    }

    /// Analytic residual over `[0, SELF_CHECK_WINDOW]` on the default grid.
    pub fn self_check(&self) -> Result<f64> {
        let grid = self.grid(SELF_CHECK_WINDOW, None, None)?;
        let mut probe = GpeProbe::new(0.0, SELF_CHECK_WINDOW);
        probe.x_stride = (grid.len() / 400).max(1);
        gpe_residual(&self.plan, &self.nonlinearity, &grid, &probe)
    }
}
