//! End-to-end runs: propagate a scenario, record its breathing trace,
//! extract observables and write CSV traces plus a JSON summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::Serialize;

use crate::analytic::BREATHER_COUPLING;
use crate::error::{Error, Result};
use crate::field::{moments, perturb, SpatialGrid, TimeSeries, WaveField};
use crate::modulation::cubic_strength;
use crate::observables::{breathing_metrics_with_widths, peak_delay, BreathingReport, Envelope};
use crate::propagator::{propagate, ModelKind, SolverConfig};
use crate::scenarios::{scenario_unchecked, Expected, ScenarioSpec, SELF_CHECK_TOLERANCE, SELF_CHECK_WINDOW};

pub const SUMMARY_SCHEMA: u32 = 1;

/// Band around the unperturbed envelope inside which a run counts as stable.
pub const STABILITY_BAND: (f64, f64) = (0.8, 1.2);

/// One row of the breathing trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub max_density: f64,
    pub norm: f64,
    pub com: f64,
    pub rms_width: f64,
    /// Spatial FWHM of `|psi|^2`.
    pub fwhm: f64,
}

impl TraceRow {
    pub fn measure(t: f64, field: &WaveField) -> Result<Self> {
        let m = moments(field)?;
        Ok(Self {
            t,
            max_density: field.max_density().1,
            norm: m.norm,
            com: m.center_of_mass,
            rms_width: m.rms_width,
            fwhm: field.density_fwhm(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Result<TimeSeries> {
        TimeSeries::new(
            self.rows.iter().map(|r| r.t).collect(),
            self.rows.iter().map(f).collect(),
        )
    }

    pub fn max_density(&self) -> Result<TimeSeries> {
        self.column(|r| r.max_density)
    }

    pub fn com(&self) -> Result<TimeSeries> {
        self.column(|r| r.com)
    }

    pub fn fwhm(&self) -> Result<TimeSeries> {
        self.column(|r| r.fwhm)
    }

    pub fn norm(&self) -> Result<TimeSeries> {
        self.column(|r| r.norm)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "max_density", "norm", "com", "rms_width", "fwhm"])?;
        for r in &self.rows {
            w.write_record([r.t, r.max_density, r.norm, r.com, r.rms_width, r.fwhm].map(float))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Fully resolved numerical settings of one propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settings {
    pub grid: SpatialGrid,
    pub dt: f64,
    /// Solver steps between trace rows.
    pub snapshot_stride: usize,
    pub horizon: f64,
    pub perturbation: f64,
    pub seed: u64,
}

impl Settings {
    /// Scenario defaults with the scenario's own horizon.
    pub fn defaults(spec: &ScenarioSpec) -> Result<Self> {
        Ok(Self {
            grid: spec.default_grid()?,
            dt: spec.numerics.dt,
            snapshot_stride: 100,
            horizon: spec.horizon,
            perturbation: 0.0,
            seed: 0,
        })
    }
}

/// Propagates the scenario's initial breather (perturbed per `settings`)
/// with `model` and records the trace. `on_field` sees every traced field.
pub fn simulate(
    spec: &ScenarioSpec,
    model: ModelKind,
    settings: &Settings,
    mut on_field: impl FnMut(f64, &WaveField),
) -> Result<Trace> {
    let exact = spec.initial_field(&settings.grid)?;
    let initial = perturb(&exact, settings.perturbation, settings.seed)?;
    let config = SolverConfig::new(settings.dt, settings.snapshot_stride)?;
    let dynamics = ScenarioSpec { model, ..spec.clone() }.dynamics();
    let mut trace = Trace::default();
    let mut failure = None;
    propagate(&initial, &dynamics, &config, 0.0, settings.horizon, |t, field| {
        if failure.is_some() {
            return;
        }
        match TraceRow::measure(t, field) {
            Ok(row) => trace.rows.push(row),
            Err(e) => failure = Some(e),
        }
        on_field(t, field);
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}

/// `max_x |psi|^2` of the exact breather on `grid` at the trace times.
pub fn exact_envelope(
    spec: &ScenarioSpec,
    grid: &SpatialGrid,
    times: impl IntoIterator<Item = f64>,
) -> Result<Envelope> {
    let values = times
        .into_iter()
        .map(|t| Ok((t, spec.exact(grid, t)?.max_density().1)))
        .collect::<Result<Vec<_>>>()?;
    let (times, values): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
    Envelope::of(&TimeSeries::new(times, values)?).ok_or_else(|| Error::InsufficientData("empty trace".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    /// No perturbation was applied.
    Unperturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stability {
    pub verdict: Verdict,
    pub envelope: Envelope,
    pub reference_envelope: Envelope,
    pub band: (f64, f64),
}

/// Compares the trace envelope with the exact breather's on the same grid.
pub fn assess_stability(spec: &ScenarioSpec, settings: &Settings, trace: &Trace) -> Result<Stability> {
    let envelope = Envelope::of(&trace.max_density()?).ok_or_else(|| Error::InsufficientData("empty trace".into()))?;
    let reference_envelope = exact_envelope(spec, &settings.grid, trace.rows.iter().map(|r| r.t))?;
    let verdict = if settings.perturbation == 0.0 {
        Verdict::Unperturbed
    } else if envelope.within(&reference_envelope, STABILITY_BAND.0, STABILITY_BAND.1) {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    Ok(Stability {
        verdict,
        envelope,
        reference_envelope,
        band: STABILITY_BAND,
    })
}

/// `max_t |g(t)| max_x |psi|^2`.
pub fn max_coupled_density(spec: &ScenarioSpec, trace: &Trace) -> Result<f64> {
    trace.rows.iter().try_fold(0.0f64, |worst, r| {
        let g = cubic_strength(&spec.nonlinearity, &spec.plan, r.t)?;
        Ok(worst.max(g.abs() * r.max_density))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Cubic,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: String,
    pub dt: Option<f64>,
    pub dx: Option<f64>,
    /// Clearance around the breather's center-of-mass range.
    pub box_half_width: Option<f64>,
    pub horizon: Option<f64>,
    pub perturbation: f64,
    pub seed: u64,
    pub snapshot_stride: usize,
    /// Write every n-th traced field to `snapshots.csv`.
    pub field_every: Option<usize>,
    pub compare: Option<Comparison>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            dt: None,
            dx: None,
            box_half_width: None,
            horizon: None,
            perturbation: 0.0,
            seed: 0,
            snapshot_stride: 100,
            field_every: None,
            compare: None,
            out: out.into(),
        }
    }

    /// Scenario plus resolved settings.
    pub fn resolve(&self) -> Result<(ScenarioSpec, Settings)> {
        let spec = scenario_unchecked(&self.scenario)?;
        let positive = |name: &str, v: Option<f64>| match v {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
            _ => Ok(()),
        };
        positive("dt", self.dt)?;
        positive("dx", self.dx)?;
        positive("box", self.box_half_width)?;
        positive("horizon", self.horizon)?;
        if let Some(0) = self.field_every {
            return Err(Error::InvalidInput("field snapshot interval must be at least 1".into()));
        }
        let horizon = self.horizon.unwrap_or(spec.horizon);
        let settings = Settings {
            grid: spec.grid(horizon, self.box_half_width, self.dx)?,
            dt: self.dt.unwrap_or(spec.numerics.dt),
            snapshot_stride: self.snapshot_stride,
            horizon,
            perturbation: self.perturbation,
            seed: self.seed,
        };
        SolverConfig::new(settings.dt, settings.snapshot_stride)?;
        if !(self.perturbation >= 0.0 && self.perturbation < 1.0) {
            return Err(Error::InvalidInput(format!(
                "perturbation must lie in [0, 1), got {}",
                self.perturbation
            )));
        }
        Ok((spec, settings))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub experimental: bool,
    pub model: ModelKind,
    pub coupling: f64,
    pub default_horizon: f64,
    pub expected: Option<Expected>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualCheck {
    pub gpe_residual: f64,
    pub window: (f64, f64),
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub model: Comparison,
    pub max_coupled_density: f64,
    pub max_coupled_density_reference: f64,
    /// `(peak index, run peak time - comparison peak time)`.
    pub delays: Vec<(usize, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub version: String,
    pub generated_at: String,
    pub scenario: ScenarioInfo,
    pub settings: Settings,
    pub residual: ResidualCheck,
    pub report: Option<BreathingReport>,
    pub analysis_error: Option<String>,
    pub max_coupled_density: f64,
    pub norm_drift: f64,
    pub stability: Stability,
    pub comparison: Option<ComparisonSummary>,
}

/// Result of [`run`]: the summary is written even when the analysis fails,
/// in which case `status` carries the error.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub trace: Trace,
    pub status: Result<()>,
}

fn write_fields(path: &Path, fields: &[(f64, WaveField)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["t", "x", "re", "im", "density"])?;
    for (t, field) in fields {
        for (x, z) in field.grid().points().zip(field.amplitudes()) {
            w.write_record([*t, x, z.re, z.im, z.norm_sqr()].map(float))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_delays(path: &Path, reference: &TimeSeries, candidate: &TimeSeries, delays: &[(usize, f64)]) -> Result<()> {
    use crate::observables::find_peaks;
    let (r, c) = (find_peaks(reference), find_peaks(candidate));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["peak_index", "reference_time", "candidate_time", "delay"])?;
    for &(i, d) in delays {
        w.write_record([i.to_string(), float(r[i].time), float(c[i].time), float(d)])?;
    }
    w.flush()?;
    Ok(())
}

fn timestamp() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

/// Runs one configuration and writes `trace.csv`, `summary.json` and, when
/// requested, `snapshots.csv`, `trace_cubic.csv` and `delays.csv` into
/// `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let (spec, settings) = config.resolve()?;
    fs::create_dir_all(&config.out)?;

    let residual = spec.self_check()?;
    let residual = ResidualCheck {
        gpe_residual: residual,
        window: (0.0, SELF_CHECK_WINDOW),
        tolerance: SELF_CHECK_TOLERANCE,
        passed: residual < SELF_CHECK_TOLERANCE,
    };
    if !residual.passed && !spec.experimental {
        return Err(Error::SelfCheck {
            name: spec.name.clone(),
            residual: residual.gpe_residual,
        });
    }

    let mut fields = Vec::new();
    let mut traced = 0usize;
    let trace = simulate(&spec, spec.model, &settings, |t, field| {
        if let Some(every) = config.field_every {
            if traced.is_multiple_of(every) {
                fields.push((t, field.clone()));
            }
        }
        traced += 1;
    })?;
    trace.write_csv(&config.out.join("trace.csv"))?;
    if config.field_every.is_some() {
        write_fields(&config.out.join("snapshots.csv"), &fields)?;
    }

    let max_density = trace.max_density()?;
    let analysis = breathing_metrics_with_widths(&max_density, &trace.fwhm()?);
    let stability = assess_stability(&spec, &settings, &trace)?;
    let norms = trace.norm()?;
    let first = norms.values()[0];
    let norm_drift = norms
        .values()
        .iter()
        .map(|n| (n - first).abs() / first)
        .fold(0.0, f64::max);

    let comparison = match config.compare {
        None => None,
        Some(Comparison::Cubic) => {
            let twin = spec.cubic_twin();
            let reference = simulate(&twin, ModelKind::Polynomial, &settings, |_, _| {})?;
            reference.write_csv(&config.out.join("trace_cubic.csv"))?;
            let reference_series = reference.max_density()?;
            let (delays, error) = match peak_delay(&reference_series, &max_density, None) {
                Ok(d) => (d, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            write_delays(&config.out.join("delays.csv"), &reference_series, &max_density, &delays)?;
            Some(ComparisonSummary {
                model: Comparison::Cubic,
                max_coupled_density: max_coupled_density(&spec, &trace)?,
                max_coupled_density_reference: max_coupled_density(&twin, &reference)?,
                delays,
                error,
            })
        }
    };

    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        version: env!("CARGO_PKG_VERSION").to_string(),
        generated_at: timestamp(),
        scenario: ScenarioInfo {
            name: spec.name.clone(),
            experimental: spec.experimental,
            model: spec.model,
            coupling: spec.nonlinearity.coefficient(1).unwrap_or(BREATHER_COUPLING),
            default_horizon: spec.horizon,
            expected: spec.expected,
        },
        settings,
        residual,
        report: analysis.as_ref().ok().cloned(),
        analysis_error: analysis.as_ref().err().map(|e| e.to_string()),
        max_coupled_density: max_coupled_density(&spec, &trace)?,
        norm_drift,
        stability,
        comparison,
    };
    let mut out = BufWriter::new(File::create(config.out.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut out, &summary)?;
    out.write_all(b"\n")?;
    out.flush()?;

    let status = analysis.map(|_| ());
    Ok(RunOutcome { summary, trace, status })
}
