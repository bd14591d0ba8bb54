//! Breathing observables extracted from time traces: peak times and
//! heights, period, amplitude envelope, peak widths, center-of-mass tracks
//! and peak-by-peak delays between two runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{moments, TimeSeries, WaveField};
use crate::modulation::ModulationPlan;

/// Extrema whose rise above the neighbouring opposite extremum is below
/// this fraction of the series range are treated as ripple.
const MIN_PROMINENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

/// Vertex of the parabola through three samples (non-uniform spacing allowed).
fn refine(times: &[f64], values: &[f64], i: usize) -> (f64, f64) {
    let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
    let (v0, v1, v2) = (values[i - 1], values[i], values[i + 1]);
    // Newton form around t1.
    let d01 = (v1 - v0) / (t1 - t0);
    let d12 = (v2 - v1) / (t2 - t1);
    let curvature = (d12 - d01) / (t2 - t0);
    if curvature == 0.0 {
        return (t1, v1);
    }
    // p(t) = v1 + s (t - t1) + curvature (t - t1)^2, s = slope at t1
    let slope = d01 + curvature * (t1 - t0);
    let offset = (-slope / (2.0 * curvature)).clamp(t0 - t1, t2 - t1);
    (t1 + offset, v1 + slope * offset + curvature * offset * offset)
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Peak,
    Trough,
}

/// Alternating peaks and troughs with ripple removed, refined by quadratic
/// interpolation.
fn extrema(series: &TimeSeries) -> Vec<(Kind, Extremum)> {
    let (t, v) = (series.times(), series.values());
    if v.len() < 3 {
        return Vec::new();
    }
    let mut raw: Vec<(Kind, usize)> = Vec::new();
    for i in 1..v.len() - 1 {
        let kind = if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            Kind::Peak
        } else if v[i] < v[i - 1] && v[i] <= v[i + 1] {
            Kind::Trough
        } else {
            continue;
        };
        match raw.last_mut() {
            // keep the more extreme of two same-kind neighbours
            Some((last_kind, last)) if *last_kind == kind => {
                let better = match kind {
                    Kind::Peak => v[i] > v[*last],
                    Kind::Trough => v[i] < v[*last],
                };
                if better {
                    *last = i;
                }
            }
            _ => raw.push((kind, i)),
        }
    }

    let range = series.max().unwrap_or(0.0) - series.min().unwrap_or(0.0);
    let threshold = MIN_PROMINENCE * range;
    loop {
        let weakest = raw
            .windows(2)
            .enumerate()
            .map(|(j, w)| (j, (v[w[0].1] - v[w[1].1]).abs()))
            .filter(|&(_, d)| d < threshold)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = weakest else { break };
        raw.drain(j..j + 2);
        // merging may leave two same-kind neighbours
        let mut k = 1;
        while k < raw.len() {
            if raw[k].0 == raw[k - 1].0 {
                let (a, b) = (raw[k - 1].1, raw[k].1);
                let keep_second = match raw[k].0 {
                    Kind::Peak => v[b] > v[a],
                    Kind::Trough => v[b] < v[a],
                };
                raw.remove(if keep_second { k - 1 } else { k });
            } else {
                k += 1;
            }
        }
    }

    raw.into_iter()
        .map(|(kind, i)| {
            let (time, value) = refine(t, v, i);
            (kind, Extremum { index: i, time, value })
        })
        .collect()
}

/// Local maxima refined by quadratic interpolation.
pub fn find_peaks(series: &TimeSeries) -> Vec<Extremum> {
    extrema(series)
        .into_iter()
        .filter(|(k, _)| *k == Kind::Peak)
        .map(|(_, e)| e)
        .collect()
}

pub fn find_troughs(series: &TimeSeries) -> Vec<Extremum> {
    extrema(series)
        .into_iter()
        .filter(|(k, _)| *k == Kind::Trough)
        .map(|(_, e)| e)
        .collect()
}

/// Spacings between consecutive peaks.
pub fn peak_spacings(series: &TimeSeries) -> Vec<f64> {
    find_peaks(series).windows(2).map(|w| w[1].time - w[0].time).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Population variance of the inter-peak spacings.
pub fn spacing_variance(series: &TimeSeries) -> Result<f64> {
    let spacings = peak_spacings(series);
    if spacings.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 peaks for a spacing variance, found {}",
            spacings.len() + 1
        )));
    }
    Ok(variance(&spacings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreathingReport {
    /// Median inter-peak spacing.
    pub period: f64,
    pub period_mean: f64,
    pub period_std: f64,
    /// `1 / period`.
    pub frequency: f64,
    /// Lowest refined trough.
    pub amplitude_min: f64,
    /// Highest refined peak.
    pub amplitude_max: f64,
    /// Mean temporal width of the peaks, each measured halfway between the
    /// peak and the mean of its neighbouring troughs.
    pub fwhm_time: f64,
    /// Mean spatial FWHM of `|psi|^2` at the peak instants, when a width
    /// trace is supplied.
    pub peak_width: Option<f64>,
    pub peak_times: Vec<f64>,
    pub peak_heights: Vec<f64>,
    pub trough_heights: Vec<f64>,
}

/// Crossing of `level` walking from sample `start` in direction `step`.
fn crossing(times: &[f64], values: &[f64], start: usize, forward: bool, level: f64) -> Option<f64> {
    let mut i = start;
    loop {
        let j = if forward {
            (i + 1 < values.len()).then_some(i + 1)?
        } else {
            i.checked_sub(1)?
        };
        if values[j] <= level {
            let w = (values[i] - level) / (values[i] - values[j]);
            return Some(times[i] + w * (times[j] - times[i]));
        }
        i = j;
    }
}

/// Period, envelope and peak widths of a `max_x |psi|^2` trace.
pub fn breathing_metrics(series: &TimeSeries) -> Result<BreathingReport> {
    let all = extrema(series);
    let peaks: Vec<Extremum> = all.iter().filter(|(k, _)| *k == Kind::Peak).map(|(_, e)| *e).collect();
    let troughs: Vec<Extremum> = all
        .iter()
        .filter(|(k, _)| *k == Kind::Trough)
        .map(|(_, e)| *e)
        .collect();
    if peaks.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 breathing peaks, found {}",
            peaks.len()
        )));
    }
    if troughs.is_empty() {
        return Err(Error::InsufficientData("no troughs between peaks".into()));
    }

    let spacings: Vec<f64> = peaks.windows(2).map(|w| w[1].time - w[0].time).collect();
    let period = median(&spacings);

    let (t, v) = (series.times(), series.values());
    let mut widths = Vec::new();
    for (pos, (kind, peak)) in all.iter().enumerate() {
        if *kind != Kind::Peak {
            continue;
        }
        let neighbours: Vec<f64> = [pos.checked_sub(1), Some(pos + 1)]
            .into_iter()
            .flatten()
            .filter_map(|j| all.get(j))
            .filter(|(k, _)| *k == Kind::Trough)
            .map(|(_, e)| e.value)
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let level = 0.5 * (peak.value + mean(&neighbours));
        if let (Some(left), Some(right)) = (
            crossing(t, v, peak.index, false, level),
            crossing(t, v, peak.index, true, level),
        ) {
            widths.push(right - left);
        }
    }
    if widths.is_empty() {
        return Err(Error::InsufficientData("no peak is fully resolved".into()));
    }

    Ok(BreathingReport {
        period,
        period_mean: mean(&spacings),
        period_std: variance(&spacings).sqrt(),
        frequency: 1.0 / period,
        amplitude_min: troughs.iter().map(|e| e.value).fold(f64::INFINITY, f64::min),
        amplitude_max: peaks.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max),
        fwhm_time: mean(&widths),
        peak_width: None,
        peak_times: peaks.iter().map(|e| e.time).collect(),
        peak_heights: peaks.iter().map(|e| e.value).collect(),
        trough_heights: troughs.iter().map(|e| e.value).collect(),
    })
}

/// [`breathing_metrics`] plus the mean of `widths` (a spatial-FWHM trace on
/// any time grid) at the peak instants.
pub fn breathing_metrics_with_widths(max_density: &TimeSeries, widths: &TimeSeries) -> Result<BreathingReport> {
    let mut report = breathing_metrics(max_density)?;
    let at_peaks: Vec<f64> = report
        .peak_times
        .iter()
        .filter_map(|&t| widths.interpolate(t))
        .collect();
    if !at_peaks.is_empty() {
        report.peak_width = Some(mean(&at_peaks));
    }
    Ok(report)
}

/// Center of mass of each snapshot.
pub fn com_track<'a>(snapshots: impl IntoIterator<Item = (f64, &'a WaveField)>) -> Result<TimeSeries> {
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (t, field) in snapshots {
        times.push(t);
        values.push(moments(field)?.center_of_mass);
    }
    TimeSeries::new(times, values)
}

/// `max_t |com(t) + b(t) / a(t)|`.
pub fn com_deviation(track: &TimeSeries, plan: &ModulationPlan) -> Result<f64> {
    track
        .iter()
        .try_fold(0.0f64, |worst, (t, com)| Ok(worst.max((com - plan.center(t)?).abs())))
}

/// `candidate_peak_time - reference_peak_time`, peak by peak.
///
/// With `limit`, only the first `limit` peaks of each series are compared.
pub fn peak_delay(reference: &TimeSeries, candidate: &TimeSeries, limit: Option<usize>) -> Result<Vec<(usize, f64)>> {
    let take = |s: &TimeSeries| {
        let mut p = find_peaks(s);
        if let Some(n) = limit {
            p.truncate(n);
        }
        p
    };
    let (r, c) = (take(reference), take(candidate));
    if r.len() != c.len() {
        return Err(Error::Alignment {
            reference: r.len(),
            candidate: c.len(),
        });
    }
    Ok(r.iter()
        .zip(&c)
        .enumerate()
        .map(|(i, (a, b))| (i, b.time - a.time))
        .collect())
}

/// Range of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min: f64,
    pub max: f64,
}

impl Envelope {
    pub fn of(series: &TimeSeries) -> Option<Self> {
        Some(Self {
            min: series.min()?,
            max: series.max()?,
        })
    }

    /// `lower * reference.min <= min` and `max <= upper * reference.max`.
    pub fn within(&self, reference: &Envelope, lower: f64, upper: f64) -> bool {
        self.min >= lower * reference.min && self.max <= upper * reference.max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::satsuma_yajima;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sampled(t_end: f64, dt: f64, f: impl Fn(f64) -> f64) -> TimeSeries {
        let n = (t_end / dt).round() as usize;
        TimeSeries::from_fn((0..=n).map(|i| i as f64 * dt).collect(), f).unwrap()
    }

    fn breathing_core(tau: f64) -> f64 {
        satsuma_yajima(0.0, tau).norm_sqr()
    }

    #[test]
    fn cosine_series() {
        let s = sampled(8.0, 0.01, |t| 10.0 + 6.0 * (4.0 * t).cos());
        let r = breathing_metrics(&s).unwrap();
        assert_abs_diff_eq!(r.period, FRAC_PI_2, epsilon = 1e-4);
        assert_abs_diff_eq!(r.amplitude_min, 4.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.amplitude_max, 16.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.frequency * r.period, 1.0, epsilon = 1e-12);
        // cos(4t) = 0 bounds a quarter period on each side.
        assert_abs_diff_eq!(r.fwhm_time, FRAC_PI_2 / 2.0, epsilon = 1e-4);
    }

    #[test]
    fn central_breather_density() {
        let s = sampled(8.0, 0.01, breathing_core);
        let r = breathing_metrics(&s).unwrap();
        assert_abs_diff_eq!(r.period, FRAC_PI_2, epsilon = 1e-4);
        assert_abs_diff_eq!(r.amplitude_min, 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!(r.amplitude_max, 16.0, epsilon = 1e-3);
        assert!(r.fwhm_time < r.period);
    }

    #[test]
    fn too_few_peaks() {
        let s = sampled(2.0, 0.01, |t| (4.0 * t).cos());
        assert!(matches!(breathing_metrics(&s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ripple_is_not_a_peak() {
        let s = sampled(10.0, 0.001, |t| (2.0 * PI * t / 2.0).sin() + 1e-3 * (200.0 * t).sin());
        let peaks = find_peaks(&s);
        assert_eq!(peaks.len(), 5);
        for (k, p) in peaks.iter().enumerate() {
            assert_abs_diff_eq!(p.time, 0.5 + 2.0 * k as f64, epsilon = 0.02);
        }
    }

    #[test]
    fn quadratic_refinement_beats_sampling() {
        let s = sampled(10.0, 0.1, |t| {
            (-(t - 3.537).powi(2)).exp() + (-(t - 7.211).powi(2)).exp()
        });
        let peaks = find_peaks(&s);
        assert_abs_diff_eq!(peaks[0].time, 3.537, epsilon = 2e-3);
        assert_abs_diff_eq!(peaks[1].time, 7.211, epsilon = 2e-3);
    }

    #[test]
    fn widths_trace_is_sampled_at_peaks() {
        let s = sampled(8.0, 0.01, |t| 10.0 + 6.0 * (4.0 * t).cos());
        let w = sampled(8.0, 0.01, |t| 1.0 + t);
        let r = breathing_metrics_with_widths(&s, &w).unwrap();
        let expected = r.peak_times.iter().map(|t| 1.0 + t).sum::<f64>() / r.peak_times.len() as f64;
        assert_abs_diff_eq!(r.peak_width.unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn delays() {
        let reference = sampled(10.0, 0.01, breathing_core);
        assert!(peak_delay(&reference, &reference, None)
            .unwrap()
            .iter()
            .all(|&(_, d)| d == 0.0));
        let shifted = sampled(10.0, 0.01, |t| breathing_core(t - 0.1));
        let d = peak_delay(&reference, &shifted, Some(5)).unwrap();
        assert_eq!(d.len(), 5);
        for (_, delay) in d {
            assert_abs_diff_eq!(delay, 0.1, epsilon = 1e-3);
        }
        let short = sampled(3.0, 0.01, breathing_core);
        assert!(matches!(
            peak_delay(&reference, &short, None),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn com_deviation_against_plan() {
        use crate::field::SpatialGrid;
        use crate::modulation::{ModulationPlan, TimeFunction};
        let plan = ModulationPlan::new(TimeFunction::constant(1.0), TimeFunction::linear(1.0));
        let grid = SpatialGrid::symmetric(20.0, 0.01).unwrap();
        let snaps: Vec<(f64, WaveField)> = (0..5)
            .map(|i| {
                let t = i as f64;
                (t, crate::analytic::modulated_psi(&plan, &grid, t).unwrap())
            })
            .collect();
        let track = com_track(snaps.iter().map(|(t, f)| (*t, f))).unwrap();
        assert!(com_deviation(&track, &plan).unwrap() < 1e-6);
    }

    #[test]
    fn envelope_band() {
        let reference = Envelope { min: 4.0, max: 16.0 };
        assert!(Envelope { min: 3.3, max: 19.0 }.within(&reference, 0.8, 1.2));
        assert!(!Envelope { min: 3.1, max: 16.0 }.within(&reference, 0.8, 1.2));
        assert!(!Envelope { min: 4.0, max: 19.3 }.within(&reference, 0.8, 1.2));
    }

    proptest! {
        #[test]
        fn time_shift_invariance(shift in -50.0f64..50.0) {
            let s = sampled(8.0, 0.01, breathing_core);
            let (a, b) = (breathing_metrics(&s).unwrap(), breathing_metrics(&s.shift_time(shift)).unwrap());
            prop_assert!((a.period - b.period).abs() < 1e-9);
            prop_assert!((a.amplitude_max - b.amplitude_max).abs() < 1e-9);
            prop_assert!((a.fwhm_time - b.fwhm_time).abs() < 1e-9);
            for (x, y) in a.peak_times.iter().zip(&b.peak_times) {
                prop_assert!((x + shift - y).abs() < 1e-9);
            }
        }

        #[test]
        fn amplitude_scaling(alpha in 0.1f64..10.0) {
            let s = sampled(8.0, 0.01, breathing_core);
            let (a, b) = (breathing_metrics(&s).unwrap(), breathing_metrics(&s.map_values(|v| alpha * v)).unwrap());
            prop_assert!((alpha * a.amplitude_min - b.amplitude_min).abs() < 1e-9 * alpha);
            prop_assert!((alpha * a.amplitude_max - b.amplitude_max).abs() < 1e-9 * alpha);
            prop_assert!((a.period - b.period).abs() < 1e-9);
            prop_assert!((a.frequency - b.frequency).abs() < 1e-9);
            prop_assert!((a.fwhm_time - b.fwhm_time).abs() < 1e-9);
            prop_assert_eq!(a.peak_times.len(), b.peak_times.len());
        }
    }
}
