//! Uniform 1D grids, sampled wavefunctions and their integral moments.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as an empty field.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Uniform grid `x_k = x_min + k * dx`, `k = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n_points}")));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    /// Grid starting at `x_min` with spacing `dx` that covers `x_max`.
    ///
    /// The point count is rounded to the nearest integer and the right edge is
    /// moved to `x_min + (n - 1) dx`, so the spacing is exactly `dx`.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "need x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        let intervals = ((x_max - x_min) / dx).round() as usize;
        Self::new(x_min, x_min + intervals as f64 * dx, intervals + 1)
    }

    /// Symmetric box `[-half_width, half_width]` with spacing `dx`.
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        Self::with_spacing(-half_width, half_width, dx)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn x(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.n_points).map(move |k| self.x_min + k as f64 * dx)
    }

    /// Trapezoidal integral of samples taken on this grid.
    pub fn integrate(&self, samples: impl IntoIterator<Item = f64>) -> f64 {
        let mut sum = 0.0;
        let mut first = None;
        let mut last = 0.0;
        for v in samples {
            if first.is_none() {
                first = Some(v);
            }
            sum += v;
            last = v;
        }
        let first = first.unwrap_or(0.0);
        (sum - 0.5 * (first + last)) * self.dx()
    }
}

/// Complex amplitudes sampled on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: SpatialGrid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        if let Some(k) = amplitudes.iter().position(|z| !z.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite amplitude at index {k}")));
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amplitudes = grid.points().map(f).collect();
        Self::new(grid, amplitudes)
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Mutable access for in-place solvers. Callers must keep values finite.
    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.grid.integrate(self.amplitudes.iter().map(|z| z.norm_sqr()))
    }

    /// Largest sampled density and its grid index.
    pub fn max_density(&self) -> (usize, f64) {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, d)| if d > best.1 { (k, d) } else { best },
            )
    }

    /// Full width of `|psi|^2` at half its maximum, measured outward from the
    /// highest sample with linear interpolation of the two crossings.
    pub fn density_fwhm(&self) -> f64 {
        let density = self.density();
        let (peak, max) = self.max_density();
        let half = 0.5 * max;
        let dx = self.grid.dx();

        let mut left = self.grid.x(0);
        for k in (0..peak).rev() {
            if density[k] <= half {
                let frac = (half - density[k]) / (density[k + 1] - density[k]);
                left = self.grid.x(k) + frac * dx;
                break;
            }
        }
        let mut right = self.grid.x(self.grid.len() - 1);
        for k in peak + 1..density.len() {
            if density[k] <= half {
                let frac = (density[k - 1] - half) / (density[k - 1] - density[k]);
                right = self.grid.x(k - 1) + frac * dx;
                break;
            }
        }
        right - left
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub norm: f64,
    pub center_of_mass: f64,
    pub rms_width: f64,
}

/// Norm, center of mass and rms width of `|psi|^2`, all by the trapezoidal rule.
pub fn moments(field: &WaveField) -> Result<Moments> {
    let grid = field.grid();
    let density = field.density();
    let norm = grid.integrate(density.iter().copied());
    if !(norm >= DEGENERATE_NORM) {
        return Err(Error::DegenerateField { norm });
    }
    let first = grid.integrate(grid.points().zip(&density).map(|(x, d)| x * d));
    let center_of_mass = first / norm;
    let second = grid.integrate(
        grid.points()
            .zip(&density)
            .map(|(x, d)| (x - center_of_mass).powi(2) * d),
    );
    Ok(Moments {
        norm,
        center_of_mass,
        rms_width: (second / norm).sqrt(),
    })
}

/// Multiplies every sample by `1 + amplitude * u_k` with `u_k` uniform on `[-1, 1]`.
///
/// The generator is ChaCha8 seeded from `seed`, so the output is a pure
/// function of `(field, amplitude, seed)`.
pub fn perturb(field: &WaveField, amplitude: f64, seed: u64) -> Result<WaveField> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "perturbation amplitude must be non-negative, got {amplitude}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitudes = field
        .amplitudes()
        .iter()
        .map(|&z| {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            z * (1.0 + amplitude * u)
        })
        .collect();
    WaveField::new(*field.grid(), amplitudes)
}

/// Strictly increasing sample times with one value each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shift_time(&self, delta: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t + delta).collect(),
            values: self.values.clone(),
        }
    }

    /// Restriction to `t <= t_end`.
    pub fn truncate_after(&self, t_end: f64) -> Self {
        let n = self.times.partition_point(|&t| t <= t_end);
        Self {
            times: self.times[..n].to_vec(),
            values: self.values[..n].to_vec(),
        }
    }

    /// Linear interpolation, clamped at both ends.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t <= first {
            return self.values.first().copied();
        }
        if t >= last {
            return self.values.last().copied();
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[k - 1] * (1.0 - w) + self.values[k] * w)
    }

    pub fn min(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sech_field(shift: f64) -> WaveField {
        let grid = SpatialGrid::symmetric(20.0, 0.01).unwrap();
        WaveField::from_fn(grid, |x| Complex64::new(2.0 / (x - shift).cosh(), 0.0)).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(SpatialGrid::new(1.0, 1.0, 10).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 2).is_err());
        let grid = SpatialGrid::symmetric(20.0, 0.01).unwrap();
        assert_eq!(grid.len(), 4001);
        assert_abs_diff_eq!(grid.dx(), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(grid.x(2000), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sech_moments_match_closed_form() {
        // int 4 sech^2 = 8 and int x^2 4 sech^2 = 4 pi^2 / 6.
        let m = moments(&sech_field(0.0)).unwrap();
        assert_abs_diff_eq!(m.norm, 8.0, epsilon = 1e-4);
        assert_abs_diff_eq!(m.center_of_mass, 0.0, epsilon = 1e-10);
        let expected_width = (std::f64::consts::PI.powi(2) / 12.0).sqrt();
        assert_abs_diff_eq!(m.rms_width, expected_width, epsilon = 1e-4);
    }

    #[test]
    fn shifted_sech_moves_center_only() {
        let m = moments(&sech_field(3.0)).unwrap();
        assert_abs_diff_eq!(m.center_of_mass, 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.norm, 8.0, epsilon = 1e-4);
        assert_abs_diff_eq!(m.rms_width, 0.9069, epsilon = 1e-3);
    }

    #[test]
    fn zero_field_is_degenerate() {
        let grid = SpatialGrid::symmetric(5.0, 0.1).unwrap();
        assert!(matches!(
            moments(&WaveField::zeros(grid)),
            Err(Error::DegenerateField { .. })
        ));
    }

    #[test]
    fn field_rejects_bad_input() {
        let grid = SpatialGrid::symmetric(1.0, 0.5).unwrap();
        assert!(WaveField::new(grid, vec![Complex64::new(0.0, 0.0); 2]).is_err());
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.len()];
        amps[1] = Complex64::new(f64::NAN, 0.0);
        assert!(WaveField::new(grid, amps).is_err());
    }

    #[test]
    fn fwhm_of_sech_squared() {
        // 4 sech^2 x drops to half at x = acosh(sqrt 2).
        let expected = 2.0 * 2f64.sqrt().acosh();
        assert_abs_diff_eq!(sech_field(0.0).density_fwhm(), expected, epsilon = 1e-4);
    }

    #[test]
    fn perturb_zero_amplitude_is_identity() {
        let f = sech_field(0.0);
        assert_eq!(perturb(&f, 0.0, 3).unwrap(), f);
        assert!(perturb(&f, -0.1, 3).is_err());
    }

    #[test]
    fn perturb_is_deterministic() {
        let f = sech_field(0.0);
        let a = perturb(&f, 0.05, 7).unwrap();
        let b = perturb(&f, 0.05, 7).unwrap();
        let c = perturb(&f, 0.05, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn five_percent_norm_change_is_bounded() {
        let f = sech_field(0.0);
        let n0 = f.norm();
        for seed in 0..20 {
            let n = perturb(&f, 0.05, seed).unwrap().norm();
            assert!(((n - n0) / n0).abs() <= 0.1025);
        }
    }

    #[test]
    fn time_series_validation() {
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let s = TimeSeries::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.interpolate(1.5), Some(3.0));
        assert_eq!(s.truncate_after(1.0).len(), 2);
    }

    proptest! {
        #[test]
        fn moments_ignore_global_phase(theta in -10.0f64..10.0, shift in -5.0f64..5.0) {
            let f = sech_field(shift);
            let rotated = WaveField::new(
                *f.grid(),
                f.amplitudes().iter().map(|z| z * Complex64::from_polar(1.0, theta)).collect(),
            ).unwrap();
            let (m0, m1) = (moments(&f).unwrap(), moments(&rotated).unwrap());
            prop_assert!((m0.norm - m1.norm).abs() < 1e-12);
            prop_assert!((m0.center_of_mass - m1.center_of_mass).abs() < 1e-12);
            prop_assert!((m0.rms_width - m1.rms_width).abs() < 1e-12);
        }

        #[test]
        fn shifting_samples_shifts_center_by_grid_steps(m in -200i64..200) {
            let grid = SpatialGrid::symmetric(20.0, 0.01).unwrap();
            let f = WaveField::from_fn(grid, |x| Complex64::new(2.0 / x.cosh(), 0.0)).unwrap();
            let n = grid.len() as i64;
            let shifted: Vec<Complex64> = (0..n)
                .map(|k| {
                    let src = k - m;
                    if (0..n).contains(&src) { f.amplitudes()[src as usize] } else { Complex64::new(0.0, 0.0) }
                })
                .collect();
            let g = WaveField::new(grid, shifted).unwrap();
            let delta = moments(&g).unwrap().center_of_mass - moments(&f).unwrap().center_of_mass;
            prop_assert!((delta - m as f64 * grid.dx()).abs() < 1e-9);
        }

        #[test]
        fn perturbation_stays_within_pointwise_band(amp in 0.0f64..0.5, seed in any::<u64>()) {
            let f = sech_field(0.0);
            let p = perturb(&f, amp, seed).unwrap();
            for (z0, z1) in f.amplitudes().iter().zip(p.amplitudes()) {
                let (r0, r1) = (z0.norm(), z1.norm());
                prop_assert!(r1 >= (1.0 - amp) * r0 - 1e-15 && r1 <= (1.0 + amp) * r0 + 1e-15);
            }
        }
    }
}
