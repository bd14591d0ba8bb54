//! Browser bindings: exact breather profiles, the trapping potential, and a
//! short split-step simulation of the breathing trace.

use breather::field::SpatialGrid;
use breather::run::{simulate, Settings};
use breather::scenarios::{scenario_unchecked, ScenarioSpec, SCENARIO_NAMES};
use wasm_bindgen::prelude::*;

/// Plain-Rust versions of the exported functions.
pub mod api {
    use super::*;
    use breather::Result;

    fn grid_around(spec: &ScenarioSpec, t: f64, half_width: f64, n: usize) -> Result<SpatialGrid> {
        let c = spec.plan.center(t)?;
        SpatialGrid::new(c - half_width, c + half_width, n)
    }

    /// `[x_0, .., x_{n-1}, |psi(x_0)|^2, .., |psi(x_{n-1})|^2]` of the exact
    /// breather at `t`, on a window centered on the breather.
    pub fn density_profile(scenario: &str, t: f64, half_width: f64, n: usize) -> Result<Vec<f64>> {
        let spec = scenario_unchecked(scenario)?;
        let grid = grid_around(&spec, t, half_width, n)?;
        let field = spec.exact(&grid, t)?;
        Ok(grid.points().chain(field.density()).collect())
    }

    /// `[x.., V(x, t)..]` on a window centered on the breather.
    pub fn potential_profile(scenario: &str, t: f64, half_width: f64, n: usize) -> Result<Vec<f64>> {
        let spec = scenario_unchecked(scenario)?;
        let grid = grid_around(&spec, t, half_width, n)?;
        let v = spec.plan.potential_coefficients(t)?;
        Ok(grid.points().chain(grid.points().map(|x| v.at(x))).collect())
    }

    /// `[t.., max_x |psi|^2.., center of mass..]` from a split-step run of
    /// the perturbed breather on `[0, horizon]`.
    pub fn simulate_trace(
        scenario: &str,
        horizon: f64,
        dx: f64,
        dt: f64,
        perturbation: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let spec = scenario_unchecked(scenario)?;
        let steps = (horizon / dt).round().max(1.0);
        let settings = Settings {
            grid: spec.grid(horizon, None, Some(dx))?,
            dt,
            snapshot_stride: ((steps / 400.0).ceil() as usize).max(1),
            horizon,
            perturbation,
            seed,
        };
        let trace = simulate(&spec, spec.model, &settings, |_, _| {})?;
        let rows = &trace.rows;
        Ok(rows
            .iter()
            .map(|r| r.t)
            .chain(rows.iter().map(|r| r.max_density))
            .chain(rows.iter().map(|r| r.com))
            .collect())
    }
}

fn js(err: breather::Error) -> JsError {
    JsError::new(&err.to_string())
}

/// Comma-separated scenario names.
#[wasm_bindgen(js_name = scenarioNames)]
pub fn scenario_names() -> String {
    SCENARIO_NAMES.join(",")
}

#[wasm_bindgen(js_name = densityProfile)]
pub fn density_profile(scenario: &str, t: f64, half_width: f64, n: usize) -> Result<Vec<f64>, JsError> {
    api::density_profile(scenario, t, half_width, n).map_err(js)
}

#[wasm_bindgen(js_name = potentialProfile)]
pub fn potential_profile(scenario: &str, t: f64, half_width: f64, n: usize) -> Result<Vec<f64>, JsError> {
    api::potential_profile(scenario, t, half_width, n).map_err(js)
}

#[wasm_bindgen(js_name = simulateTrace)]
pub fn simulate_trace(
    scenario: &str,
    horizon: f64,
    dx: f64,
    dt: f64,
    perturbation: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    api::simulate_trace(scenario, horizon, dx, dt, perturbation, seed as u64).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::api::*;

    #[test]
    fn profile_peaks_at_the_center() {
        let v = density_profile("vanishing_static", 0.0, 10.0, 201).unwrap();
        let (x, d) = v.split_at(201);
        assert_eq!(x[100], 0.0);
        assert!((d[100] - 4.0).abs() < 1e-12);
        assert!(d.iter().all(|&y| y <= d[100]));
    }

    #[test]
    fn moving_window_follows_the_breather() {
        let v = density_profile("vanishing_moving", 3.0, 10.0, 201).unwrap();
        assert!((v[100] + 3.0).abs() < 1e-12);
        let d = &v[201..];
        assert!(d.iter().all(|&y| y <= d[100]));
    }

    #[test]
    fn seesaw_potential_is_linear() {
        let t = 1.0_f64;
        let v = potential_profile("seesaw", t, 5.0, 11).unwrap();
        let (x, p) = v.split_at(11);
        for (x, p) in x.iter().zip(p) {
            assert!((p - t.sin() * x).abs() < 1e-12);
        }
    }

    #[test]
    fn short_trace_has_three_columns() {
        let v = simulate_trace("vanishing_static", 0.8, 0.05, 1e-3, 0.0, 1).unwrap();
        assert_eq!(v.len() % 3, 0);
        let n = v.len() / 3;
        assert!(n > 100);
        let peak = v[n..2 * n].iter().cloned().fold(0.0, f64::max);
        assert!((peak - 16.0).abs() < 0.5, "{peak}");
    }

    #[test]
    fn unknown_scenario() {
        assert!(density_profile("nope", 0.0, 1.0, 3).is_err());
    }
}
