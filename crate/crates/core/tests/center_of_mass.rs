use breather::observables::com_deviation;
use breather::run::{simulate, Settings};
use breather::scenarios::build_scenario;

fn deviation(name: &str, horizon: f64) -> (f64, f64) {
    let s = build_scenario(name).unwrap();
    let settings = Settings {
        horizon,
        grid: s.grid(horizon, None, None).unwrap(),
        ..Settings::defaults(&s).unwrap()
    };
    let trace = simulate(&s, s.model, &settings, |_, _| {}).unwrap();
    let com = trace.com().unwrap();
    let largest = com.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
    (com_deviation(&com, &s.plan).unwrap(), largest)
}

#[test]
fn static_breather_stays_centered() {
    let (dev, largest) = deviation("vanishing_static", 4.0);
    assert!(dev < 0.02 && largest < 0.02, "{dev} {largest}");
}

#[test]
fn moving_breather_travels_left() {
    let (dev, largest) = deviation("vanishing_moving", 4.0);
    assert!(dev < 0.05, "{dev}");
    assert!((largest - 4.0).abs() < 0.05, "{largest}");
}

#[test]
fn seesaw_zig_zags() {
    let (dev, largest) = deviation("seesaw", 4.0);
    assert!(dev < 0.05, "{dev}");
    assert!((largest - 1.0).abs() < 0.05, "{largest}");
}
