mod common;

use spinlab::dynamics::{scenario_library, Mode, Scenario, ScenarioParams};
use spinlab::io::{ScenarioFile, StopFile, TolerancesFile};

fn check(sc: &Scenario<f64>) {
    let (el, res) = common::pushforward_errors(sc);
    assert!(el <= 1e-7, "{}: shape field error {:.3e}", sc.name, el);
    assert!(res <= 1e-6, "{}: blow-up field error {:.3e}", sc.name, res);
}

fn check_scenario(name: &str) {
    check(&scenario_library(name, &ScenarioParams::default()).unwrap());
}

#[test]
fn lagrange_homothetic_collision() {
    check_scenario("lagrange_homothetic_collision");
}

#[test]
fn binary_plus_spectator_collision() {
    check_scenario("binary_plus_spectator_collision");
}

#[test]
fn parabolic_pair_plus_escaper() {
    check_scenario("parabolic_pair_plus_escaper");
}

/// A rotating, non-homothetic triple inside four bodies, so the shape
/// variables and the magnetic term move.
#[test]
fn rotating_triple_with_spectator() {
    let f = ScenarioFile {
        name: Some("rotating_triple".into()),
        masses: vec![1.0, 1.3, 0.8, 0.5],
        positions: vec![[1.0, 0.1], [-0.6, 0.9], [-0.4, -0.8], [4.0, 3.0]],
        velocities: vec![[0.1, 0.45], [-0.5, -0.1], [0.3, -0.35], [-0.1, 0.05]],
        cluster: vec![1, 2, 3],
        mode: Mode::Generic,
        stop: StopFile {
            t_end: 2.0,
            r_min: None,
            r_max: None,
        },
        tolerances: TolerancesFile { rtol: 1e-12, atol: 1e-14 },
        t0: None,
    };
    check(&f.to_scenario().unwrap());
}
