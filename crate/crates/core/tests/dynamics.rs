use proptest::prelude::*;
use spinlab::blowup::{transform, Variant};
use spinlab::dynamics::{classify, integrate, propagate, scenario_library, ScenarioParams, StopReason, Verdict};
use spinlab::integrator::Tolerances;
use spinlab::system::{CartesianState, MassSystem, Vec2};

const LIBRARY: [&str; 5] = [
    "kepler_parabolic_radial",
    "lagrange_homothetic_collision",
    "lagrange_parabolic",
    "binary_plus_spectator_collision",
    "parabolic_pair_plus_escaper",
];

#[test]
fn kepler_parabolic_law_and_blowup_limit() {
    let (m1, m2) = (1.0, 1.0);
    let s = scenario_library("kepler_parabolic_radial", &ScenarioParams::default()).unwrap();
    let tr = integrate(&s).unwrap();
    assert_eq!(tr.stop, StopReason::Horizon);
    let t0 = tr.states[0].t;
    let t_end = tr.last().t;
    assert!(t_end >= 0.999e6 * t0);
    let c = (9.0 * (m1 + m2) / 2.0f64).cbrt();
    for st in tr.states.iter().filter(|st| st.t >= t_end / 10.0) {
        let r = (st.q[1] - st.q[0]).norm();
        let ratio = r / st.t.powf(2.0 / 3.0);
        assert!((ratio / c - 1.0).abs() < 1e-4, "t = {}: {} vs {}", st.t, ratio, c);
    }
    // normalised separation sqrt(M / m1 m2) gives V = (m1 m2)^{3/2} / sqrt(M)
    let v_k = (m1 * m2).powf(1.5) / (m1 + m2).sqrt();
    let b = transform(&tr, &s.cluster, Variant::Parabolic).unwrap();
    let last = &b.samples.last().unwrap().state;
    assert!(last.size.abs() < 1e-4, "u = {}", last.size);
    assert!((last.v - (2.0 * v_k).sqrt()).abs() < 1e-4, "v = {}", last.v);
}

#[test]
fn homothetic_collapse_time_matches_radial_fall() {
    let s = scenario_library("lagrange_homothetic_collision", &ScenarioParams::default()).unwrap();
    let tr = integrate(&s).unwrap();
    assert_eq!(tr.stop, StopReason::CollisionApproach);
    // each body falls towards the centroid under m / (sqrt(3) R^2) from R0 = 1/sqrt(3)
    let r0 = 1.0 / 3f64.sqrt();
    let gm = 1.0 / 3f64.sqrt();
    let t_c = std::f64::consts::FRAC_PI_2 * (r0.powi(3) / (2.0 * gm)).sqrt();
    let rep = classify(&tr, &s.cluster);
    assert_eq!(rep.verdict, Verdict::KCollision);
    let t_fit = rep.collision_time.unwrap();
    assert!((t_fit - t_c).abs() < 1e-6 * t_c, "{} vs {}", t_fit, t_c);
    assert!(tr.last().t < t_c);
}

#[test]
fn library_runs_conserve_invariants() {
    for name in LIBRARY {
        let s = scenario_library(name, &ScenarioParams::default()).unwrap();
        let tr = integrate(&s).unwrap();
        assert!(!matches!(tr.stop, StopReason::StepUnderflow | StopReason::MaxSteps), "{}: {:?}", name, tr.stop);
        assert!(tr.stats.max_com_drift < 1e-10, "{}: {:?}", name, tr.stats);
        assert!(tr.stats.max_energy_drift < 1e-8, "{}: {:?}", name, tr.stats);
        assert!(tr.stats.max_angular_momentum_drift < 1e-8, "{}: {:?}", name, tr.stats);
        for w in tr.states.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }
}

#[test]
fn lagrange_parabolic_starts_at_zero_energy() {
    let s = scenario_library("lagrange_parabolic", &ScenarioParams::default()).unwrap();
    let e = s.initial.energy(&s.sys).unwrap();
    assert!(e.abs() < 1e-12, "{}", e);
}

#[test]
fn single_precision_two_body_step() {
    let sys = MassSystem::new(vec![1.0f32, 1.0]).unwrap();
    let st = CartesianState::new(&sys, 0.0, vec![Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0)], vec![
        Vec2::new(0.0, -0.5),
        Vec2::new(0.0, 0.5),
    ])
    .unwrap();
    let end = propagate(&sys, &st, 1.0, &Tolerances { rtol: 1e-5, atol: 1e-7 }).unwrap();
    let e0 = st.energy(&sys).unwrap();
    let e1 = end.energy(&sys).unwrap();
    assert!((e1 - e0).abs() < 1e-4 * e0.abs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Integrating a rotated state gives the rotated result.
    #[test]
    fn flow_commutes_with_rotation(
        q in prop::collection::vec([-1.0f64..1.0, -1.0f64..1.0], 3),
        v in prop::collection::vec([-0.5f64..0.5, -0.5f64..0.5], 3),
        angle in -3.0f64..3.0,
    ) {
        let sys = MassSystem::new(vec![1.0, 0.7, 1.4]).unwrap();
        let qs: Vec<Vec2<f64>> = q.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        prop_assume!(qs.iter().enumerate().all(|(i, a)| qs[i + 1..].iter().all(|b| (a - b).norm() > 0.3)));
        let st = CartesianState::centered(&sys, 0.0, qs, v.iter().map(|p| Vec2::new(p[0], p[1])).collect()).unwrap();
        let tol = Tolerances { rtol: 1e-12, atol: 1e-14 };
        let a = propagate(&sys, &st, 0.2, &tol).unwrap().rotated(angle);
        let b = propagate(&sys, &st.rotated(angle), 0.2, &tol).unwrap();
        for i in 0..3 {
            prop_assert!((a.q[i] - b.q[i]).norm() < 1e-9);
            prop_assert!((a.v[i] - b.v[i]).norm() < 1e-9);
        }
    }
}
