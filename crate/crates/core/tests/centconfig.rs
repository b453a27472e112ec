use nalgebra::Complex;
use proptest::prelude::*;
use spinlab::blowup::Variant;
use spinlab::centconfig::{cc_residual, classify, find_cc, multi_start, CcOptions, CcRecord};
use spinlab::system::{total_potential, MassSystem, Vec2};

fn triangle(jitter: [f64; 6]) -> Vec<Vec2<f64>> {
    let h = 3f64.sqrt() / 2.0;
    vec![
        Vec2::new(1.0 + jitter[0], jitter[1]),
        Vec2::new(-0.5 + jitter[2], h + jitter[3]),
        Vec2::new(-0.5 + jitter[4], -h + jitter[5]),
    ]
}

fn inertia(m: &[f64], q: &[Vec2<f64>]) -> f64 {
    let mt: f64 = m.iter().sum();
    let c = q.iter().zip(m).fold(Vec2::zeros(), |a, (x, mi)| a + x * *mi) / mt;
    q.iter().zip(m).map(|(x, mi)| mi * (x - c).norm_squared()).sum()
}

#[test]
fn perturbed_equilateral_gives_lambda_three() {
    let cc = find_cc(&[1.0, 1.0, 1.0], &triangle([0.04, -0.03, 0.02, 0.05, -0.06, 0.01]), &CcOptions::default()).unwrap();
    assert!((cc.lambda - 3.0).abs() < 1e-10, "{}", cc.lambda);
    assert!(cc.normalized);
    let q = cc.points();
    assert!((inertia(&cc.masses, &q) - 1.0).abs() < 1e-12);
}

#[test]
fn lagrange_spectrum_satisfies_characteristic_relation() {
    let cc = find_cc(&[1.0, 1.0, 1.0], &triangle([0.0; 6]), &CcOptions::default()).unwrap();
    for variant in [Variant::Collision, Variant::Parabolic] {
        let eq = classify(&cc, variant).unwrap();
        assert!((eq.v0.abs() - 6f64.sqrt()).abs() < 1e-12);
        for (c, (p, m)) in eq.hessian_eigenvalues.iter().zip(&eq.lambda_pairs) {
            for l in [p, m] {
                let z = Complex::new(l[0], l[1]);
                let res = z * z + z * (eq.v0 / 2.0) - *c;
                assert!(res.norm() < 1e-12, "{:?}: c = {}, lambda = {}", variant, c, z);
            }
        }
        assert!(!eq.degenerate);
    }
}

#[test]
fn record_round_trip_recovers_the_configuration() {
    let cc = find_cc(&[1.0, 2.0, 0.5], &triangle([0.1, 0.0, 0.0, -0.1, 0.05, 0.0]), &CcOptions::default()).unwrap();
    let rec = CcRecord::from_equilibrium(&cc, None);
    let json = serde_json::to_string(&rec).unwrap();
    let back: CcRecord = serde_json::from_str(&json).unwrap();
    let cc2 = back.to_central_config(1e-10).unwrap();
    for (a, b) in cc.distance_key().iter().zip(cc2.distance_key()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((cc.lambda - cc2.lambda).abs() < 1e-12);
}

#[test]
fn every_multistart_solution_obeys_homogeneity() {
    let masses = [1.0, 1.5, 0.7, 1.2];
    let found = multi_start(&masses, 48, 11);
    assert!(found.len() >= 2);
    let sys = MassSystem::new(masses.to_vec()).unwrap();
    for cc in &found {
        let q = cc.points();
        let u = total_potential(&sys, &q).unwrap();
        let i = inertia(&masses, &q);
        assert!((cc.lambda - u / i).abs() < 1e-12 * cc.lambda, "{} vs {}", cc.lambda, u / i);
        let (res, _) = cc_residual(&masses, &q).unwrap();
        assert!(res < 1e-10, "{}", res);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The Lagrange configuration is equilateral for any masses, with
    /// `lambda = S^{3/2} / sqrt(M)` at unit inertia.
    #[test]
    fn lagrange_is_equilateral_for_any_masses(
        m in prop::array::uniform3(0.1f64..5.0),
        jitter in prop::array::uniform6(-0.05f64..0.05),
    ) {
        let cc = find_cc(&m, &triangle(jitter), &CcOptions::default()).unwrap();
        let d = cc.distance_key();
        let s = m[0] * m[1] + m[0] * m[2] + m[1] * m[2];
        let mt = m[0] + m[1] + m[2];
        let side = (mt / s).sqrt();
        for di in &d {
            prop_assert!((di - side).abs() < 1e-10 * side, "{:?} vs {}", d, side);
        }
        let lambda = s.powf(1.5) / mt.sqrt();
        prop_assert!((cc.lambda - lambda).abs() < 1e-10 * lambda);
    }
}
