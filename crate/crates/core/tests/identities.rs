use nalgebra::Complex;
use proptest::prelude::*;
use spinlab::blowup::fubini::C;
use spinlab::blowup::{energy_blowup, from_blowup, to_blowup, ShapeSpace, Variant};
use spinlab::system::{
    cluster_geometry, mass_metric, split_potentials, to_complex, total_potential, CartesianState, Cluster, MassSystem,
    Vec2,
};

#[derive(Debug, Clone)]
struct Sample {
    masses: Vec<f64>,
    q: Vec<[f64; 2]>,
    v: Vec<[f64; 2]>,
    cluster: Vec<usize>,
}

fn sample() -> impl Strategy<Value = Sample> {
    (2usize..=5)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.2f64..3.0, n),
                prop::collection::vec([-2.0f64..2.0, -2.0f64..2.0], n),
                prop::collection::vec([-1.5f64..1.5, -1.5f64..1.5], n),
                prop::sample::subsequence((0..n).collect::<Vec<_>>(), 2..=n),
            )
        })
        .prop_map(|(masses, q, v, cluster)| Sample { masses, q, v, cluster })
        .prop_filter("bodies too close", |s| {
            (0..s.q.len()).all(|i| {
                (i + 1..s.q.len()).all(|j| ((s.q[i][0] - s.q[j][0]).powi(2) + (s.q[i][1] - s.q[j][1]).powi(2)).sqrt() > 0.05)
            })
        })
}

fn build(s: &Sample) -> (MassSystem<f64>, CartesianState<f64>, Cluster) {
    let sys = MassSystem::new(s.masses.clone()).unwrap();
    let q = s.q.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let v = s.v.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let st = CartesianState::centered(&sys, 0.0, q, v).unwrap();
    let cl = Cluster::new(s.cluster.clone(), sys.n()).unwrap();
    (sys, st, cl)
}

fn shape_of(space: &ShapeSpace<f64>, st: &CartesianState<f64>) -> spinlab::blowup::ShapeState<f64> {
    let (z, _, _, _) = space.relative(st).unwrap();
    space.to_shape(st, Some(ShapeSpace::<f64>::preferred_chart(&z))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn potential_split_recomposes(s in sample()) {
        let (sys, st, cl) = build(&s);
        let u = total_potential(&sys, &st.q).unwrap();
        let sp = split_potentials(&sys, &cl, &st.q).unwrap();
        prop_assert!((sp.total() - u).abs() <= 1e-13 * u.max(1.0));
    }

    #[test]
    fn kinetic_energy_factorizes(s in sample()) {
        let (sys, st, cl) = build(&s);
        let idx = cl.indices();
        let m = sys.masses();
        let direct: f64 = idx.iter().map(|&i| 0.5 * m[i] * st.v[i].norm_squared()).sum();
        let g = cluster_geometry(&sys, &cl, &st.q, &st.v).unwrap();
        let metric = mass_metric(&sys, &cl);
        let zd: Vec<C<f64>> = g.zdot[..idx.len() - 1].iter().map(to_complex).collect();
        let m0 = sys.cluster_mass(&cl);
        let factored = 0.5 * metric.norm2(&zd) + 0.5 * m0 * g.cdot.norm_squared();
        prop_assert!((factored - direct).abs() <= 1e-13 * direct.max(1.0), "{} vs {}", factored, direct);
        prop_assert!((g.kinetic + 0.5 * m0 * g.cdot.norm_squared() - direct).abs() <= 1e-13 * direct.max(1.0));
    }

    #[test]
    fn cluster_energy_agrees_across_representations(s in sample()) {
        let (sys, st, cl) = build(&s);
        let g = cluster_geometry(&sys, &cl, &st.q, &st.v).unwrap();
        let space = ShapeSpace::new(&sys, &cl).unwrap();
        let sh = shape_of(&space, &st);
        let scale = g.kinetic + g.potential;
        let e_shape = space.energy(&sh).unwrap();
        prop_assert!((e_shape - g.energy).abs() <= 1e-10 * scale, "{} vs {}", e_shape, g.energy);
        let chart = space.chart(sh.chart).unwrap();
        for variant in [Variant::Parabolic, Variant::Collision] {
            let b = to_blowup(&sh, variant, 0.0);
            let (h, _) = energy_blowup(chart, &b, sh.mu).unwrap();
            prop_assert!((h - g.energy).abs() <= 1e-10 * scale, "{:?}: {} vs {}", variant, h, g.energy);
        }
    }

    #[test]
    fn shape_round_trip(s in sample()) {
        let (sys, st, cl) = build(&s);
        let space = ShapeSpace::new(&sys, &cl).unwrap();
        let sh = shape_of(&space, &st);
        let back = space.from_shape(&sh).unwrap();
        let g = cluster_geometry(&sys, &cl, &st.q, &st.v).unwrap();
        prop_assert!((sh.r * sh.r - g.inertia).abs() <= 1e-12 * g.inertia);
        for i in 0..sys.n() {
            prop_assert!((back.q[i] - st.q[i]).norm() <= 1e-12 * (1.0 + st.q[i].norm()));
            prop_assert!((back.v[i] - st.v[i]).norm() <= 1e-12 * (1.0 + st.v[i].norm()));
        }
    }

    #[test]
    fn blowup_round_trip(s in sample()) {
        let (sys, st, cl) = build(&s);
        let space = ShapeSpace::new(&sys, &cl).unwrap();
        let sh = shape_of(&space, &st);
        for variant in [Variant::Parabolic, Variant::Collision] {
            let (r, rho, sv, om) = from_blowup(&to_blowup(&sh, variant, 0.0));
            prop_assert!((r - sh.r).abs() <= 1e-13 * sh.r);
            prop_assert!((rho - sh.rho).abs() <= 1e-13 * (1.0 + sh.rho.abs()));
            prop_assert!((sv - &sh.s).norm() <= 1e-13 * (1.0 + sh.s.norm()));
            prop_assert!((om - &sh.omega).norm() <= 1e-13 * (1.0 + sh.omega.norm()));
        }
    }

    #[test]
    fn rotation_shifts_only_the_phase(s in sample(), angle in -3.0f64..3.0) {
        let (sys, st, cl) = build(&s);
        let space = ShapeSpace::new(&sys, &cl).unwrap();
        let a = shape_of(&space, &st);
        let b = space.to_shape(&st.rotated(angle), Some(a.chart)).unwrap();
        let dth = Complex::from_polar(1.0, b.theta - a.theta - angle);
        prop_assert!((dth - Complex::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!((a.r - b.r).abs() < 1e-12 * a.r);
        prop_assert!((a.rho - b.rho).abs() < 1e-12 * (1.0 + a.rho.abs()));
        prop_assert!((a.mu - b.mu).abs() < 1e-12 * (1.0 + a.mu.abs()));
        prop_assert!((&a.s - &b.s).norm() < 1e-12 * (1.0 + a.s.norm()));
        prop_assert!((&a.omega - &b.omega).norm() < 1e-12 * (1.0 + a.omega.norm()));
    }
}
