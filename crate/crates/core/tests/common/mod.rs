//! Analytic vector fields against finite differences of transformed,
//! integrated trajectories.

use nalgebra::DVector;
use spinlab::blowup::{forcing_at, res_field, to_blowup, ShapeSpace, ShapeState, Variant};
use spinlab::dynamics::{integrate, propagate, Mode, Scenario};
use spinlab::integrator::Tolerances;
use spinlab::system::CartesianState;

const TOL: Tolerances<f64> = Tolerances { rtol: 1e-13, atol: 1e-15 };

/// Five-point derivative of `f` along the flow through `st`.
fn flow_derivative(
    sc: &Scenario<f64>,
    st: &CartesianState<f64>,
    h: f64,
    f: impl Fn(&CartesianState<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let at = |dt: f64| f(&propagate(&sc.sys, st, st.t + dt, &TOL).unwrap());
    ((at(h) - at(-h)) * 8.0 - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

fn shape_vector(sh: &ShapeState<f64>, theta_ref: f64) -> DVector<f64> {
    let mut dth = sh.theta - theta_ref;
    dth -= (dth / std::f64::consts::TAU).round() * std::f64::consts::TAU;
    let mut v = vec![sh.r, sh.rho, dth, sh.mu];
    v.extend(sh.s.iter().chain(sh.omega.iter()));
    DVector::from_vec(v)
}

fn blowup_vector(sh: &ShapeState<f64>, variant: Variant) -> DVector<f64> {
    let b = to_blowup(sh, variant, 0.0);
    let mut v = vec![b.size, b.v];
    v.extend(b.s.iter().chain(b.w.iter()));
    DVector::from_vec(v)
}

fn scaled_error(fd: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (fd - exact).amax() / (1.0 + exact.amax())
}

/// Largest scaled errors of the shape field and the blow-up field over
/// eight interior samples of the run.
pub fn pushforward_errors(sc: &Scenario<f64>) -> (f64, f64) {
    let tr = integrate(sc).unwrap();
    let space = ShapeSpace::new(&sc.sys, &sc.cluster).unwrap();
    let variant = match sc.mode {
        Mode::Parabolic => Variant::Parabolic,
        _ => Variant::Collision,
    };
    let n = tr.len();
    let (mut el, mut res) = (0.0f64, 0.0f64);
    for k in 1..=8 {
        let st = &tr.states[k * (n - 1) / 10];
        let (z, _, _, _) = space.relative(st).unwrap();
        let chart = ShapeSpace::<f64>::preferred_chart(&z);
        let sh = space.to_shape(st, Some(chart)).unwrap();
        let h = 1e-3 * sh.r.powf(1.5);

        let rates = space.el_field(&sh).unwrap();
        let mut exact = vec![rates.r, rates.rho, rates.theta, rates.mu];
        exact.extend(rates.s.iter().chain(rates.omega.iter()));
        let fd = flow_derivative(sc, st, h, |s| shape_vector(&space.to_shape(s, Some(chart)).unwrap(), sh.theta));
        el = el.max(scaled_error(&fd, &DVector::from_vec(exact)));

        let ch = space.chart(chart).unwrap();
        let forcing = forcing_at(&space, &sh, variant).unwrap();
        let br = res_field(ch, &to_blowup(&sh, variant, 0.0), &forcing).unwrap();
        assert!((br.t - sh.r.powf(1.5)).abs() < 1e-14 * br.t);
        let mut exact = vec![br.size, br.v];
        exact.extend(br.s.iter().chain(br.w.iter()));
        // d/dtau = r^{3/2} d/dt
        let fd = flow_derivative(sc, st, h, |s| blowup_vector(&space.to_shape(s, Some(chart)).unwrap(), variant)) * br.t;
        res = res.max(scaled_error(&fd, &DVector::from_vec(exact)));
    }
    (el, res)
}
