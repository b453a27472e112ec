//! Named initial-value problems with known asymptotics.
//!
//! Two of the scenarios are tuned by bisection on one initial-condition
//! parameter so that the cluster really is a collision (resp. parabolic)
//! cluster: the tuning integrations are part of construction.

use serde::{Deserialize, Serialize};

use super::{flat_rhs, Mode, Scenario, StopConditions};
use crate::error::{Error, Result};
use crate::integrator::{self, EventFn, Options, Termination, Tolerances};
use crate::system::{cluster_geometry, CartesianState, Cluster, MassSystem, Vec2};

/// Knobs for [`scenario_library`]. Unset fields take the scenario's
/// defaults; `custom` requires the explicit state fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub masses: Option<Vec<f64>>,
    /// Start time (Kepler: the `t0` of `r = c t^{2/3}`).
    pub t0: Option<f64>,
    pub t_end: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    /// Distance of the third body from the pair.
    pub distance: Option<f64>,
    /// Escape speed of the third body.
    pub speed: Option<f64>,
    /// Pair angular momentum (parabolic pair).
    pub angular_momentum: Option<f64>,
    /// Separation used as the floor when tuning the collision scenario.
    pub tune_floor: Option<f64>,
    pub positions: Option<Vec<[f64; 2]>>,
    pub velocities: Option<Vec<[f64; 2]>>,
    /// One-based cluster indices.
    pub cluster: Option<Vec<usize>>,
    pub mode: Option<Mode>,
}

pub const NAMES: [&str; 6] = [
    "kepler_parabolic_radial",
    "lagrange_homothetic_collision",
    "lagrange_parabolic",
    "binary_plus_spectator_collision",
    "parabolic_pair_plus_escaper",
    "custom",
];

pub fn scenario_library(name: &str, p: &ScenarioParams) -> Result<Scenario<f64>> {
    match name {
        "kepler_parabolic_radial" => kepler_parabolic_radial(p),
        "lagrange_homothetic_collision" => lagrange_homothetic_collision(p),
        "lagrange_parabolic" => lagrange_parabolic(p),
        "binary_plus_spectator_collision" => binary_plus_spectator_collision(p),
        "parabolic_pair_plus_escaper" => parabolic_pair_plus_escaper(p),
        "custom" => custom(p),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

fn masses_or(p: &ScenarioParams, n: usize) -> Result<MassSystem<f64>> {
    let m = p.masses.clone().unwrap_or_else(|| vec![1.0; n]);
    if m.len() != n {
        return Err(Error::InvalidParameter(format!(
            "scenario needs {} masses, got {}",
            n,
            m.len()
        )));
    }
    MassSystem::new(m)
}

fn v(x: f64, y: f64) -> Vec2<f64> {
    Vec2::new(x, y)
}

/// Coefficient `c` of the zero-energy radial Kepler law `r = c t^{2/3}`.
pub fn kepler_coefficient(total_mass: f64) -> f64 {
    (4.5 * total_mass).cbrt()
}

/// Two bodies on the zero-energy radial ejection orbit `r = c t^{2/3}`,
/// started at `t = t0` (default `1e6`) and run to `t_end` (default `1e12`).
pub fn kepler_parabolic_radial(p: &ScenarioParams) -> Result<Scenario<f64>> {
    let sys = masses_or(p, 2)?;
    let t0 = p.t0.unwrap_or(1e6);
    if !(t0 > 0.0) {
        return Err(Error::InvalidParameter("t0 must be positive".into()));
    }
    let t_end = p.t_end.unwrap_or(t0 * 1e6);
    let (m1, m2) = (sys.mass(0), sys.mass(1));
    let m0 = m1 + m2;
    let c = kepler_coefficient(m0);
    let r = c * t0.powf(2.0 / 3.0);
    let rdot = 2.0 / 3.0 * c * t0.powf(-1.0 / 3.0);
    let q = vec![v(-m2 / m0 * r, 0.0), v(m1 / m0 * r, 0.0)];
    let vel = vec![v(-m2 / m0 * rdot, 0.0), v(m1 / m0 * rdot, 0.0)];
    let state = CartesianState::new(&sys, t0, q, vel)?;
    Ok(Scenario::new(
        "kepler_parabolic_radial",
        sys,
        state,
        Cluster::all(2),
        Mode::Parabolic,
        StopConditions {
            t_end,
            r_min: None,
            r_max: p.r_max,
        },
    )?
    .with_tolerances(tuning_options().tol))
}

fn equilateral(side: f64, sys: &MassSystem<f64>) -> Vec<Vec2<f64>> {
    let r = side / 3f64.sqrt();
    let raw: Vec<Vec2<f64>> = (0..3)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / 3.0;
            v(r * a.cos(), r * a.sin())
        })
        .collect();
    let c = raw
        .iter()
        .zip(sys.masses())
        .fold(Vec2::zeros(), |a, (q, m)| a + q * *m)
        / sys.total_mass();
    raw.into_iter().map(|q| q - c).collect()
}

/// Equilateral triangle of side 1 released from rest: homothetic total
/// collapse, stopped at pair distance `r_min` (default `1e-5`).
pub fn lagrange_homothetic_collision(p: &ScenarioParams) -> Result<Scenario<f64>> {
    let sys = masses_or(p, 3)?;
    let q = equilateral(1.0, &sys);
    let state = CartesianState::new(&sys, 0.0, q, vec![Vec2::zeros(); 3])?;
    Scenario::new(
        "lagrange_homothetic_collision",
        sys,
        state,
        Cluster::all(3),
        Mode::Collision,
        StopConditions {
            t_end: p.t_end.unwrap_or(10.0),
            r_min: Some(p.r_min.unwrap_or(1e-5)),
            r_max: p.r_max,
        },
    )
}

/// Equilateral triangle of side 1 expanding homothetically with zero
/// energy: `v_i = kappa q_i` with `kappa = sqrt(2U/I)`, started at the time
/// `2/(3 kappa)` at which the `t^{2/3}` law passes through this size.
pub fn lagrange_parabolic(p: &ScenarioParams) -> Result<Scenario<f64>> {
    let sys = masses_or(p, 3)?;
    let q = equilateral(1.0, &sys);
    let u = crate::system::total_potential(&sys, &q)?;
    let inertia: f64 = q.iter().zip(sys.masses()).map(|(x, m)| m * x.norm_squared()).sum();
    let kappa = (2.0 * u / inertia).sqrt();
    let vel = q.iter().map(|x| x * kappa).collect();
    let t0 = p.t0.unwrap_or(2.0 / (3.0 * kappa));
    let state = CartesianState::new(&sys, t0, q, vel)?;
    Scenario::new(
        "lagrange_parabolic",
        sys,
        state,
        Cluster::all(3),
        Mode::Parabolic,
        StopConditions {
            t_end: p.t_end.unwrap_or(1e6),
            r_min: None,
            r_max: p.r_max,
        },
    )
}

fn binary_state(sys: &MassSystem<f64>, distance: f64, eps: f64) -> Result<CartesianState<f64>> {
    let (m1, m2) = (sys.mass(0), sys.mass(1));
    let m12 = m1 + m2;
    let ang = std::f64::consts::FRAC_PI_3;
    let q = vec![
        v(-m2 / m12, 0.0),
        v(m1 / m12, 0.0),
        v(distance * ang.cos(), distance * ang.sin()),
    ];
    let vel = vec![v(0.0, -m2 / m12 * eps), v(0.0, m1 / m12 * eps), Vec2::zeros()];
    CartesianState::centered(sys, 0.0, q, vel)
}

fn tuning_options() -> Options<f64> {
    Options {
        tol: Tolerances {
            rtol: 1e-13,
            atol: 1e-16,
        },
        ..Default::default()
    }
}

/// Signed pair angular momentum where the pair either reaches `floor` or
/// passes pericentre.
fn pair_mu_at_floor(sys: &MassSystem<f64>, distance: f64, eps: f64, floor: f64) -> Result<f64> {
    let s = binary_state(sys, distance, eps)?;
    let masses = sys.masses().to_vec();
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| flat_rhs(&masses, y, dy);
    let events: Vec<EventFn<'_, f64>> = vec![
        Box::new(move |_t, y: &[f64]| ((y[2] - y[0]).powi(2) + (y[3] - y[1]).powi(2)).sqrt() - floor),
        // Positive while the pair approaches.
        Box::new(|_t, y: &[f64]| {
            -((y[2] - y[0]) * (y[8] - y[6]) + (y[3] - y[1]) * (y[9] - y[7]))
        }),
    ];
    let sol = integrator::integrate(&mut rhs, 0.0, &s.to_flat(), 50.0, &tuning_options(), &events, |_| true)?;
    if !matches!(sol.termination, Termination::Event(_)) {
        return Err(Error::Divergence(format!(
            "tuning run ended without reaching the pair floor ({:?})",
            sol.termination
        )));
    }
    let last = CartesianState::from_flat(*sol.t.last().unwrap(), sol.y.last().unwrap());
    let k = Cluster::new(vec![0, 1], 3)?;
    Ok(cluster_geometry(sys, &k, &last.q, &last.v)?.mu)
}

/// Bisection for a sign change of `f` on `[a, b]`, expanding the bracket
/// geometrically if needed.
fn bisect(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    let mut expand = 0;
    while fa.signum() == fb.signum() {
        expand += 1;
        if expand > 20 {
            return Err(Error::NoConvergence {
                iterations: expand,
                residual: fa.abs().min(fb.abs()),
            });
        }
        let w = b - a;
        a -= w;
        b += w;
        fa = f(a)?;
        fb = f(b)?;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// A pair at separation 1, released with a small transverse relative
/// velocity, plus a third body at distance `distance` (default 5) and 60
/// degrees off the pair axis. The transverse velocity is tuned so that the
/// tidal torque of the third body is exactly compensated and the pair
/// falls into a collision with vanishing angular momentum. Stops at pair
/// distance `r_min` (default `1e-2`).
pub fn binary_plus_spectator_collision(p: &ScenarioParams) -> Result<Scenario<f64>> {
    let sys = masses_or(p, 3)?;
    let distance = p.distance.unwrap_or(5.0);
    let floor = p.tune_floor.unwrap_or(1e-4);
    let eps = bisect(|e| pair_mu_at_floor(&sys, distance, e, floor), -0.01, 0.01, 1e-17)?;
    let state = binary_state(&sys, distance, eps)?;
    Ok(Scenario::new(
        "binary_plus_spectator_collision",
        sys,
        state,
        Cluster::new(vec![0, 1], 3)?,
        Mode::Collision,
        StopConditions {
            t_end: p.t_end.unwrap_or(50.0),
            r_min: Some(p.r_min.unwrap_or(1e-2)),
            r_max: p.r_max,
        },
    )?
    .with_tolerances(tuning_options().tol))
}

fn escaper_state(sys: &MassSystem<f64>, ell: f64, energy: f64, distance: f64, speed: f64) -> Result<CartesianState<f64>> {
    let (m1, m2) = (sys.mass(0), sys.mass(1));
    let m12 = m1 + m2;
    let mred = m1 * m2 / m12;
    let r0 = 1.0;
    // relative motion: e = |rdot|^2/2 - m12/r per unit reduced mass
    let vt = ell / (mred * r0);
    let v2 = 2.0 * (energy / mred + m12 / r0);
    let vr2 = v2 - vt * vt;
    if !(vr2 > 0.0) {
        return Err(Error::InvalidParameter("pair angular momentum too large for its energy".into()));
    }
    let rel = v(vr2.sqrt(), vt);
    let q = vec![v(-m2 / m12 * r0, 0.0), v(m1 / m12 * r0, 0.0), v(0.0, distance)];
    let vel = vec![-rel * (m2 / m12), rel * (m1 / m12), v(0.0, speed)];
    CartesianState::centered(sys, 0.0, q, vel)
}

/// Pair energy at time `t`. A pair that turns around before `t` is bound;
/// the run stops there and reports its (negative) energy.
fn pair_energy_at(sys: &MassSystem<f64>, ell: f64, energy: f64, distance: f64, speed: f64, t: f64) -> Result<f64> {
    let s = escaper_state(sys, ell, energy, distance, speed)?;
    let masses = sys.masses().to_vec();
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| flat_rhs(&masses, y, dy);
    let events: Vec<EventFn<'_, f64>> = vec![Box::new(|_t, y: &[f64]| {
        (y[2] - y[0]) * (y[8] - y[6]) + (y[3] - y[1]) * (y[9] - y[7])
    })];
    let sol = integrator::integrate(&mut rhs, 0.0, &s.to_flat(), t, &tuning_options(), &events, |_| true)?;
    if matches!(sol.termination, Termination::StepUnderflow | Termination::MaxSteps) {
        return Err(Error::Divergence(format!("tuning run stopped: {:?}", sol.termination)));
    }
    let last = CartesianState::from_flat(*sol.t.last().unwrap(), sol.y.last().unwrap());
    let k = Cluster::new(vec![0, 1], 3)?;
    let h = cluster_geometry(sys, &k, &last.q, &last.v)?.energy;
    if sol.termination == Termination::Event(0) {
        return Ok(h.min(-f64::MIN_POSITIVE));
    }
    Ok(h)
}

/// A separating pair with small angular momentum (default 0.02) plus a third
/// body escaping from distance 10 at speed 2. The pair energy is tuned so
/// that it vanishes at `10 t_end`, which makes the pair parabolic over the
/// integrated range `[0, t_end]` (default `t_end = 1e5`).
pub fn parabolic_pair_plus_escaper(p: &ScenarioParams) -> Result<Scenario<f64>> {
    let sys = masses_or(p, 3)?;
    let ell = p.angular_momentum.unwrap_or(0.02);
    let distance = p.distance.unwrap_or(10.0);
    let speed = p.speed.unwrap_or(2.0);
    let t_end = p.t_end.unwrap_or(1e5);
    let energy = bisect(
        |e| pair_energy_at(&sys, ell, e, distance, speed, 10.0 * t_end),
        -1e-3,
        1e-3,
        1e-17,
    )?;
    let state = escaper_state(&sys, ell, energy, distance, speed)?;
    Ok(Scenario::new(
        "parabolic_pair_plus_escaper",
        sys,
        state,
        Cluster::new(vec![0, 1], 3)?,
        Mode::Parabolic,
        StopConditions {
            t_end,
            r_min: p.r_min,
            r_max: p.r_max,
        },
    )?
    .with_tolerances(tuning_options().tol))
}

fn custom(p: &ScenarioParams) -> Result<Scenario<f64>> {
    let missing = |f: &str| Error::InvalidParameter(format!("custom scenario needs `{}`", f));
    let masses = p.masses.clone().ok_or_else(|| missing("masses"))?;
    let pos = p.positions.as_ref().ok_or_else(|| missing("positions"))?;
    let vel = p.velocities.as_ref().ok_or_else(|| missing("velocities"))?;
    let cl = p.cluster.as_ref().ok_or_else(|| missing("cluster"))?;
    let mode = p.mode.ok_or_else(|| missing("mode"))?;
    let t_end = p.t_end.ok_or_else(|| missing("t_end"))?;
    let sys = MassSystem::new(masses)?;
    let state = CartesianState::new(
        &sys,
        p.t0.unwrap_or(0.0),
        pos.iter().map(|a| v(a[0], a[1])).collect(),
        vel.iter().map(|a| v(a[0], a[1])).collect(),
    )?;
    let cluster = Cluster::from_one_based(cl, sys.n())?;
    Scenario::new(
        "custom",
        sys,
        state,
        cluster,
        mode,
        StopConditions {
            t_end,
            r_min: p.r_min,
            r_max: p.r_max,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::total_potential;

    #[test]
    fn kepler_start_is_parabolic() {
        let s = kepler_parabolic_radial(&ScenarioParams::default()).unwrap();
        let e = s.initial.energy(&s.sys).unwrap();
        let u = total_potential(&s.sys, &s.initial.q).unwrap();
        assert!(e.abs() < 1e-14 * u);
        assert_eq!(s.initial.angular_momentum(&s.sys), 0.0);
        let r = (s.initial.q[1] - s.initial.q[0]).norm();
        assert!((r / s.initial.t.powf(2.0 / 3.0) - 9f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn lagrange_parabolic_has_zero_energy() {
        let s = lagrange_parabolic(&ScenarioParams::default()).unwrap();
        assert!(s.initial.energy(&s.sys).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lagrange_collision_starts_at_rest_on_triangle() {
        let s = lagrange_homothetic_collision(&ScenarioParams {
            masses: Some(vec![1.0, 2.0, 3.0]),
            ..Default::default()
        })
        .unwrap();
        for i in 0..3 {
            let d = (s.initial.q[i] - s.initial.q[(i + 1) % 3]).norm();
            assert!((d - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            scenario_library("nope", &ScenarioParams::default()),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn custom_requires_fields() {
        assert!(scenario_library("custom", &ScenarioParams::default()).is_err());
        let p = ScenarioParams {
            masses: Some(vec![1.0, 1.0]),
            positions: Some(vec![[-0.5, 0.0], [0.5, 0.0]]),
            velocities: Some(vec![[0.0, -0.5], [0.0, 0.5]]),
            cluster: Some(vec![1, 2]),
            mode: Some(Mode::Generic),
            t_end: Some(1.0),
            ..Default::default()
        };
        let s = scenario_library("custom", &p).unwrap();
        assert_eq!(s.cluster.indices(), &[0, 1]);
    }
}
