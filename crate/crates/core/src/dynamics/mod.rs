//! Direct Cartesian integration of the Newtonian n-body problem.

mod classify;
pub mod scenarios;

pub use classify::{classify, gamma_residual, ClassificationReport, GammaSeries, Verdict};
pub use scenarios::{scenario_library, ScenarioParams, NAMES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{self, EventFn, Options, Termination, Tolerances};
use crate::scalar::Real;
use crate::system::{min_pair_distance, CartesianState, Cluster, MassSystem, Vec2};

/// Accelerations `grad_i U / m_i`.
pub fn newton_rhs<T: Real>(sys: &MassSystem<T>, q: &[Vec2<T>]) -> Result<Vec<Vec2<T>>> {
    let m = sys.masses();
    let n = q.len();
    let mut a = vec![Vec2::zeros(); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = q[j] - q[i];
            let r2 = d.norm_squared();
            if !(r2 > T::zero()) {
                return Err(Error::Collision(i, j));
            }
            let inv3 = T::one() / (r2 * r2.sqrt());
            a[i] += d * (m[j] * inv3);
            a[j] -= d * (m[i] * inv3);
        }
    }
    Ok(a)
}

/// Right-hand side on the flat layout `[q..., v...]`.
pub fn flat_rhs<T: Real>(masses: &[T], y: &[T], dy: &mut [T]) -> Result<()> {
    let n = masses.len();
    let (q, v) = y.split_at(2 * n);
    dy[..2 * n].copy_from_slice(v);
    let acc = &mut dy[2 * n..];
    acc.iter_mut().for_each(|a| *a = T::zero());
    for i in 0..n {
        let (xi, yi) = (q[2 * i], q[2 * i + 1]);
        for j in i + 1..n {
            let dx = q[2 * j] - xi;
            let dyy = q[2 * j + 1] - yi;
            let r2 = dx * dx + dyy * dyy;
            if !(r2 > T::zero()) {
                return Err(Error::Collision(i, j));
            }
            let inv3 = T::one() / (r2 * r2.sqrt());
            acc[2 * i] += masses[j] * inv3 * dx;
            acc[2 * i + 1] += masses[j] * inv3 * dyy;
            acc[2 * j] -= masses[i] * inv3 * dx;
            acc[2 * j + 1] -= masses[i] * inv3 * dyy;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Parabolic,
    Collision,
    Generic,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Parabolic => "parabolic",
            Mode::Collision => "collision",
            Mode::Generic => "generic",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parabolic" => Ok(Mode::Parabolic),
            "collision" => Ok(Mode::Collision),
            "generic" => Ok(Mode::Generic),
            _ => Err(Error::InvalidParameter(format!("unknown mode `{}`", s))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConditions<T> {
    pub t_end: T,
    /// Stop when the smallest pair distance falls to this value.
    pub r_min: Option<T>,
    /// Stop when any body's distance from the origin exceeds this value.
    pub r_max: Option<T>,
}

#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub name: String,
    pub sys: MassSystem<T>,
    pub initial: CartesianState<T>,
    pub cluster: Cluster,
    pub mode: Mode,
    pub stop: StopConditions<T>,
    pub tol: Tolerances<T>,
}

impl<T: Real> Scenario<T> {
    pub fn new(
        name: impl Into<String>,
        sys: MassSystem<T>,
        initial: CartesianState<T>,
        cluster: Cluster,
        mode: Mode,
        stop: StopConditions<T>,
    ) -> Result<Self> {
        if initial.n() != sys.n() || cluster.n_bodies() != sys.n() {
            return Err(Error::Dimension {
                expected: sys.n(),
                got: initial.n(),
            });
        }
        if !(stop.t_end > initial.t) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} must exceed the initial time {}",
                stop.t_end, initial.t
            )));
        }
        Ok(Self {
            name: name.into(),
            sys,
            initial,
            cluster,
            mode,
            stop,
            tol: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances<T>) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Horizon,
    CollisionApproach,
    MaxRadius,
    StepUnderflow,
    MaxSteps,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::CollisionApproach => "collision-approach",
            StopReason::MaxRadius => "max-radius",
            StopReason::StepUnderflow => "step-underflow",
            StopReason::MaxSteps => "max-steps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub steps: usize,
    pub rejected: usize,
    /// `max |E - E0| / (K + U)` over the samples.
    pub max_energy_drift: f64,
    /// `max |L - L0| / sum m_i |q_i| |v_i|` over the samples.
    pub max_angular_momentum_drift: f64,
    /// Largest centre-of-mass offset or total momentum seen, relative to
    /// the configuration scale.
    pub max_com_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub sys: MassSystem<T>,
    pub states: Vec<CartesianState<T>>,
    pub stats: TrajectoryStats,
    pub stop: StopReason,
}

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> Vec<T> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &CartesianState<T> {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Keeps the samples with `t` in `[t_lo, t_hi]`.
    pub fn window(&self, t_lo: T, t_hi: T) -> Self {
        Self {
            sys: self.sys.clone(),
            states: self
                .states
                .iter()
                .filter(|s| s.t >= t_lo && s.t <= t_hi)
                .cloned()
                .collect(),
            stats: self.stats,
            stop: self.stop,
        }
    }

    /// Keeps the samples whose minimum pair distance is at least `d`,
    /// up to the first one that falls below it.
    pub fn truncate_at_distance(&self, d: T) -> Self {
        let end = self
            .states
            .iter()
            .position(|s| s.min_distance().0 < d)
            .unwrap_or(self.states.len());
        Self {
            sys: self.sys.clone(),
            states: self.states[..end].to_vec(),
            stats: self.stats,
            stop: if end < self.states.len() {
                StopReason::CollisionApproach
            } else {
                self.stop
            },
        }
    }
}

fn drift_stats<T: Real>(sys: &MassSystem<T>, states: &[CartesianState<T>]) -> Result<(f64, f64, f64)> {
    let e0 = states[0].energy(sys)?;
    let l0 = states[0].angular_momentum(sys);
    let mt = sys.total_mass();
    let (mut de, mut dl, mut dc) = (0.0f64, 0.0f64, 0.0f64);
    for s in states {
        let k = s.kinetic_energy(sys);
        let u = crate::system::total_potential(sys, &s.q)?;
        de = de.max(((k - u - e0).abs() / (k + u)).as_f64());
        let scale = s
            .q
            .iter()
            .zip(&s.v)
            .zip(sys.masses())
            .fold(T::zero(), |a, ((q, v), &m)| a + m * q.norm() * v.norm());
        if scale > T::zero() {
            dl = dl.max(((s.angular_momentum(sys) - l0).abs() / scale).as_f64());
        }
        let qs = s.q.iter().fold(T::one(), |a, p| a.max(p.norm()));
        let vs = s.v.iter().fold(T::one(), |a, p| a.max(p.norm()));
        let c = s
            .q
            .iter()
            .zip(sys.masses())
            .fold(Vec2::zeros(), |a, (p, &m)| a + p * m)
            .norm()
            / (mt * qs);
        let p = s.linear_momentum(sys).norm() / (mt * vs);
        dc = dc.max(c.as_f64()).max(p.as_f64());
    }
    Ok((de, dl, dc))
}

/// Integrates a scenario, recording every accepted step.
pub fn integrate<T: Real>(scenario: &Scenario<T>) -> Result<Trajectory<T>> {
    integrate_with(scenario, &scenario.tol)
}

pub fn integrate_with<T: Real>(scenario: &Scenario<T>, tol: &Tolerances<T>) -> Result<Trajectory<T>> {
    let sys = &scenario.sys;
    let masses = sys.masses().to_vec();
    let n = sys.n();
    let y0 = scenario.initial.to_flat();
    let mut rhs = |_t: T, y: &[T], dy: &mut [T]| flat_rhs(&masses, y, dy);
    let mut events: Vec<EventFn<'_, T>> = Vec::new();
    let mut kinds = Vec::new();
    if let Some(rmin) = scenario.stop.r_min {
        events.push(Box::new(move |_t, y: &[T]| {
            let q: Vec<Vec2<T>> = (0..n).map(|i| Vec2::new(y[2 * i], y[2 * i + 1])).collect();
            min_pair_distance(&q, None).0 - rmin
        }));
        kinds.push(StopReason::CollisionApproach);
    }
    if let Some(rmax) = scenario.stop.r_max {
        events.push(Box::new(move |_t, y: &[T]| {
            let far = (0..n).fold(T::zero(), |a, i| a.max(Vec2::new(y[2 * i], y[2 * i + 1]).norm()));
            rmax - far
        }));
        kinds.push(StopReason::MaxRadius);
    }
    let opts = Options {
        tol: *tol,
        ..Default::default()
    };
    let sol = integrator::integrate(
        &mut rhs,
        scenario.initial.t,
        &y0,
        scenario.stop.t_end,
        &opts,
        &events,
        |_| true,
    )?;
    let stop = match sol.termination {
        Termination::Horizon => StopReason::Horizon,
        Termination::Event(i) => kinds[i],
        Termination::StepUnderflow => StopReason::StepUnderflow,
        Termination::MaxSteps => StopReason::MaxSteps,
    };
    let mut states = Vec::with_capacity(sol.t.len());
    for (t, y) in sol.t.iter().zip(&sol.y) {
        if let Some(prev) = states.last() {
            let prev: &CartesianState<T> = prev;
            if !(*t > prev.t) {
                continue;
            }
        }
        states.push(CartesianState::from_flat(*t, y));
    }
    let (de, dl, dc) = drift_stats(sys, &states)?;
    Ok(Trajectory {
        sys: sys.clone(),
        states,
        stats: TrajectoryStats {
            steps: sol.stats.steps,
            rejected: sol.stats.rejected,
            max_energy_drift: de,
            max_angular_momentum_drift: dl,
            max_com_drift: dc,
        },
        stop,
    })
}

/// Integrates a bare state from `t0` to `t1` (either direction) and returns
/// the final state. Used for short hops, e.g. finite differences.
pub fn propagate<T: Real>(
    sys: &MassSystem<T>,
    state: &CartesianState<T>,
    t1: T,
    tol: &Tolerances<T>,
) -> Result<CartesianState<T>> {
    let masses = sys.masses().to_vec();
    let mut rhs = |_t: T, y: &[T], dy: &mut [T]| flat_rhs(&masses, y, dy);
    let opts = Options {
        tol: *tol,
        ..Default::default()
    };
    let sol = integrator::solve(&mut rhs, state.t, &state.to_flat(), t1, &opts)?;
    if sol.termination != Termination::Horizon {
        return Err(Error::Divergence(format!("propagation stopped: {:?}", sol.termination)));
    }
    Ok(CartesianState::from_flat(t1, sol.y.last().unwrap()))
}

/// Time for two bodies released at rest at separation `d` to collide.
pub fn free_fall_time(total_mass: f64, d: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 * (d.powi(3) / (2.0 * total_mass)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn pair_accelerations() {
        let sys = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let a = newton_rhs(&sys, &[v(-0.5, 0.0), v(0.5, 0.0)]).unwrap();
        assert!((a[0] - v(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - v(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn equilateral_accelerations_point_at_centroid() {
        let sys = MassSystem::new(vec![1.0; 3]).unwrap();
        let r = 1.0 / 3f64.sqrt();
        let q: Vec<_> = (0..3)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                v(r * a.cos(), r * a.sin())
            })
            .collect();
        let a = newton_rhs(&sys, &q).unwrap();
        for i in 0..3 {
            assert!((a[i].norm() - 3f64.sqrt()).abs() < 1e-14);
            assert!((a[i].normalize() + q[i].normalize()).norm() < 1e-14);
        }
    }

    #[test]
    fn flat_and_vector_rhs_agree() {
        let sys = MassSystem::new(vec![1.0, 2.0, 0.5]).unwrap();
        let s = CartesianState::centered(
            &sys,
            0.0,
            vec![v(0.1, 0.3), v(-1.0, 0.2), v(0.7, -0.9)],
            vec![v(0.0, 0.1), v(0.2, 0.0), v(-0.3, 0.4)],
        )
        .unwrap();
        let a = newton_rhs(&sys, &s.q).unwrap();
        let mut dy = vec![0.0; 12];
        flat_rhs(sys.masses(), &s.to_flat(), &mut dy).unwrap();
        for i in 0..3 {
            assert!((dy[6 + 2 * i] - a[i].x).abs() < 1e-14);
            assert!((dy[7 + 2 * i] - a[i].y).abs() < 1e-14);
        }
        let p = (0..3).fold(Vec2::zeros(), |acc, i| acc + a[i] * sys.mass(i));
        assert!(p.norm() < 1e-14);
    }

    #[test]
    fn free_fall_collision_time() {
        let sys = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let s = CartesianState::new(&sys, 0.0, vec![v(-0.5, 0.0), v(0.5, 0.0)], vec![Vec2::zeros(); 2]).unwrap();
        let sc = Scenario::new(
            "fall",
            sys,
            s,
            Cluster::all(2),
            Mode::Collision,
            StopConditions {
                t_end: 10.0,
                r_min: Some(1e-6),
                r_max: None,
            },
        )
        .unwrap();
        let tr = integrate(&sc).unwrap();
        assert_eq!(tr.stop, StopReason::CollisionApproach);
        // Remaining fall time from separation 1e-6 is ~ 1e-9 * pi/4 ... negligible
        // against the tolerance.
        let t_exact = free_fall_time(2.0, 1.0);
        assert!((tr.last().t - t_exact).abs() < 1e-6, "{} vs {}", tr.last().t, t_exact);
    }

    #[test]
    fn rejects_non_increasing_horizon() {
        let sys = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let s = CartesianState::new(&sys, 1.0, vec![v(-0.5, 0.0), v(0.5, 0.0)], vec![Vec2::zeros(); 2]).unwrap();
        let r = Scenario::new(
            "x",
            sys,
            s,
            Cluster::all(2),
            Mode::Generic,
            StopConditions {
                t_end: 0.5,
                r_min: None,
                r_max: None,
            },
        );
        assert!(r.is_err());
    }
}
