//! Blow-up variables and the time-rescaled field.
//!
//! Parabolic: `u = r^{-1/2}`, `v = rho r^{1/2}`, `w = r^{3/2} omega`.
//! Collision: `r`, `v = rho r^{1/2}`, `w = r^{3/2} omega`.
//! Both use `dtau = r^{-3/2} dt`.

use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Chart, ShapeSpace, ShapeState, CHART_SWITCH_RATIO};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::system::Cluster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Parabolic,
    Collision,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Parabolic => "parabolic",
            Variant::Collision => "collision",
        }
    }

    /// Column name of the size variable.
    pub fn size_name(&self) -> &'static str {
        match self {
            Variant::Parabolic => "u",
            Variant::Collision => "r",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parabolic" => Ok(Variant::Parabolic),
            "collision" => Ok(Variant::Collision),
            _ => Err(Error::InvalidParameter(format!("unknown blow-up variant '{}'", s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupState<T: Real> {
    pub variant: Variant,
    pub tau: T,
    pub t: T,
    /// `u` or `r`.
    pub size: T,
    pub v: T,
    pub s: DVector<T>,
    pub w: DVector<T>,
    pub chart: usize,
}

impl<T: Real> BlowupState<T> {
    pub fn radius(&self) -> T {
        match self.variant {
            Variant::Parabolic => T::one() / (self.size * self.size),
            Variant::Collision => self.size,
        }
    }
}

pub fn to_blowup<T: Real>(sh: &ShapeState<T>, variant: Variant, tau: T) -> BlowupState<T> {
    let sr = sh.r.sqrt();
    let size = match variant {
        Variant::Parabolic => T::one() / sr,
        Variant::Collision => sh.r,
    };
    BlowupState {
        variant,
        tau,
        t: sh.t,
        size,
        v: sh.rho * sr,
        s: sh.s.clone(),
        w: &sh.omega * (sh.r * sr),
        chart: sh.chart,
    }
}

/// `(r, rho, s, omega)` of a blow-up state.
pub fn from_blowup<T: Real>(b: &BlowupState<T>) -> (T, T, DVector<T>, DVector<T>) {
    let r = b.radius();
    let sr = r.sqrt();
    (r, b.v / sr, b.s.clone(), &b.w / (r * sr))
}

/// `h_k` from blow-up variables, with the bracket `h_k / u^2` (parabolic)
/// or `r h_k` (collision).
pub fn energy_blowup<T: Real>(chart: &Chart<T>, b: &BlowupState<T>, mu: T) -> Result<(T, T)> {
    let d = chart.data(&b.s, &b.w)?;
    let half = lit::<T>(0.5);
    let core = half * b.v * b.v + half * d.f - d.v;
    Ok(match b.variant {
        Variant::Parabolic => {
            let u2 = b.size * b.size;
            let bracket = core + half * u2 * mu * mu;
            (u2 * bracket, bracket)
        }
        Variant::Collision => {
            let bracket = core + half * mu * mu / b.size;
            (bracket / b.size, bracket)
        }
    })
}

/// Non-autonomous inputs of the blow-up field: `P`, `Q` and the
/// coefficient `M` of the magnetic term.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingValue<T: Real> {
    pub p: T,
    pub q: DVector<T>,
    pub m: T,
}

impl<T: Real> ForcingValue<T> {
    pub fn zero(dim: usize) -> Self {
        Self {
            p: T::zero(),
            q: DVector::zeros(dim),
            m: T::zero(),
        }
    }
}

/// Derivatives with respect to `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupRates<T: Real> {
    /// `dt/dtau = r^{3/2}`.
    pub t: T,
    pub size: T,
    pub v: T,
    pub s: DVector<T>,
    pub w: DVector<T>,
}

/// Rescaled field. Parabolic: forcing enters as `u^2 P`, `u^2 Q` and
/// `u M A^{-1} K w` with `M = mu`. Collision: as `r^2 P`, `r^2 Q` and
/// `r^2 M A^{-1} K w` with `M = mu r^{-5/2}`.
pub fn res_field<T: Real>(chart: &Chart<T>, b: &BlowupState<T>, f: &ForcingValue<T>) -> Result<BlowupRates<T>> {
    let d = chart.data(&b.s, &b.w)?;
    let half = lit::<T>(0.5);
    let (size_rate, weight, magnetic) = match b.variant {
        Variant::Parabolic => (-half * b.size * b.v, b.size * b.size, b.size),
        Variant::Collision => (b.size * b.v, b.size * b.size, b.size * b.size),
    };
    let v_rate = half * b.v * b.v + d.f - d.v + weight * f.p;
    let w_rate = if chart.dim() == 0 {
        DVector::zeros(0)
    } else {
        let rhs = chart.potential_gradient(&b.s)? + chart.f_gradient(&b.s, &b.w) * half - chart.da_term(&b.s, &b.w)
            + chart.curvature(&b.s) * &b.w * (magnetic * f.m);
        super::solve_spd(&d.a, &rhs)? - &b.w * (half * b.v) + &f.q * weight
    };
    let r = b.radius();
    Ok(BlowupRates {
        t: r * r.sqrt(),
        size: size_rate,
        v: v_rate,
        s: b.w.clone(),
        w: w_rate,
    })
}

/// `P`, `Q` and `M` at a shape state.
pub fn forcing_at<T: Real>(space: &ShapeSpace<T>, sh: &ShapeState<T>, variant: Variant) -> Result<ForcingValue<T>> {
    let ch = space.chart(sh.chart)?;
    let cp = space.cross_partials(sh)?;
    let r = sh.r;
    let r3 = r * r * r;
    let q = if ch.dim() == 0 {
        DVector::zeros(0)
    } else {
        let a = ch.a_matrix(&sh.s);
        let b = ch.b_vector(&sh.s);
        super::solve_spd(&a, &(&cp.ds - &b * cp.dtheta))?
    };
    Ok(match variant {
        Variant::Parabolic => ForcingValue {
            p: sh.mu * sh.mu + r3 * cp.dr,
            q: q * (r * r),
            m: sh.mu,
        },
        Variant::Collision => ForcingValue {
            p: sh.mu * sh.mu / r3 + cp.dr,
            q: q / r,
            m: sh.mu / (r * r * r.sqrt()),
        },
    })
}

/// One sample of a transformed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupSample {
    pub state: BlowupState<f64>,
    pub r: f64,
    pub rho: f64,
    /// Phase, spliced continuously across chart switches.
    pub theta: f64,
    pub theta_dot: f64,
    pub mu: f64,
    pub hk: f64,
    /// `F(s, w)`.
    pub f: f64,
    /// `|omega|_FS = sqrt(F(s, omega))`.
    pub speed: f64,
    /// `sqrt(B A^{-1} B^T)`, bounding `|B omega| <= b_norm |omega|_FS`.
    pub b_norm: f64,
    pub forcing: ForcingValue<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupTrajectory {
    pub variant: Variant,
    pub cluster: Cluster,
    pub samples: Vec<BlowupSample>,
    /// Sample indices at which the chart changes.
    pub switches: Vec<usize>,
}

impl BlowupTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn tau(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.tau).collect()
    }

    pub fn forcing(&self) -> Forcing {
        Forcing {
            variant: self.variant,
            tau: self.tau(),
            values: self.samples.iter().map(|s| s.forcing.clone()).collect(),
            chart: self.samples.iter().map(|s| s.state.chart).collect(),
        }
    }
}

/// Forcing sampled along a transformed trajectory, interpolated linearly
/// in `tau` within a chart and taken from the nearest sample across a
/// chart switch. Clamped outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub variant: Variant,
    pub tau: Vec<f64>,
    pub values: Vec<ForcingValue<f64>>,
    pub chart: Vec<usize>,
}

impl Forcing {
    pub fn eval(&self, tau: f64) -> ForcingValue<f64> {
        let n = self.tau.len();
        if n == 0 {
            return ForcingValue::zero(0);
        }
        if tau <= self.tau[0] {
            return self.values[0].clone();
        }
        if tau >= self.tau[n - 1] {
            return self.values[n - 1].clone();
        }
        let i = self.tau.partition_point(|x| *x <= tau).max(1) - 1;
        let (t0, t1) = (self.tau[i], self.tau[i + 1]);
        let a = if t1 > t0 { (tau - t0) / (t1 - t0) } else { 0.0 };
        if self.chart[i] != self.chart[i + 1] {
            return self.values[if a < 0.5 { i } else { i + 1 }].clone();
        }
        let (x, y) = (&self.values[i], &self.values[i + 1]);
        ForcingValue {
            p: x.p + a * (y.p - x.p),
            q: &x.q + (&y.q - &x.q) * a,
            m: x.m + a * (y.m - x.m),
        }
    }
}

/// `int r^{-3/2} dt` over one step by Simpson's rule with a cubic Hermite
/// midpoint for `r`.
fn tau_increment(t0: f64, t1: f64, r0: f64, r1: f64, rho0: f64, rho1: f64) -> f64 {
    let h = t1 - t0;
    let mid = 0.5 * (r0 + r1) + h * (rho0 - rho1) / 8.0;
    let f = |r: f64| r.powf(-1.5);
    h / 6.0 * (f(r0) + 4.0 * f(mid.max(0.5 * r0.min(r1))) + f(r1))
}

/// Transforms a trajectory into blow-up variables for `cluster`. Charts
/// follow the largest coordinate with hysteresis; the phase is unwrapped
/// against the prediction `theta' dt` and the transform is refused when
/// consecutive samples are more than `pi` apart in phase.
pub fn transform(tr: &Trajectory<f64>, cluster: &Cluster, variant: Variant) -> Result<BlowupTrajectory> {
    use std::f64::consts::PI;
    let space = ShapeSpace::new(&tr.sys, cluster)?;
    let mut samples: Vec<BlowupSample> = Vec::with_capacity(tr.len());
    let mut switches = Vec::new();
    let mut chart = space.default_chart();
    let mut offset = 0.0;
    let mut tau = 0.0;
    for (i, st) in tr.states.iter().enumerate() {
        let (z, _, _, _) = space.relative(st)?;
        if i == 0 && ShapeSpace::chart_ratio(&z, chart) < CHART_SWITCH_RATIO {
            chart = ShapeSpace::<f64>::preferred_chart(&z);
        }
        let mut sh = space.to_shape(st, Some(chart))?;
        let d = space.chart(chart)?.data(&sh.s, &sh.omega)?;
        let theta_dot = sh.mu / (sh.r * sh.r) - d.b.dot(&sh.omega);
        if let Some(prev) = samples.last() {
            let h = st.t - prev.state.t;
            let pred = 0.5 * (prev.theta_dot + theta_dot) * h;
            let target = prev.theta + pred;
            let raw = sh.theta + offset;
            let theta = raw + 2.0 * PI * ((target - raw) / (2.0 * PI)).round();
            let jump = theta - prev.theta;
            if pred.abs() >= PI || jump.abs() >= PI {
                return Err(Error::ThetaSplice { index: i, jump });
            }
            sh.theta = theta;
            tau += tau_increment(prev.state.t, st.t, prev.r, sh.r, prev.rho, sh.rho);
        } else {
            sh.theta += offset;
        }
        let mut theta_dot = theta_dot;
        if ShapeSpace::chart_ratio(&z, chart) < CHART_SWITCH_RATIO {
            let next = ShapeSpace::<f64>::preferred_chart(&z);
            let mut moved = space.to_shape(st, Some(next))?;
            offset = sh.theta - moved.theta;
            moved.theta = sh.theta;
            chart = next;
            sh = moved;
            let d = space.chart(chart)?.data(&sh.s, &sh.omega)?;
            theta_dot = sh.mu / (sh.r * sh.r) - d.b.dot(&sh.omega);
            switches.push(i);
        }
        let ch = space.chart(chart)?;
        let d = ch.data(&sh.s, &sh.omega)?;
        let b_norm = if ch.dim() == 0 {
            0.0
        } else {
            d.b.dot(&super::solve_spd(&d.a, &d.b)?).max(0.0).sqrt()
        };
        let forcing = forcing_at(&space, &sh, variant)?;
        let state = to_blowup(&sh, variant, tau);
        let f = d.f * sh.r.powi(3);
        samples.push(BlowupSample {
            r: sh.r,
            rho: sh.rho,
            theta: sh.theta,
            theta_dot,
            mu: sh.mu,
            hk: space.energy(&sh)?,
            f,
            speed: d.f.max(0.0).sqrt(),
            b_norm,
            forcing,
            state,
        });
    }
    Ok(BlowupTrajectory {
        variant,
        cluster: cluster.clone(),
        samples,
        switches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{CartesianState, MassSystem, Vec2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (ShapeSpace<f64>, ShapeState<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = MassSystem::new(vec![1.0, 2.0, 0.7, 1.5]).unwrap();
        let cl = Cluster::new(vec![0, 1, 3], 4).unwrap();
        let q = (0..4).map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let v = (0..4).map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let st = CartesianState::centered(&sys, 0.0, q, v).unwrap();
        let sp = ShapeSpace::new(&sys, &cl).unwrap();
        let sh = sp.to_shape(&st, None).unwrap();
        (sp, sh)
    }

    #[test]
    fn round_trip_both_variants() {
        let (_, sh) = setup(1);
        for variant in [Variant::Parabolic, Variant::Collision] {
            let b = to_blowup(&sh, variant, 0.0);
            let (r, rho, s, om) = from_blowup(&b);
            assert!((r - sh.r).abs() < 1e-13 * sh.r);
            assert!((rho - sh.rho).abs() < 1e-13 * (1.0 + sh.rho.abs()));
            assert!((s - &sh.s).norm() < 1e-13);
            assert!((om - &sh.omega).norm() < 1e-13 * (1.0 + sh.omega.norm()));
        }
    }

    /// The rescaled field equals the chain rule applied to the shape field.
    #[test]
    fn rescaled_field_matches_shape_field() {
        for seed in 0..5 {
            let (sp, sh) = setup(seed);
            let rates = sp.el_field(&sh).unwrap();
            let ch = sp.chart(sh.chart).unwrap();
            let r = sh.r;
            let r32 = r * r.sqrt();
            for variant in [Variant::Parabolic, Variant::Collision] {
                let b = to_blowup(&sh, variant, 0.0);
                let f = forcing_at(&sp, &sh, variant).unwrap();
                let res = res_field(ch, &b, &f).unwrap();
                // d/dtau = r^{3/2} d/dt
                let v_dot = r32 * (rates.rho * r.sqrt() + 0.5 * sh.rho * sh.rho / r.sqrt());
                let w_dot = (&rates.omega * r32 + &sh.omega * (1.5 * r.sqrt() * sh.rho)) * r32;
                let size_dot = match variant {
                    Variant::Parabolic => r32 * (-0.5 * r.powf(-1.5) * sh.rho),
                    Variant::Collision => r32 * sh.rho,
                };
                assert!((res.v - v_dot).abs() < 1e-10 * (1.0 + v_dot.abs()), "{} {}", res.v, v_dot);
                assert!((res.size - size_dot).abs() < 1e-12 * (1.0 + size_dot.abs()));
                assert!((&res.w - &w_dot).norm() < 1e-10 * (1.0 + w_dot.norm()));
                assert!((&res.s - &b.w).norm() == 0.0);
                assert!((res.t - r32).abs() < 1e-14 * r32);
            }
        }
    }

    #[test]
    fn energy_agrees_across_representations() {
        for seed in 0..5 {
            let (sp, sh) = setup(seed);
            let h = sp.energy(&sh).unwrap();
            for variant in [Variant::Parabolic, Variant::Collision] {
                let b = to_blowup(&sh, variant, 0.0);
                let (e, _) = energy_blowup(sp.chart(sh.chart).unwrap(), &b, sh.mu).unwrap();
                assert!((e - h).abs() < 1e-10 * (1.0 + h.abs()));
            }
        }
    }

    #[test]
    fn tau_of_constant_radius() {
        let d = tau_increment(0.0, 2.0, 4.0, 4.0, 0.0, 0.0);
        assert!((d - 2.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn forcing_interpolates_within_chart() {
        let f = Forcing {
            variant: Variant::Collision,
            tau: vec![0.0, 1.0, 2.0],
            values: vec![
                ForcingValue { p: 0.0, q: DVector::from_vec(vec![0.0, 0.0]), m: 0.0 },
                ForcingValue { p: 1.0, q: DVector::from_vec(vec![2.0, 0.0]), m: 1.0 },
                ForcingValue { p: 5.0, q: DVector::from_vec(vec![0.0, 0.0]), m: 0.0 },
            ],
            chart: vec![0, 0, 1],
        };
        assert!((f.eval(0.5).p - 0.5).abs() < 1e-15);
        assert!((f.eval(0.5).q[0] - 1.0).abs() < 1e-15);
        assert_eq!(f.eval(1.4).p, 1.0);
        assert_eq!(f.eval(9.0).p, 5.0);
    }
}
