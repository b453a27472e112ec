//! Parabolic / collision classification of a cluster along a trajectory and
//! the external-force residual of the cluster's relative equations.

use serde::{Deserialize, Serialize};

use super::{StopReason, Trajectory};
use crate::fit::{line, power_fit_window};
use crate::system::{cluster_geometry, cross_gradient, Cluster, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    KParabolic,
    KCollision,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    /// `C1 t^{2/3} <= r_ij <= C2 t^{2/3}` inside the cluster.
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    /// `r_ij >= C3 t` across the cluster boundary.
    pub c3: Option<f64>,
    /// Extrapolated collision time.
    pub collision_time: Option<f64>,
    /// Time window the evidence was taken from.
    pub window: (f64, f64),
    /// Smallest and largest fitted exponent of internal distances vs `t`.
    pub internal_exponents: Option<(f64, f64)>,
    /// Smallest fitted exponent of cross distances vs `t`.
    pub cross_exponent: Option<f64>,
    pub note: String,
}

impl ClassificationReport {
    fn undetermined(window: (f64, f64), note: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Undetermined,
            c1: None,
            c2: None,
            c3: None,
            collision_time: None,
            window,
            internal_exponents: None,
            cross_exponent: None,
            note: note.into(),
        }
    }
}

const INTERNAL_EXPONENT_TOL: f64 = 0.1;
const CROSS_EXPONENT_MIN: f64 = 0.9;

/// Classifies the cluster's motion. Parabolic evidence is taken from the
/// last decade in `t`; collision evidence from a linear fit of `I_k^{3/4}`
/// against `t` near the end of a run stopped by a close approach.
pub fn classify(tr: &Trajectory<f64>, cluster: &Cluster) -> ClassificationReport {
    let times = tr.times();
    let (t_first, t_last) = match (times.first(), times.last()) {
        (Some(a), Some(b)) if times.len() >= 3 => (*a, *b),
        _ => return ClassificationReport::undetermined((0.0, 0.0), "fewer than three samples"),
    };
    if tr.stop == StopReason::CollisionApproach {
        return classify_collision(tr, cluster);
    }
    if !(t_last > 0.0) || t_first > t_last / 10.0 {
        return ClassificationReport::undetermined(
            (t_first, t_last),
            "less than one decade of positive time",
        );
    }
    classify_parabolic(tr, cluster, &times)
}

fn classify_parabolic(tr: &Trajectory<f64>, cluster: &Cluster, times: &[f64]) -> ClassificationReport {
    let t_last = *times.last().unwrap();
    let lo = t_last / 10.0;
    let window = (lo, t_last);
    let idx = cluster.indices();
    let comp = cluster.complement();
    let dist = |i: usize, j: usize| -> Vec<f64> { tr.states.iter().map(|s| (s.q[i] - s.q[j]).norm()).collect() };

    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    let (mut emin, mut emax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d = dist(i, j);
            let f = match power_fit_window(times, &d, 10.0) {
                Ok(f) => f,
                Err(e) => return ClassificationReport::undetermined(window, e.to_string()),
            };
            emin = emin.min(f.exponent);
            emax = emax.max(f.exponent);
            for (t, r) in times.iter().zip(&d) {
                if *t >= lo {
                    let c = r / t.powf(2.0 / 3.0);
                    c1 = c1.min(c);
                    c2 = c2.max(c);
                }
            }
        }
    }
    let mut c3 = None;
    let mut cross_exp = None;
    for &i in idx {
        for &j in &comp {
            let d = dist(i, j);
            let f = match power_fit_window(times, &d, 10.0) {
                Ok(f) => f,
                Err(e) => return ClassificationReport::undetermined(window, e.to_string()),
            };
            cross_exp = Some(cross_exp.map_or(f.exponent, |e: f64| e.min(f.exponent)));
            for (t, r) in times.iter().zip(&d) {
                if *t >= lo {
                    let c = r / t;
                    c3 = Some(c3.map_or(c, |x: f64| x.min(c)));
                }
            }
        }
    }
    let internal_ok = (emin - 2.0 / 3.0).abs() <= INTERNAL_EXPONENT_TOL && (emax - 2.0 / 3.0).abs() <= INTERNAL_EXPONENT_TOL;
    let cross_ok = cross_exp.map_or(true, |e| e >= CROSS_EXPONENT_MIN) && c3.map_or(true, |c| c > 0.0);
    let verdict = if internal_ok && cross_ok && c1 <= c2 {
        Verdict::KParabolic
    } else {
        Verdict::Undetermined
    };
    let note = match verdict {
        Verdict::KParabolic => "internal distances grow like t^(2/3), cross distances linearly".to_string(),
        _ if !internal_ok => format!("internal distance exponents [{:.3}, {:.3}] are not 2/3", emin, emax),
        _ => "cross distances do not grow linearly".to_string(),
    };
    ClassificationReport {
        verdict,
        c1: Some(c1),
        c2: Some(c2),
        c3,
        collision_time: None,
        window,
        internal_exponents: Some((emin, emax)),
        cross_exponent: cross_exp,
        note,
    }
}

fn classify_collision(tr: &Trajectory<f64>, cluster: &Cluster) -> ClassificationReport {
    let mut t = Vec::new();
    let mut y = Vec::new();
    for s in &tr.states {
        match cluster_geometry(&tr.sys, cluster, &s.q, &s.v) {
            Ok(g) => {
                t.push(s.t);
                y.push(g.inertia.powf(0.75));
            }
            Err(e) => return ClassificationReport::undetermined((0.0, 0.0), e.to_string()),
        }
    }
    let y_end = *y.last().unwrap();
    let start = y.iter().rposition(|v| *v > 10.0 * y_end).map_or(0, |i| i + 1);
    let (tt, yy) = (&t[start..], &y[start..]);
    let window = (tt[0], *tt.last().unwrap());
    if tt.len() < 5 {
        return ClassificationReport::undetermined(window, "too few samples near the close approach");
    }
    let f = match line(tt, yy) {
        Ok(f) => f,
        Err(e) => return ClassificationReport::undetermined(window, e.to_string()),
    };
    let t_col = f.root();
    let span = window.1 - window.0;
    let y_span = yy[0] - y_end;
    let last = tr.last();
    let idx = cluster.indices();
    let comp = cluster.complement();
    let mut inner = 0.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            inner = inner.max((last.q[i] - last.q[j]).norm());
        }
    }
    let mut outer = f64::INFINITY;
    for &i in idx {
        for &j in &comp {
            outer = outer.min((last.q[i] - last.q[j]).norm());
        }
    }
    let linear = f.slope < 0.0 && f.rms <= 1e-2 * y_span;
    let ahead = t_col >= window.1 - 1e-9 * span.max(1.0) && t_col - window.1 <= span;
    let isolated = outer > 10.0 * inner;
    let verdict = if linear && ahead && isolated {
        Verdict::KCollision
    } else {
        Verdict::Undetermined
    };
    let note = if verdict == Verdict::KCollision {
        "I_k^(3/4) decreases linearly to zero; cluster isolated from the rest".to_string()
    } else if !isolated {
        "bodies outside the cluster take part in the close approach".to_string()
    } else {
        "I_k^(3/4) is not linear in t near the end".to_string()
    };
    ClassificationReport {
        verdict,
        c1: None,
        c2: None,
        c3: None,
        collision_time: Some(t_col),
        window,
        internal_exponents: None,
        cross_exponent: None,
        note,
    }
}

/// `|gamma_i(t)|` for each body of the cluster along the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSeries {
    pub t: Vec<f64>,
    /// `gamma[b][s]`: cluster body `b` (cluster order) at sample `s`.
    pub gamma: Vec<Vec<f64>>,
}

/// External-force residual of the relative equations of motion,
/// `gamma_i = grad_i U_kk' - (m_i / m_k) sum_{j in k} grad_j U_kk'`,
/// evaluated exactly from positions.
pub fn gamma_residual(tr: &Trajectory<f64>, cluster: &Cluster) -> crate::error::Result<GammaSeries> {
    let idx = cluster.indices();
    let mk = tr.sys.cluster_mass(cluster);
    let mut gamma = vec![Vec::with_capacity(tr.len()); idx.len()];
    for s in &tr.states {
        let g = cross_gradient(&tr.sys, cluster, &s.q)?;
        let total = idx.iter().fold(Vec2::zeros(), |a, &j| a + g[j]);
        for (b, &i) in idx.iter().enumerate() {
            gamma[b].push((g[i] - total * (tr.sys.mass(i) / mk)).norm());
        }
    }
    Ok(GammaSeries { t: tr.times(), gamma })
}
