use serde::{Deserialize, Serialize};

use crate::blowup::ShapeSpace;
use crate::dynamics::{classify, gamma_residual, Mode, Trajectory};
use crate::error::Result;
use crate::fit::{last_decade_power_fit, PowerFit};
use crate::system::{cluster_geometry, Cluster};

/// Fits below this many decades of the abscissa are reported as unreliable.
pub const MIN_DECADES: f64 = 0.5;
/// Largest residual RMS (natural-log units) accepted for a pass.
pub const MAX_RMS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Criterion {
    /// `slope <= bound`: the quantity decays at least this fast.
    AtMost { bound: f64 },
    /// `slope >= bound`.
    AtLeast { bound: f64 },
    Within { lo: f64, hi: f64 },
    /// No pass test.
    Report,
}

impl Criterion {
    pub fn holds(&self, slope: f64) -> bool {
        match *self {
            Criterion::AtMost { bound } => slope <= bound,
            Criterion::AtLeast { bound } => slope >= bound,
            Criterion::Within { lo, hi } => slope >= lo && slope <= hi,
            Criterion::Report => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Pass,
    Fail,
    /// Too little dynamic range or too few points.
    Unreliable,
    /// The series vanishes identically, which satisfies any decay bound.
    Vanishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub series: String,
    /// Abscissa of the log-log fit (`t`, `r` or `T-t`).
    pub against: String,
    #[serde(with = "crate::io::nan_null")]
    pub slope: f64,
    #[serde(with = "crate::io::nan_null")]
    pub intercept: f64,
    #[serde(with = "crate::io::nan_null_pair")]
    pub window: [f64; 2],
    #[serde(with = "crate::io::nan_null")]
    pub rms: f64,
    pub n: usize,
    pub decades: f64,
    pub target: Option<f64>,
    pub criterion: Criterion,
    pub status: FitStatus,
    pub pass: bool,
}

/// Series smaller than this relative to their natural scale are treated
/// as zero up to integration error.
pub const VANISHING_RATIO: f64 = 1e-8;

/// Last-decade log-log fit of `|y|` against `x` with the given criterion.
pub fn fit_series(series: &str, against: &str, x: &[f64], y: &[f64], target: Option<f64>, criterion: Criterion) -> RateFit {
    fit_series_scaled(series, against, x, y, None, target, criterion)
}

/// As [`fit_series`], treating the series as identically zero when
/// `|y_i| <= VANISHING_RATIO * scale_i` everywhere.
pub fn fit_series_scaled(
    series: &str,
    against: &str,
    x: &[f64],
    y: &[f64],
    scale: Option<&[f64]>,
    target: Option<f64>,
    criterion: Criterion,
) -> RateFit {
    let peak = match scale {
        Some(sc) => y.iter().zip(sc).fold(0.0f64, |a, (v, s)| {
            if v.abs() <= VANISHING_RATIO * s.abs() {
                a
            } else {
                a.max(v.abs())
            }
        }),
        None => y.iter().fold(0.0f64, |a, v| a.max(v.abs())),
    };
    let blank = RateFit {
        series: series.into(),
        against: against.into(),
        slope: f64::NAN,
        intercept: f64::NAN,
        window: [f64::NAN, f64::NAN],
        rms: f64::NAN,
        n: 0,
        decades: 0.0,
        target,
        criterion,
        status: FitStatus::Unreliable,
        pass: false,
    };
    if !y.is_empty() && peak == 0.0 {
        return RateFit {
            status: FitStatus::Vanishing,
            pass: !matches!(criterion, Criterion::Within { .. }),
            ..blank
        };
    }
    let fit: PowerFit = match last_decade_power_fit(x, y) {
        Ok(f) => f,
        Err(_) => return blank,
    };
    let reliable = fit.decades >= MIN_DECADES && fit.n >= 5;
    let ok = criterion.holds(fit.exponent) && fit.rms < MAX_RMS;
    let status = if !reliable {
        FitStatus::Unreliable
    } else if ok {
        FitStatus::Pass
    } else {
        FitStatus::Fail
    };
    RateFit {
        slope: fit.exponent,
        intercept: fit.log_prefactor,
        window: [fit.x_lo, fit.x_hi],
        rms: fit.rms,
        n: fit.n,
        decades: fit.decades,
        status,
        pass: status == FitStatus::Pass,
        ..blank
    }
}

/// Every rate law that applies in `mode`.
///
/// Parabolic, against `t`: `r_k ~ t^{2/3}`, `|h_k| = O(t^{-5/3})`,
/// `|gamma| = O(t^{-7/3})`, `|dU_kk'/dr| = O(t^{-2})`,
/// `|dU_kk'/dtheta| = O(t^{-4/3})`, `|grad_s U_kk'| = O(t^{-4/3})`.
///
/// Collision: `|mu| = O(r^{5/2})` against `r`; `I_k ~ (T-t)^{4/3}` and
/// `K_k ~ (T-t)^{-2/3}` against `T - t` with `T` extrapolated.
pub fn rate_suite(tr: &Trajectory<f64>, cluster: &Cluster, mode: Mode) -> Result<Vec<RateFit>> {
    let mut geo = Vec::with_capacity(tr.len());
    for s in &tr.states {
        geo.push(cluster_geometry(&tr.sys, cluster, &s.q, &s.v)?);
    }
    let t = tr.times();
    let r: Vec<f64> = geo.iter().map(|g| g.inertia.sqrt()).collect();
    let mut out = Vec::new();
    match mode {
        Mode::Parabolic => {
            let h: Vec<f64> = geo.iter().map(|g| g.energy).collect();
            let h_scale: Vec<f64> = geo.iter().map(|g| g.kinetic + g.potential.abs()).collect();
            out.push(fit_series("r_k", "t", &t, &r, Some(2.0 / 3.0), Criterion::Within { lo: 2.0 / 3.0 - 0.35, hi: 2.0 / 3.0 + 0.35 }));
            out.push(fit_series_scaled("h_k", "t", &t, &h, Some(&h_scale), Some(-5.0 / 3.0), Criterion::AtMost { bound: -1.33 }));
            let gs = gamma_residual(tr, cluster)?;
            let gmax: Vec<f64> = (0..t.len()).map(|i| gs.gamma.iter().fold(0.0f64, |a, g| a.max(g[i]))).collect();
            out.push(fit_series("gamma", "t", &t, &gmax, Some(-7.0 / 3.0), Criterion::AtMost { bound: -2.0 }));
            if cluster.len() < tr.sys.n() {
                let space = ShapeSpace::new(&tr.sys, cluster)?;
                let (mut dr, mut dth, mut ds) = (Vec::new(), Vec::new(), Vec::new());
                for s in &tr.states {
                    let sh = space.to_shape(s, None)?;
                    let cp = space.cross_partials(&sh)?;
                    dr.push(cp.dr);
                    dth.push(cp.dtheta);
                    ds.push(cp.ds.norm());
                }
                out.push(fit_series("dU_cross/dr", "t", &t, &dr, Some(-2.0), Criterion::AtMost { bound: -2.0 + 0.35 }));
                out.push(fit_series("dU_cross/dtheta", "t", &t, &dth, Some(-4.0 / 3.0), Criterion::AtMost { bound: -4.0 / 3.0 + 0.35 }));
                if cluster.len() > 2 {
                    out.push(fit_series("grad_s U_cross", "t", &t, &ds, Some(-4.0 / 3.0), Criterion::AtMost { bound: -4.0 / 3.0 + 0.35 }));
                }
            }
        }
        Mode::Collision => {
            let mu: Vec<f64> = geo.iter().map(|g| g.mu).collect();
            // |mu| <= r sqrt(2 K)
            let mu_scale: Vec<f64> = geo.iter().map(|g| g.inertia.sqrt() * (2.0 * g.kinetic).sqrt()).collect();
            out.push(fit_series_scaled("mu", "r", &r, &mu, Some(&mu_scale), Some(2.5), Criterion::AtLeast { bound: 2.2 }));
            let rep = classify(tr, cluster);
            let (dt, inertia, kinetic) = match rep.collision_time {
                Some(tc) => {
                    let mut a = (Vec::new(), Vec::new(), Vec::new());
                    for (ti, g) in t.iter().zip(&geo) {
                        if tc - ti > 0.0 {
                            a.0.push(tc - ti);
                            a.1.push(g.inertia);
                            a.2.push(g.kinetic);
                        }
                    }
                    a
                }
                None => (vec![], vec![], vec![]),
            };
            out.push(fit_series("I_k", "T-t", &dt, &inertia, Some(4.0 / 3.0), Criterion::Within { lo: 1.2, hi: 1.5 }));
            out.push(fit_series("K_k", "T-t", &dt, &kinetic, Some(-2.0 / 3.0), Criterion::Within { lo: -2.0 / 3.0 - 0.35, hi: -2.0 / 3.0 + 0.35 }));
        }
        Mode::Generic => {}
    }
    Ok(out)
}
