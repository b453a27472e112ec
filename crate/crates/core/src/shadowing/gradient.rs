use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::weighted_line;
use crate::integrator::{integrate, EventFn, Options, Termination, Tolerances};

pub struct Potential<'a> {
    pub value: Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync + 'a>,
    pub gradient: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'a>,
}

impl<'a> Potential<'a> {
    /// `-|x|^p / p`, critical point at the origin with `W = 0`.
    pub fn radial_power(p: f64) -> Potential<'static> {
        Potential {
            value: Box::new(move |x| -x.norm().powf(p) / p),
            gradient: Box::new(move |x| -x * x.norm().powf(p - 2.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub t_end: f64,
    /// Stop once `|x|` falls below this.
    pub stop_radius: f64,
    /// Leaving this ball is an error.
    pub escape_radius: f64,
    pub tol: Tolerances<f64>,
    /// Threshold for the arclength over the final dyadic window.
    pub tail_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            t_end: 1e17,
            stop_radius: 1e-8,
            escape_radius: 10.0,
            tol: Tolerances { rtol: 1e-10, atol: 1e-14 },
            tail_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRun {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Cumulative metric arclength.
    pub arclength: Vec<f64>,
    pub total_arclength: f64,
    /// Arclength over `[T/2, T]`.
    pub tail_arclength: f64,
    pub tail_cauchy: bool,
    pub reached_stop: bool,
}

/// Flows `x' = k G^{-1} grad W(x) + gamma(x)` with arclength measured in
/// the metric `G`.
pub fn gradient_flow_run(
    w: &Potential,
    k: f64,
    gamma: Option<&(dyn Fn(&DVector<f64>) -> DVector<f64> + Sync)>,
    x0: &DVector<f64>,
    metric: &DMatrix<f64>,
    opts: &FlowOptions,
) -> Result<FlowRun> {
    let d = x0.len();
    if k == 0.0 || !k.is_finite() {
        return Err(Error::InvalidParameter("k must be nonzero".into()));
    }
    if metric.nrows() != d || metric.ncols() != d {
        return Err(Error::Dimension { expected: d, got: metric.nrows() });
    }
    let chol = metric
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("metric is not positive definite".into()))?;
    if let Some(g) = gamma {
        check_small_perturbation(w, g, x0)?;
    }
    let field = |x: &DVector<f64>| -> DVector<f64> {
        let mut v = chol.solve(&(w.gradient)(x)) * k;
        if let Some(g) = gamma {
            v += g(x);
        }
        v
    };
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = DVector::from_column_slice(&y[..d]);
        let v = field(&x);
        dy[..d].copy_from_slice(v.as_slice());
        dy[d] = v.dot(&(metric * &v)).max(0.0).sqrt();
        Ok(())
    };
    let mut y0: Vec<f64> = x0.iter().copied().collect();
    y0.push(0.0);
    let stop = opts.stop_radius;
    let esc = opts.escape_radius;
    let events: Vec<EventFn<f64>> = vec![
        Box::new(move |_t, y: &[f64]| y[..d].iter().map(|v| v * v).sum::<f64>().sqrt() - stop),
        Box::new(move |_t, y: &[f64]| esc - y[..d].iter().map(|v| v * v).sum::<f64>().sqrt()),
    ];
    let speed0 = field(x0).norm();
    let o = Options {
        tol: opts.tol,
        h0: (speed0 > 0.0).then(|| 1e-2 * x0.norm().max(opts.stop_radius) / speed0),
        max_steps: 2_000_000,
        ..Options::default()
    };
    let sol = integrate(&mut rhs, 0.0, &y0, opts.t_end, &o, &events, |_| true)?;
    if sol.termination == Termination::Event(1) {
        return Err(Error::EscapedNeighbourhood(*sol.t.last().unwrap()));
    }
    if matches!(sol.termination, Termination::StepUnderflow | Termination::MaxSteps) {
        return Err(Error::NoConvergence {
            iterations: sol.stats.steps,
            residual: *sol.t.last().unwrap(),
        });
    }
    let reached_stop = sol.termination == Termination::Event(0);
    let t = sol.t;
    let arclength: Vec<f64> = sol.y.iter().map(|y| y[d]).collect();
    let x: Vec<Vec<f64>> = sol.y.iter().map(|y| y[..d].to_vec()).collect();
    let tf = *t.last().unwrap();
    let total = *arclength.last().unwrap();
    let half = interp(&t, &arclength, tf / 2.0);
    let tail = total - half;
    Ok(FlowRun {
        t,
        x,
        arclength,
        total_arclength: total,
        tail_arclength: tail,
        tail_cauchy: tail < opts.tail_tol,
        reached_stop,
    })
}

fn interp(t: &[f64], y: &[f64], s: f64) -> f64 {
    let i = t.partition_point(|v| *v <= s);
    if i == 0 {
        return y[0];
    }
    if i >= t.len() {
        return *y.last().unwrap();
    }
    let a = (s - t[i - 1]) / (t[i] - t[i - 1]);
    y[i - 1] + a * (y[i] - y[i - 1])
}

/// `|gamma| / |grad W|` must shrink towards the critical point.
fn check_small_perturbation(
    w: &Potential,
    gamma: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Sync),
    x0: &DVector<f64>,
) -> Result<()> {
    let ratio = |x: &DVector<f64>| {
        let g = (w.gradient)(x).norm();
        if g == 0.0 {
            0.0
        } else {
            gamma(x).norm() / g
        }
    };
    let far = ratio(x0);
    let near = ratio(&(x0 * 1e-3));
    if near < 0.5 * far || near < 1e-6 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "perturbation is not small relative to the gradient ({:.3e} near vs {:.3e} far)",
            near, far
        )))
    }
}

/// `c |grad W|^{3/2}` rotated by a quarter turn in the first two
/// coordinates.
pub fn rotational_perturbation<'a>(w: &'a Potential<'a>, c: f64) -> impl Fn(&DVector<f64>) -> DVector<f64> + Sync + 'a {
    move |x| {
        let g = (w.gradient)(x);
        let n = g.norm();
        let mut j = DVector::zeros(g.len());
        if n == 0.0 || g.len() < 2 {
            return j;
        }
        j[0] = -g[1];
        j[1] = g[0];
        j * (c * n.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LojasiewiczFit {
    /// Extrapolated exponent in `|grad W|^2 >= c |W - W0|^alpha`.
    pub alpha: f64,
    pub radii: Vec<f64>,
    /// `sup ln|grad W|^2 / ln|W - W0|` per shell.
    pub ratios: Vec<f64>,
    /// `1 / ln|W - W0|` at the maximiser of each shell.
    pub abscissa: Vec<f64>,
    pub rms: f64,
}

/// Samples shells `|x - x0| = rho` with geometric radii in
/// `[1e-6 radius, radius]`; on each shell takes the largest
/// `ln|grad W|^2 / ln|W - W0|` over coordinate axes and random
/// directions, then extrapolates linearly in `1 / ln|W - W0|` to zero.
pub fn lojasiewicz_estimate(
    w: &Potential,
    x0: &DVector<f64>,
    radius: f64,
    shells: usize,
    directions: usize,
    seed: u64,
) -> Result<LojasiewiczFit> {
    let d = x0.len();
    if shells < 3 {
        return Err(Error::InsufficientData("need at least 3 shells".into()));
    }
    let w0 = (w.value)(x0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        dirs.push(-&e);
        dirs.push(e);
    }
    for _ in 0..directions {
        dirs.push(DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)).normalize());
    }
    let mut radii = Vec::new();
    let mut ratios = Vec::new();
    let mut abscissa = Vec::new();
    for i in 0..shells {
        let rho = radius * 1e-6f64.powf(1.0 - i as f64 / (shells - 1) as f64);
        let mut best: Option<(f64, f64)> = None;
        let mut spread: f64 = 0.0;
        for e in &dirs {
            let x = x0 + e * rho;
            let dw = ((w.value)(&x) - w0).abs();
            spread = spread.max(dw);
            let g2 = (w.gradient)(&x).norm_squared();
            if dw <= 0.0 || dw >= 1.0 || g2 <= 0.0 || g2 >= 1.0 {
                continue;
            }
            let r = g2.ln() / dw.ln();
            if best.map_or(true, |(b, _)| r > b) {
                best = Some((r, 1.0 / dw.ln()));
            }
        }
        if spread == 0.0 {
            return Err(Error::ConstantFunction);
        }
        if let Some((r, a)) = best {
            radii.push(rho);
            ratios.push(r);
            abscissa.push(a);
        }
    }
    if ratios.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 usable shells".into()));
    }
    let fit = weighted_line(&abscissa, &ratios, &vec![1.0; ratios.len()])?;
    let rms = (abscissa
        .iter()
        .zip(&ratios)
        .map(|(a, r)| (fit.eval(*a) - r).powi(2))
        .sum::<f64>()
        / ratios.len() as f64)
        .sqrt();
    Ok(LojasiewiczFit {
        alpha: fit.intercept,
        radii,
        ratios,
        abscissa,
        rms,
    })
}
