//! Shadowing of a decaying non-autonomous perturbation by a solution lying
//! in an invariant manifold, realised as the fixed point of an integral
//! operator on an exponentially weighted space.
//!
//! Also hosts a small laboratory for gradient-like flows: finite arclength
//! and a shell-sampling estimate of the Lojasiewicz exponent.

pub mod blowup;
pub mod gradient;
pub mod split;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::weighted_line;

pub use blowup::{blowup_linearization, BlowupShadowSetup};
pub use gradient::{gradient_flow_run, lojasiewicz_estimate, FlowOptions, FlowRun, LojasiewiczFit, Potential};
pub use split::{spectral_split, LinearSplit};

pub type VecFn<'a> = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'a>;
pub type TimeVecFn<'a> = Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'a>;

/// `x' = f(x) + g(x, t)` with `f(0) = 0`, a reference solution on
/// `[0, horizon]` and a distance to the invariant manifold.
pub struct ShadowProblem<'a> {
    pub dim: usize,
    pub field: VecFn<'a>,
    /// `Df(0)`.
    pub jacobian: DMatrix<f64>,
    pub perturbation: TimeVecFn<'a>,
    pub membership: Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync + 'a>,
    pub reference: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync + 'a>,
    pub horizon: f64,
}

/// C^2 radial bump: 1 on `[0, 1]`, 0 beyond 2.
pub fn bump(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let y = x - 1.0;
        1.0 - y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)
    }
}

impl<'a> ShadowProblem<'a> {
    /// `h(x) = f(x) - A x` multiplied by the bump at radius `r`.
    pub fn cut_nonlinearity(&self, x: &DVector<f64>, r: f64) -> DVector<f64> {
        let c = bump(x.norm() / r);
        if c == 0.0 {
            return DVector::zeros(self.dim);
        }
        ((self.field)(x) - &self.jacobian * x) * c
    }

    /// `A x + cut h(x)`.
    pub fn cut_field(&self, x: &DVector<f64>, r: f64) -> DVector<f64> {
        &self.jacobian * x + self.cut_nonlinearity(x, r)
    }

    /// Largest sampled operator norm of the Jacobian of the cut
    /// nonlinearity over the ball of radius `2r`.
    pub fn cut_lipschitz(&self, r: f64, samples: usize, seed: u64) -> f64 {
        let d = self.dim;
        let hstep = 1e-6 * r;
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let mut x: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
                let n = x.norm().max(1e-300);
                x *= 2.0 * r * rng.gen_range(0.0f64..1.0).powf(1.0 / d as f64) / n;
                let mut jac = DMatrix::zeros(d, d);
                for j in 0..d {
                    let mut p = x.clone();
                    let mut m = x.clone();
                    p[j] += hstep;
                    m[j] -= hstep;
                    let col = (self.cut_nonlinearity(&p, r) - self.cut_nonlinearity(&m, r)) / (2.0 * hstep);
                    jac.set_column(j, &col);
                }
                spectral_norm(&jac)
            })
            .reduce(|| 0.0, f64::max)
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `sup_i e^{eta t_i} |z_i|`.
pub fn eta_norm(t: &[f64], z: &[DVector<f64>], eta: f64) -> f64 {
    t.iter().zip(z).map(|(t, z)| (eta * t).exp() * z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowOptions {
    pub eta: f64,
    /// Margin in the exponential bounds; `beta / 4` when `None`.
    pub epsilon: Option<f64>,
    /// Forward grid step; backward steps grow from it up to `min(0.25 / rho(A), 5 step)`.
    pub step: f64,
    /// Starting cutoff radius; twice the largest reference norm when `None`.
    pub cutoff_radius: Option<f64>,
    /// Halve the radius until `C1 Lip(h) <` this.
    pub contraction_target: f64,
    pub max_iterations: usize,
    pub tol: f64,
}

impl ShadowOptions {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            epsilon: None,
            step: 0.01,
            cutoff_radius: None,
            contraction_target: 0.5,
            max_iterations: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub eta: f64,
    /// Measured contraction factor of the operator.
    pub kappa: f64,
    pub iterations: usize,
    /// `sup_{t >= 0} e^{eta t} |x(t) - y(t)|`.
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    /// Exponential decay rate fitted to `|x - y|` on `t >= 0`.
    #[serde(with = "crate::io::nan_null")]
    pub rate_fit: f64,
    pub membership_residual: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub c_eps: f64,
    /// `C1 Lip(h)` for the chosen cutoff.
    pub contraction_bound: f64,
    pub cutoff_radius: f64,
    /// Shift applied so the reference starts inside the cutoff ball.
    pub time_shift: f64,
    pub z_norm: f64,
    /// Largest `|y' - f(y) - g(y, t)|` by central differences on `t > 0`.
    pub ode_residual: f64,
    /// Size of the analytic tail terms outside the truncated domain.
    pub tail_bound: f64,
    pub grid_points: usize,
}

#[derive(Debug, Clone)]
pub struct ShadowResult {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub report: ShadowReport,
}

/// Discretised operator on a fixed grid with everything that does not
/// depend on `z` precomputed.
pub struct LambdaOperator<'p, 'a> {
    pub problem: &'p ShadowProblem<'a>,
    pub split: LinearSplit,
    pub eta: f64,
    pub radius: f64,
    pub shift: f64,
    pub t: Vec<f64>,
    xs: Vec<DVector<f64>>,
    xm: Vec<DVector<f64>>,
    hx: Vec<DVector<f64>>,
    hm: Vec<DVector<f64>>,
    /// `g + phi` at the left end, middle and right end of each segment.
    gl: Vec<DVector<f64>>,
    gm: Vec<DVector<f64>>,
    gr: Vec<DVector<f64>>,
    es: Vec<DMatrix<f64>>,
    es_half: Vec<DMatrix<f64>>,
    eu: Vec<DMatrix<f64>>,
    eu_half: Vec<DMatrix<f64>>,
    tail_s: DMatrix<f64>,
    tail_u: DMatrix<f64>,
}

/// Time grid: uniform step on `[0, t_f]`, geometric growth backwards from
/// 0 up to `cap`, down to `-t_b`.
pub fn shadow_grid(step: f64, t_f: f64, t_b: f64, cap: f64) -> Vec<f64> {
    let mut back = Vec::new();
    let mut t = 0.0;
    let mut h = step;
    while t > -t_b {
        t -= h;
        back.push(t.max(-t_b));
        h = (h * 1.05).min(cap.max(step));
    }
    back.reverse();
    let n = (t_f / step).ceil().max(1.0) as usize;
    let fwd = (0..=n).map(|i| i as f64 * t_f / n as f64);
    back.into_iter().chain(fwd).collect()
}

/// Inserts the midpoint of every segment.
pub fn refine(t: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * t.len());
    for w in t.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    if let Some(l) = t.last() {
        out.push(*l);
    }
    out
}

impl<'p, 'a> LambdaOperator<'p, 'a> {
    pub fn new(problem: &'p ShadowProblem<'a>, split: LinearSplit, eta: f64, radius: f64, shift: f64, t: Vec<f64>) -> Result<Self> {
        let d = problem.dim;
        if !(eta > 0.0) || eta >= split.beta - split.epsilon {
            return Err(Error::IncompatibleWeight {
                eta,
                limit: split.beta - split.epsilon,
            });
        }
        let has_center = split.pi_c.norm() > 1e-12;
        if has_center && eta <= split.epsilon {
            return Err(Error::IncompatibleWeight {
                eta,
                limit: split.epsilon,
            });
        }
        let x0 = (problem.reference)(shift);
        let star = |s: f64| -> DVector<f64> {
            if s < 0.0 {
                x0.clone()
            } else {
                (problem.reference)(s + shift)
            }
        };
        let a = &problem.jacobian;
        let h0 = problem.cut_nonlinearity(&x0, radius);
        // g + phi: for t < 0 this is -(A x0 + h(x0)), independent of g.
        let phi_left = -(a * &x0 + &h0);
        let gphi = |x: &DVector<f64>, s: f64, left: bool| -> DVector<f64> {
            if left {
                phi_left.clone()
            } else {
                (problem.perturbation)(x, s + shift)
            }
        };
        let n = t.len();
        let xs: Vec<DVector<f64>> = t.par_iter().map(|&s| star(s)).collect();
        let mids: Vec<f64> = t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let xm: Vec<DVector<f64>> = mids.par_iter().map(|&s| star(s)).collect();
        let hx: Vec<DVector<f64>> = xs.par_iter().map(|x| problem.cut_nonlinearity(x, radius)).collect();
        let hm: Vec<DVector<f64>> = xm.par_iter().map(|x| problem.cut_nonlinearity(x, radius)).collect();
        let seg: Vec<usize> = (0..n - 1).collect();
        let gl: Vec<DVector<f64>> = seg
            .par_iter()
            .map(|&i| gphi(&xs[i], t[i].max(f64::MIN_POSITIVE), t[i + 1] <= 0.0))
            .collect();
        let gm: Vec<DVector<f64>> = seg.par_iter().map(|&i| gphi(&xm[i], mids[i], t[i + 1] <= 0.0)).collect();
        let gr: Vec<DVector<f64>> = seg
            .par_iter()
            .map(|&i| gphi(&xs[i + 1], t[i + 1], t[i + 1] <= 0.0))
            .collect();
        let pi_cu = &split.pi_c + &split.pi_u;
        let a_s = a * &split.pi_s;
        let a_cu = a * &pi_cu;
        let exps: Vec<[DMatrix<f64>; 4]> = seg
            .par_iter()
            .map(|&i| {
                let dt = t[i + 1] - t[i];
                [
                    (&a_s * dt).exp() * &split.pi_s,
                    (&a_s * (0.5 * dt)).exp() * &split.pi_s,
                    (&a_cu * -dt).exp() * &pi_cu,
                    (&a_cu * (-0.5 * dt)).exp() * &pi_cu,
                ]
            })
            .collect();
        let mut es = Vec::with_capacity(n);
        let mut es_half = Vec::with_capacity(n);
        let mut eu = Vec::with_capacity(n);
        let mut eu_half = Vec::with_capacity(n);
        for [a1, a2, a3, a4] in exps {
            es.push(a1);
            es_half.push(a2);
            eu.push(a3);
            eu_half.push(a4);
        }
        let eye = DMatrix::<f64>::identity(d, d);
        let tail_s = match (&a_s + &eye - &split.pi_s).try_inverse() {
            Some(m) => -(&split.pi_s * m * &split.pi_s),
            None => return Err(Error::NoSpectralGap("stable tail")),
        };
        let tail_u = match (&a_cu + &pi_cu * eta + &split.pi_s).try_inverse() {
            Some(m) => &pi_cu * m * &pi_cu,
            None => return Err(Error::NoSpectralGap("centre-unstable tail")),
        };
        Ok(Self {
            problem,
            split,
            eta,
            radius,
            shift,
            t,
            xs,
            xm,
            hx,
            hm,
            gl,
            gm,
            gr,
            es,
            es_half,
            eu,
            eu_half,
            tail_s,
            tail_u,
        })
    }

    pub fn reference(&self) -> &[DVector<f64>] {
        &self.xs
    }

    pub fn zero(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(self.problem.dim); self.t.len()]
    }

    pub fn norm(&self, z: &[DVector<f64>]) -> f64 {
        eta_norm(&self.t, z, self.eta)
    }

    /// `Lambda(z)` on the grid, plus the size of the two tail terms.
    pub fn apply_with_tail(&self, z: &[DVector<f64>]) -> (Vec<DVector<f64>>, f64) {
        let n = self.t.len();
        let p = self.problem;
        let r = self.radius;
        let dh_node: Vec<DVector<f64>> = (0..n)
            .into_par_iter()
            .map(|i| p.cut_nonlinearity(&(&self.xs[i] + &z[i]), r) - &self.hx[i])
            .collect();
        let dh_mid: Vec<DVector<f64>> = (0..n - 1)
            .into_par_iter()
            .map(|i| {
                let zm = (&z[i] + &z[i + 1]) * 0.5;
                p.cut_nonlinearity(&(&self.xm[i] + zm), r) - &self.hm[i]
            })
            .collect();
        let pi_s = &self.split.pi_s;
        let pi_cu = &self.split.pi_c + &self.split.pi_u;
        let mut s = vec![DVector::zeros(p.dim); n];
        s[0] = &self.tail_s * (&dh_node[0] - &self.gl[0]);
        for i in 0..n - 1 {
            let dt = self.t[i + 1] - self.t[i];
            let ql = &dh_node[i] - &self.gl[i];
            let qm = &dh_mid[i] - &self.gm[i];
            let qr = &dh_node[i + 1] - &self.gr[i];
            s[i + 1] = &self.es[i] * &s[i]
                + (&self.es[i] * ql + &self.es_half[i] * qm * 4.0 + pi_s * qr) * (dt / 6.0);
        }
        let mut u = vec![DVector::zeros(p.dim); n];
        u[n - 1] = &self.tail_u * (&dh_node[n - 1] - &self.gr[n - 2]);
        for i in (0..n - 1).rev() {
            let dt = self.t[i + 1] - self.t[i];
            let ql = &dh_node[i] - &self.gl[i];
            let qm = &dh_mid[i] - &self.gm[i];
            let qr = &dh_node[i + 1] - &self.gr[i];
            u[i] = &self.eu[i] * &u[i + 1]
                + (&pi_cu * ql + &self.eu_half[i] * qm * 4.0 + &self.eu[i] * qr) * (dt / 6.0);
        }
        let tail = (self.eta * self.t[0]).exp() * s[0].norm() + (self.eta * self.t[n - 1]).exp() * u[n - 1].norm();
        (s.into_iter().zip(u).map(|(a, b)| a - b).collect(), tail)
    }

    pub fn apply(&self, z: &[DVector<f64>]) -> Vec<DVector<f64>> {
        self.apply_with_tail(z).0
    }

    /// Largest observed `|Lambda z1 - Lambda z2|_eta / |z1 - z2|_eta` over
    /// random pairs of size about `radius / 2` in the weighted norm.
    pub fn contraction_factor(&self, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.problem.dim;
        let mut kappa: f64 = 0.0;
        for _ in 0..pairs {
            let mut make = || -> Vec<DVector<f64>> {
                let dir = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)).normalize();
                let amp = rng.gen_range(0.1..0.5) * self.radius;
                self.t
                    .iter()
                    .map(|&s| {
                        let wob = 1.0 + 0.3 * (s * 1.7).sin();
                        &dir * (amp * wob * (-self.eta * s.max(0.0)).exp())
                    })
                    .collect()
            };
            let z1 = make();
            let z2 = make();
            let l1 = self.apply(&z1);
            let l2 = self.apply(&z2);
            let num: Vec<_> = l1.iter().zip(&l2).map(|(a, b)| a - b).collect();
            let den: Vec<_> = z1.iter().zip(&z2).map(|(a, b)| a - b).collect();
            let dn = self.norm(&den);
            if dn > 0.0 {
                kappa = kappa.max(self.norm(&num) / dn);
            }
        }
        kappa
    }
}

/// `C1` of the contraction estimate: `C_eps (1/(beta - eps - eta) + c)`
/// with `c = 1/(eta - eps)` when a centre direction is present and
/// `1/(beta - eps + eta)` otherwise.
pub fn contraction_constant(split: &LinearSplit, eta: f64) -> f64 {
    let b = split.beta - split.epsilon;
    let back = if split.pi_c.norm() > 1e-12 {
        1.0 / (eta - split.epsilon)
    } else {
        1.0 / (b + eta)
    };
    split.c_eps * (1.0 / (b - eta) + back)
}

/// Picks the cutoff radius, trims the reference so it starts inside the
/// cutoff ball, builds the operator and iterates to its fixed point.
pub fn picard_solve<'p, 'a>(problem: &'p ShadowProblem<'a>, opts: &ShadowOptions) -> Result<ShadowResult> {
    let split = spectral_split(&problem.jacobian, opts.epsilon)?;
    let eta = opts.eta;
    let c1 = contraction_constant(&split, eta);
    let probe: Vec<f64> = {
        let n = (problem.horizon / opts.step).ceil().max(1.0) as usize;
        (0..=n).map(|i| i as f64 * problem.horizon / n as f64).collect()
    };
    let ref_norms: Vec<f64> = probe.iter().map(|&s| (problem.reference)(s).norm()).collect();
    let biggest = ref_norms.iter().cloned().fold(0.0, f64::max);
    let mut radius = opts.cutoff_radius.unwrap_or(2.0 * biggest.max(1e-3));
    let mut bound = f64::INFINITY;
    for _ in 0..80 {
        bound = c1 * problem.cut_lipschitz(radius, 64, 17);
        if bound < opts.contraction_target {
            break;
        }
        radius *= 0.5;
    }
    if !(bound < opts.contraction_target) {
        return Err(Error::Divergence(format!(
            "no cutoff radius gives C1 Lip(h) < {} (last {:.3e} at radius {:.3e})",
            opts.contraction_target, bound, radius
        )));
    }
    let start = match ref_norms.iter().rposition(|n| *n > radius) {
        None => 0,
        Some(i) if i + 1 < probe.len() => i + 1,
        Some(_) => {
            return Err(Error::EscapedNeighbourhood(radius));
        }
    };
    let shift = probe[start];
    let t_f = problem.horizon - shift;
    if !(t_f > opts.step) {
        return Err(Error::EscapedNeighbourhood(radius));
    }
    let t_b = (1e12f64).ln() / (split.beta - split.epsilon);
    let rho = split.spectral_radius.max(1e-12);
    let grid = shadow_grid(opts.step, t_f, t_b, (0.25 / rho).min(5.0 * opts.step));
    let op = LambdaOperator::new(problem, split, eta, radius, shift, grid)?;
    solve_operator(&op, opts, bound)
}

/// Fixed-point iteration for an already built operator.
pub fn solve_operator(op: &LambdaOperator, opts: &ShadowOptions, bound: f64) -> Result<ShadowResult> {
    let mut z = op.zero();
    let mut iterations = 0;
    let mut first = None;
    let mut tail;
    loop {
        let (next, tl) = op.apply_with_tail(&z);
        tail = tl;
        let diff: Vec<_> = next.iter().zip(&z).map(|(a, b)| a - b).collect();
        let dn = op.norm(&diff);
        iterations += 1;
        z = next;
        if !dn.is_finite() {
            return Err(Error::Divergence(format!(
                "iterate {} is not finite; try a smaller cutoff radius or eta",
                iterations
            )));
        }
        let f = *first.get_or_insert(dn);
        if dn < opts.tol {
            break;
        }
        if dn > 1e6 * f.max(1e-300) || iterations >= opts.max_iterations {
            return Err(Error::Divergence(format!(
                "after {} iterations the step is {:.3e} (first {:.3e}); try a smaller cutoff radius or eta",
                iterations, dn, f
            )));
        }
    }
    let kappa = op.contraction_factor(4, 99);
    let xs = op.reference().to_vec();
    let y: Vec<DVector<f64>> = xs.iter().zip(&z).map(|(a, b)| a + b).collect();
    let membership = y.iter().map(|v| (op.problem.membership)(v)).fold(0.0, f64::max);
    let t = op.t.clone();
    let i0 = t.iter().position(|s| *s >= 0.0).unwrap_or(0);
    let c_fit = t[i0..]
        .iter()
        .zip(&z[i0..])
        .map(|(s, z)| (op.eta * s).exp() * z.norm())
        .fold(0.0, f64::max);
    let zmax = z[i0..].iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (mut ft, mut fz) = (Vec::new(), Vec::new());
    for (s, v) in t[i0..].iter().zip(&z[i0..]) {
        if v.norm() > 1e-13 * zmax.max(1e-300) && v.norm() > 1e-300 {
            ft.push(*s);
            fz.push(v.norm().ln());
        }
    }
    let rate_fit = if ft.len() >= 3 {
        weighted_line(&ft, &fz, &vec![1.0; ft.len()]).map(|f| -f.slope).unwrap_or(f64::NAN)
    } else {
        f64::INFINITY
    };
    let mut ode_residual: f64 = 0.0;
    for i in i0 + 1..t.len() - 1 {
        let dy = (&y[i + 1] - &y[i - 1]) / (t[i + 1] - t[i - 1]);
        let rhs = op.problem.cut_field(&y[i], op.radius) + (op.problem.perturbation)(&y[i], t[i] + op.shift);
        ode_residual = ode_residual.max((dy - rhs).norm());
    }
    let report = ShadowReport {
        eta: op.eta,
        kappa,
        iterations,
        c_fit,
        rate_fit,
        membership_residual: membership,
        beta: op.split.beta,
        epsilon: op.split.epsilon,
        c_eps: op.split.c_eps,
        contraction_bound: bound,
        cutoff_radius: op.radius,
        time_shift: op.shift,
        z_norm: op.norm(&z),
        ode_residual,
        tail_bound: tail,
        grid_points: t.len(),
    };
    Ok(ShadowResult { t, x: xs, z, y, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_toy<'a>() -> ShadowProblem<'a> {
        ShadowProblem {
            dim: 1,
            field: Box::new(|x| -x.clone()),
            jacobian: DMatrix::from_element(1, 1, -1.0),
            perturbation: Box::new(|_, t| DVector::from_element(1, if t > 0.0 { (-2.0 * t).exp() } else { 0.0 })),
            membership: Box::new(|_| 0.0),
            reference: Box::new(|t| DVector::from_element(1, (-t).exp() - (-2.0 * t).exp())),
            horizon: 30.0,
        }
    }

    #[test]
    fn bump_is_c2() {
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(2.5), 0.0);
        let h = 1e-5;
        for x in [1.0, 2.0] {
            let d1 = (bump(x + h) - bump(x - h)) / (2.0 * h);
            let d2 = (bump(x + h) - 2.0 * bump(x) + bump(x - h)) / (h * h);
            assert!(d1.abs() < 1e-8 && d2.abs() < 1e-3);
        }
    }

    #[test]
    fn grid_and_refinement() {
        let g = shadow_grid(0.1, 1.0, 5.0, 0.5);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g[0], -5.0);
        assert!(g.contains(&0.0));
        assert_eq!(*g.last().unwrap(), 1.0);
        let r = refine(&g);
        assert_eq!(r.len(), 2 * g.len() - 1);
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = ShadowProblem {
            dim: 2,
            field: Box::new(|x| DVector::from_vec(vec![-x[0], 2.0 * x[1]])),
            jacobian: DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0])),
            perturbation: Box::new(|_, _| DVector::zeros(2)),
            membership: Box::new(|_| 0.0),
            reference: Box::new(|_| DVector::zeros(2)),
            horizon: 5.0,
        };
        let split = spectral_split(&p.jacobian, None).unwrap();
        let op = LambdaOperator::new(&p, split, 0.3, 1.0, 0.0, shadow_grid(0.05, 5.0, 30.0, 0.2)).unwrap();
        let l = op.apply(&op.zero());
        assert!(l.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn scalar_closed_form() {
        let p = scalar_toy();
        let split = spectral_split(&p.jacobian, None).unwrap();
        let op = LambdaOperator::new(&p, split, 0.5, 1.0, 0.0, shadow_grid(0.01, 30.0, 40.0, 0.25)).unwrap();
        let l = op.apply(&op.zero());
        let mut err: f64 = 0.0;
        for (t, v) in op.t.iter().zip(&l) {
            let exact = if *t > 0.0 { (-2.0 * t).exp() - (-t).exp() } else { 0.0 };
            err = err.max((v[0] - exact).abs());
        }
        assert!(err < 1e-8, "{}", err);
        let res = picard_solve(&p, &ShadowOptions::new(0.5)).unwrap();
        assert!(res.report.rate_fit >= 0.5);
        assert!(res.y.iter().all(|y| y[0].abs() < 1e-8));
    }

    #[test]
    fn unperturbed_shadow_solves_the_field() {
        let p = ShadowProblem {
            dim: 2,
            field: Box::new(|x| DVector::from_vec(vec![-x[0] + x[1] * x[1], 2.0 * x[1]])),
            jacobian: DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0])),
            perturbation: Box::new(|_, _| DVector::zeros(2)),
            membership: Box::new(|x| x[1].abs()),
            reference: Box::new(|t| DVector::from_vec(vec![0.01 * (-t).exp(), 0.0])),
            horizon: 10.0,
        };
        let res = picard_solve(&p, &ShadowOptions::new(0.4)).unwrap();
        assert!(res.report.ode_residual < 1e-8, "{:?}", res.report);
        assert!(res.report.membership_residual < 1e-12);
        assert!(res.report.rate_fit >= 0.4);
        assert!(res.report.kappa < 1.0);
    }
}
