//! Dormand–Prince 5(4) with PI step control, dense output and terminal
//! events. Works forwards and backwards in time.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            rtol: lit(1e-12),
            atol: lit(1e-14),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options<T> {
    pub tol: Tolerances<T>,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<T>,
    /// Upper bound on `|h|`.
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for Options<T> {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            h0: None,
            h_max: None,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached the requested end time.
    Horizon,
    /// Event function `index` crossed zero.
    Event(usize),
    /// The step size fell below the round-off floor.
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// One accepted step, with the data needed for dense output on it.
#[derive(Debug, Clone)]
pub struct DenseStep<T> {
    pub t0: T,
    pub h: T,
    cont: [Vec<T>; 5],
}

impl<T: Real> DenseStep<T> {
    pub fn t1(&self) -> T {
        self.t0 + self.h
    }

    /// Interpolated state at `t` (fourth-order accurate inside the step).
    pub fn eval(&self, t: T) -> Vec<T> {
        let th = (t - self.t0) / self.h;
        let th1 = T::one() - th;
        let [r1, r2, r3, r4, r5] = &self.cont;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub t: Vec<T>,
    pub y: Vec<Vec<T>>,
    pub stats: Stats,
    pub termination: Termination,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side `dy = f(t, y)`.
pub trait Rhs<T> {
    fn eval(&mut self, t: T, y: &[T], dy: &mut [T]) -> Result<()>;
}

impl<T, F> Rhs<T> for F
where
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    fn eval(&mut self, t: T, y: &[T], dy: &mut [T]) -> Result<()> {
        self(t, y, dy)
    }
}

/// Terminal event: integration stops where `g(t, y)` changes sign from
/// positive to non-positive.
pub type EventFn<'a, T> = Box<dyn Fn(T, &[T]) -> T + 'a>;

fn axpy<T: Real>(out: &mut [T], y: &[T], h: T, terms: &[(f64, &[T])]) {
    for i in 0..y.len() {
        let mut acc = T::zero();
        for (c, k) in terms {
            acc += lit::<T>(*c) * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn error_norm<T: Real>(y0: &[T], y1: &[T], e: &[T], tol: &Tolerances<T>) -> T {
    let mut acc = T::zero();
    for i in 0..y0.len() {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let q = e[i] / sc;
        acc += q * q;
    }
    (acc / T::from_usize_lossy(y0.len().max(1))).sqrt()
}

fn initial_step<T: Real, F: Rhs<T>>(
    f: &mut F,
    t0: T,
    y0: &[T],
    f0: &[T],
    dir: T,
    tol: &Tolerances<T>,
) -> Result<T> {
    let n = y0.len();
    let sc: Vec<T> = y0.iter().map(|y| tol.atol + tol.rtol * y.abs()).collect();
    let rms = |v: &[T]| {
        let s = v
            .iter()
            .zip(&sc)
            .fold(T::zero(), |a, (x, s)| a + (*x / *s) * (*x / *s));
        (s / T::from_usize_lossy(n.max(1))).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let tiny = lit::<T>(1e-5);
    let mut h = if d0 < tiny || d1 < tiny {
        lit(1e-6)
    } else {
        lit::<T>(0.01) * d0 / d1
    };
    let y1: Vec<T> = y0.iter().zip(f0).map(|(y, d)| *y + dir * h * *d).collect();
    let mut f1 = vec![T::zero(); n];
    f.eval(t0 + dir * h, &y1, &mut f1)?;
    let diff: Vec<T> = f1.iter().zip(f0).map(|(a, b)| *a - *b).collect();
    let d2 = rms(&diff) / h;
    let dm = d1.max(d2);
    let h1 = if dm <= lit(1e-15) {
        (h * lit(1e-3)).max(lit(1e-6))
    } else {
        (lit::<T>(0.01) / dm).powf(lit(0.2))
    };
    h = (h * lit(100.0)).min(h1);
    Ok(h)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// Every accepted step is reported to `on_step`; returning `false` from it
/// stops the integration after that step. Terminal events are located by
/// bisection on the dense output and the final sample sits on the event.
pub fn integrate<T, F>(
    f: &mut F,
    t0: T,
    y0: &[T],
    t_end: T,
    opts: &Options<T>,
    events: &[EventFn<'_, T>],
    mut on_step: impl FnMut(&DenseStep<T>) -> bool,
) -> Result<Solution<T>>
where
    T: Real,
    F: Rhs<T>,
{
    let n = y0.len();
    let dir = if t_end >= t0 { T::one() } else { -T::one() };
    let span = (t_end - t0).abs();
    let mut stats = Stats::default();
    let mut ts = vec![t0];
    let mut ys = vec![y0.to_vec()];
    if span == T::zero() {
        return Ok(Solution {
            t: ts,
            y: ys,
            stats,
            termination: Termination::Horizon,
        });
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![T::zero(); n];
    f.eval(t, &y, &mut k1)?;
    stats.evaluations += 1;
    let mut h = match opts.h0 {
        Some(h) => h.abs(),
        None => {
            stats.evaluations += 1;
            initial_step(f, t0, y0, &k1, dir, &opts.tol)?
        }
    };
    let h_max = opts.h_max.unwrap_or(span).min(span);
    h = h.min(h_max);

    let mut g_prev: Vec<T> = events.iter().map(|g| g(t, &y)).collect();
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
    );
    let mut ytmp = vec![T::zero(); n];
    let mut y1 = vec![T::zero(); n];
    let mut err_old = lit::<T>(1e-4);
    let mut rejected_last = false;
    let beta = lit::<T>(0.04);
    let expo1 = lit::<T>(0.2) - beta * lit(0.75);
    let safe = lit::<T>(0.9);
    let (fac_min, fac_max) = (lit::<T>(0.2), lit::<T>(10.0));
    let eps16 = T::epsilon() * lit(16.0);

    loop {
        if stats.steps >= opts.max_steps {
            return Ok(Solution {
                t: ts,
                y: ys,
                stats,
                termination: Termination::MaxSteps,
            });
        }
        if h <= eps16 * t.abs() || h <= eps16 * span * lit(1e-6) {
            return Ok(Solution {
                t: ts,
                y: ys,
                stats,
                termination: Termination::StepUnderflow,
            });
        }
        let mut last = false;
        if (t + dir * h - t_end) * dir >= T::zero() {
            h = (t_end - t).abs();
            last = true;
        }
        let hs = dir * h;

        axpy(&mut ytmp, &y, hs, &[(A21, &k1)]);
        f.eval(t + lit::<T>(C2) * hs, &ytmp, &mut k2)?;
        axpy(&mut ytmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
        f.eval(t + lit::<T>(C3) * hs, &ytmp, &mut k3)?;
        axpy(&mut ytmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f.eval(t + lit::<T>(C4) * hs, &ytmp, &mut k4)?;
        axpy(
            &mut ytmp,
            &y,
            hs,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        );
        f.eval(t + lit::<T>(C5) * hs, &ytmp, &mut k5)?;
        axpy(
            &mut ytmp,
            &y,
            hs,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_new = if last { t_end } else { t + hs };
        f.eval(t + hs, &ytmp, &mut k6)?;
        axpy(
            &mut y1,
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        f.eval(t_new, &y1, &mut k7)?;
        stats.evaluations += 6;

        let mut e = vec![T::zero(); n];
        for i in 0..n {
            e[i] = hs
                * (lit::<T>(E1) * k1[i]
                    + lit::<T>(E3) * k3[i]
                    + lit::<T>(E4) * k4[i]
                    + lit::<T>(E5) * k5[i]
                    + lit::<T>(E6) * k6[i]
                    + lit::<T>(E7) * k7[i]);
        }
        let err = error_norm(&y, &y1, &e, &opts.tol);
        if !err.is_finite() {
            // Treat overflow in a trial step as a rejection.
            stats.rejected += 1;
            h *= lit(0.1);
            rejected_last = true;
            continue;
        }
        let fac11 = err.powf(expo1);
        if err <= T::one() {
            let mut fac = fac11 / err_old.powf(beta);
            fac = (fac / safe).max(T::one() / fac_max).min(T::one() / fac_min);
            let mut h_new = h / fac;
            err_old = err.max(lit(1e-4));

            let mut cont: [Vec<T>; 5] = Default::default();
            cont[0] = y.clone();
            cont[1] = (0..n).map(|i| y1[i] - y[i]).collect();
            cont[2] = (0..n).map(|i| hs * k1[i] - cont[1][i]).collect();
            cont[3] = (0..n)
                .map(|i| cont[1][i] - hs * k7[i] - cont[2][i])
                .collect();
            cont[4] = (0..n)
                .map(|i| {
                    hs * (lit::<T>(D1) * k1[i]
                        + lit::<T>(D3) * k3[i]
                        + lit::<T>(D4) * k4[i]
                        + lit::<T>(D5) * k5[i]
                        + lit::<T>(D6) * k6[i]
                        + lit::<T>(D7) * k7[i])
                })
                .collect();
            let step = DenseStep { t0: t, h: hs, cont };
            stats.steps += 1;

            // Events.
            let g_new: Vec<T> = events.iter().map(|g| g(t_new, &y1)).collect();
            let mut hit: Option<(usize, T)> = None;
            for (i, g) in events.iter().enumerate() {
                if g_prev[i] > T::zero() && g_new[i] <= T::zero() {
                    let te = locate(&step, g.as_ref(), t, t_new);
                    let better = match hit {
                        None => true,
                        Some((_, tb)) => (te - tb) * dir < T::zero(),
                    };
                    if better {
                        hit = Some((i, te));
                    }
                }
            }
            if let Some((i, te)) = hit {
                let ye = if te == t_new { y1.clone() } else { step.eval(te) };
                on_step(&step);
                ts.push(te);
                ys.push(ye);
                return Ok(Solution {
                    t: ts,
                    y: ys,
                    stats,
                    termination: Termination::Event(i),
                });
            }
            g_prev = g_new;

            let keep_going = on_step(&step);
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            ts.push(t);
            ys.push(y.clone());
            if last || !keep_going {
                return Ok(Solution {
                    t: ts,
                    y: ys,
                    stats,
                    termination: Termination::Horizon,
                });
            }
            if rejected_last {
                h_new = h_new.min(h);
            }
            rejected_last = false;
            h = h_new.min(h_max);
        } else {
            stats.rejected += 1;
            h /= (fac11 / safe).min(T::one() / fac_min);
            rejected_last = true;
        }
    }
}

/// Bisection for the sign change of `g` inside the step.
fn locate<T: Real>(step: &DenseStep<T>, g: &dyn Fn(T, &[T]) -> T, ta: T, tb: T) -> T {
    let (mut a, mut b) = (ta, tb);
    for _ in 0..200 {
        let m = (a + b) * lit(0.5);
        if m == a || m == b {
            break;
        }
        if g(m, &step.eval(m)) > T::zero() {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

/// Convenience wrapper without events or step observer.
pub fn solve<T: Real, F: Rhs<T>>(
    f: &mut F,
    t0: T,
    y0: &[T],
    t_end: T,
    opts: &Options<T>,
) -> Result<Solution<T>> {
    integrate(f, t0, y0, t_end, opts, &[], |_| true)
}

/// Integrates and returns the state at each requested time (monotone in
/// the integration direction), using dense output.
pub fn solve_at<T: Real, F: Rhs<T>>(
    f: &mut F,
    t0: T,
    y0: &[T],
    times: &[T],
    opts: &Options<T>,
) -> Result<Vec<Vec<T>>> {
    let t_end = match times.last() {
        Some(&t) => t,
        None => return Ok(Vec::new()),
    };
    let dir = if t_end >= t0 { T::one() } else { -T::one() };
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && (times[next] - t0) * dir <= T::zero() {
        out.push(y0.to_vec());
        next += 1;
    }
    let sol = integrate(f, t0, y0, t_end, opts, &[], |step| {
        while next < times.len() && (times[next] - step.t1()) * dir <= T::zero() {
            out.push(step.eval(times[next]));
            next += 1;
        }
        true
    })?;
    if out.len() < times.len() {
        return Err(Error::InsufficientData(format!(
            "integration ended at t = {} ({:?})",
            sol.t.last().copied().unwrap_or(t0),
            sol.termination
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_oscillator_period() {
        let opts = Options {
            tol: Tolerances {
                rtol: 1e-12,
                atol: 1e-14,
            },
            ..Default::default()
        };
        let tau = 2.0 * std::f64::consts::PI;
        let sol = solve(&mut harmonic, 0.0, &[1.0, 0.0], 10.0 * tau, &opts).unwrap();
        let y = sol.y.last().unwrap();
        assert_eq!(sol.termination, Termination::Horizon);
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{:?}", y);
    }

    #[test]
    fn dense_output_is_accurate() {
        let times: Vec<f64> = (1..50).map(|i| i as f64 * 0.37).collect();
        let opts = Options::default();
        let ys = solve_at(&mut harmonic, 0.0, &[1.0, 0.0], &times, &opts).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_integration() {
        let opts = Options::default();
        let sol = solve(&mut harmonic, 3.0, &[3f64.cos(), -3f64.sin()], 0.0, &opts).unwrap();
        let y = sol.y.last().unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
        assert!(sol.t.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn event_located_on_dense_output() {
        let opts = Options::default();
        let ev: Vec<EventFn<f64>> = vec![Box::new(|_t, y: &[f64]| y[0])];
        let sol = integrate(&mut harmonic, 0.0, &[1.0, 0.0], 10.0, &opts, &ev, |_| true).unwrap();
        assert_eq!(sol.termination, Termination::Event(0));
        let te = *sol.t.last().unwrap();
        assert!((te - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn exponential_decay_single_precision() {
        let mut f = |_t: f32, y: &[f32], dy: &mut [f32]| -> Result<()> {
            dy[0] = -y[0];
            Ok(())
        };
        let opts = Options {
            tol: Tolerances {
                rtol: 1e-6f32,
                atol: 1e-8,
            },
            ..Default::default()
        };
        let sol = solve(&mut f, 0.0f32, &[1.0], 2.0, &opts).unwrap();
        assert!((sol.y.last().unwrap()[0] - (-2.0f32).exp()).abs() < 1e-5);
    }
}
