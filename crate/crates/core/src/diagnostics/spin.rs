use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::blowup::BlowupTrajectory;
use crate::error::{Error, Result};

/// Threshold for the tail variation of `theta` and the tail arclength.
pub const SPIN_TAIL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinReport {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    /// Partial sums of the Fubini-Study arclength `int |omega|_FS dt`.
    pub arclength: Vec<f64>,
    pub total_arclength: f64,
    /// First sample of the tail window: the final stretch over which the
    /// cluster size changes by a factor of 2.
    pub tail_start: usize,
    /// Total variation of `theta` over the tail window.
    pub tail_variation: f64,
    /// Arclength accumulated over the tail window.
    pub tail_arclength: f64,
    pub tail_cauchy: bool,
    /// Whole turns of `theta` between the first and last sample.
    pub winding: i64,
    pub theta_limit: Option<f64>,
    /// `max b_norm`, the constant in `|theta'| <= |mu|/r^2 + C |omega|_FS`.
    pub c_bound: f64,
    /// Largest `|theta'| - (|mu|/r^2 + b_norm |omega|_FS)` along the run.
    pub bound_excess: f64,
    pub tolerance: f64,
    pub note: String,
}

/// Spin and arclength diagnostics along a transformed trajectory, whose
/// `theta` is already spliced across chart switches.
pub fn spin_report(b: &BlowupTrajectory) -> Result<SpinReport> {
    spin_report_with(b, SPIN_TAIL_TOL)
}

pub fn spin_report_with(b: &BlowupTrajectory, tol: f64) -> Result<SpinReport> {
    let n = b.samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{} samples", n)));
    }
    let t: Vec<f64> = b.samples.iter().map(|s| s.state.t).collect();
    let theta: Vec<f64> = b.samples.iter().map(|s| s.theta).collect();
    for i in 1..n {
        let jump = theta[i] - theta[i - 1];
        if jump.abs() >= PI {
            return Err(Error::ThetaSplice { index: i, jump });
        }
    }
    let mut arclength = Vec::with_capacity(n);
    arclength.push(0.0);
    for i in 1..n {
        let dt = (t[i] - t[i - 1]).abs();
        let inc = 0.5 * (b.samples[i].speed + b.samples[i - 1].speed) * dt;
        arclength.push(arclength[i - 1] + inc);
    }
    let r_end = b.samples[n - 1].r;
    let r_start = b.samples[0].r;
    let tail_start = if r_end < r_start {
        b.samples.iter().rposition(|s| s.r >= 2.0 * r_end).unwrap_or(0)
    } else {
        b.samples.iter().rposition(|s| s.r <= 0.5 * r_end).unwrap_or(0)
    };
    let tail_variation: f64 = theta[tail_start..].windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let total = arclength[n - 1];
    let tail_arclength = total - arclength[tail_start];
    let mut c_bound: f64 = 0.0;
    let mut bound_excess = f64::NEG_INFINITY;
    for s in &b.samples {
        c_bound = c_bound.max(s.b_norm);
        let bound = s.mu.abs() / (s.r * s.r) + s.b_norm * s.speed;
        bound_excess = bound_excess.max(s.theta_dot.abs() - bound);
    }
    let winding = ((theta[n - 1] - theta[0]) / (2.0 * PI)).trunc() as i64;
    let converged = tail_variation < tol;
    let window_note = if tail_start == 0 {
        "the run never changes size by a factor 2; the tail window is the whole run. "
    } else {
        ""
    };
    Ok(SpinReport {
        t,
        theta: theta.clone(),
        arclength,
        total_arclength: total,
        tail_start,
        tail_variation,
        tail_arclength,
        tail_cauchy: tail_arclength < tol,
        winding,
        theta_limit: converged.then(|| theta[n - 1]),
        c_bound,
        bound_excess,
        tolerance: tol,
        note: format!(
            "{}finite-horizon evidence: tail-Cauchy thresholds are numerical choices, not a proof of convergence",
            window_note
        ),
    })
}
