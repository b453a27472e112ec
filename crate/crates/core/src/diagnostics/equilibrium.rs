use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::blowup::fubini::C;
use crate::blowup::{energy_blowup, BlowupTrajectory, Chart};
use crate::centconfig::{CentralConfig, EquilibriumData};
use crate::error::{Error, Result};
use crate::fit::weighted_line;
use crate::system::{to_complex, MassMetric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumConvergence {
    pub tau: Vec<f64>,
    /// `u` or `r`.
    pub size: Vec<f64>,
    pub v_error: Vec<f64>,
    /// Distance of `s` to the nearer of the CC and its mirror image, in
    /// the sample's own chart.
    pub s_error: Vec<f64>,
    pub w_norm: Vec<f64>,
    /// `u^{-2} h_k` (parabolic) or `r h_k` (collision).
    pub bracket: Vec<f64>,
    pub final_v: f64,
    pub v0: f64,
    pub final_distance: f64,
    /// Fitted `-d ln|gamma - p0| / d tau` over the second half of the run;
    /// only for a hyperbolic equilibrium.
    pub rate: Option<f64>,
}

/// Distance of a transformed trajectory from the equilibrium
/// `(0, v0, s0, 0)` of a central configuration, per component.
pub fn equilibrium_convergence(b: &BlowupTrajectory, cc: &CentralConfig, eq: &EquilibriumData) -> Result<EquilibriumConvergence> {
    if b.variant != eq.mode {
        return Err(Error::VariantMismatch {
            state: b.variant.as_str(),
            forcing: eq.mode.as_str(),
        });
    }
    let k = cc.masses.len();
    if k != b.cluster.len() {
        return Err(Error::Dimension {
            expected: b.cluster.len(),
            got: k,
        });
    }
    let z: Vec<C<f64>> = cc.points()[..k - 1].iter().map(to_complex).collect();
    let mirror: Vec<C<f64>> = z.iter().map(|c| c.conj()).collect();
    let metric = MassMetric::from_masses(cc.masses.clone());
    let mut targets: Vec<(usize, Chart<f64>, Vec<DVector<f64>>)> = Vec::new();
    let n = b.samples.len();
    let (mut tau, mut size, mut v_error, mut s_error, mut w_norm, mut bracket) =
        (vec![], vec![], vec![], vec![], vec![], vec![]);
    for smp in &b.samples {
        let st = &smp.state;
        let j = st.chart;
        if !targets.iter().any(|(c, _, _)| *c == j) {
            let ch = Chart::new(metric.clone(), j)?;
            let mut pts = Vec::new();
            for cand in [&z, &mirror] {
                if let Ok(s) = ch.coordinates(cand) {
                    pts.push(s);
                }
            }
            targets.push((j, ch, pts));
        }
        let (_, ch, pts) = targets.iter().find(|(c, _, _)| *c == j).unwrap();
        let ds = if st.s.is_empty() {
            0.0
        } else {
            pts.iter().map(|p| (&st.s - p).norm()).fold(f64::INFINITY, f64::min)
        };
        let (_, br) = energy_blowup(ch, st, smp.mu)?;
        tau.push(st.tau);
        size.push(st.size);
        v_error.push(st.v - eq.v0);
        s_error.push(ds);
        w_norm.push(st.w.norm());
        bracket.push(br);
    }
    let dist: Vec<f64> = (0..n)
        .map(|i| (size[i].powi(2) + v_error[i].powi(2) + s_error[i].powi(2) + w_norm[i].powi(2)).sqrt())
        .collect();
    let rate = if eq.degenerate || n < 8 {
        None
    } else {
        let (mut x, mut y) = (vec![], vec![]);
        for i in n / 2..n {
            if dist[i] > 0.0 {
                x.push(tau[i]);
                y.push(dist[i].ln());
            }
        }
        if x.len() >= 3 {
            weighted_line(&x, &y, &vec![1.0; x.len()]).ok().map(|f| -f.slope)
        } else {
            None
        }
    };
    Ok(EquilibriumConvergence {
        final_v: b.samples[n - 1].state.v,
        v0: eq.v0,
        final_distance: dist[n - 1],
        tau,
        size,
        v_error,
        s_error,
        w_norm,
        bracket,
        rate,
    })
}
