//! One-shot pipeline: simulate, transform, diagnose and optionally shadow a
//! scenario, collected into a single JSON document.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::blowup::{transform, BlowupTrajectory, Forcing, Variant};
use crate::centconfig::{classify as classify_cc, find_cc, CcOptions, CcRecord, CentralConfig, EquilibriumData};
use crate::diagnostics::{equilibrium_convergence, rate_suite, spin_report, FitStatus, RateFit, SpinReport};
use crate::dynamics::{
    classify, integrate, scenario_library, ClassificationReport, Mode, Scenario, ScenarioParams, StopReason,
    Trajectory, TrajectoryStats, Verdict,
};
use crate::error::{Error, Result};
use crate::integrator::Tolerances;
use crate::shadowing::{picard_solve, BlowupShadowSetup, ShadowOptions, ShadowReport};
use crate::system::{Cluster, Vec2};

pub const REPORT_SCHEMA: &str = "spinlab-report/1";

/// Largest excess allowed in the pointwise spin bound.
pub const SPIN_BOUND_SLACK: f64 = 1e-9;
/// Distance of the final blow-up `v` from `v0` accepted as converged.
pub const EQUILIBRIUM_V_TOL: f64 = 1e-3;
/// Otherwise `|v - v0|` must shrink by this factor at a positive fitted rate.
pub const EQUILIBRIUM_REDUCTION: f64 = 1e-2;
/// Membership residual accepted for a shadow.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stage {stage}: {error}")]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl StageError {
    /// 2 for input problems, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.stage == "validate" || self.error.is_input() {
            2
        } else {
            1
        }
    }
}

trait Staged<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Staged<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not applicable or not decidable from this run.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: detail.into(),
        }
    }

    fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skipped,
            detail: detail.into(),
        }
    }
}

/// Equilibrium section: the CC nearest the final cluster shape and how
/// close the blow-up trajectory came to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSection {
    pub cc: CcRecord,
    pub data: EquilibriumData,
    pub final_v: f64,
    pub v0: f64,
    pub final_s_error: f64,
    pub final_distance: f64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBundle {
    pub schema: String,
    pub scenario: String,
    pub mode: Mode,
    pub masses: Vec<f64>,
    pub cluster: Vec<usize>,
    pub stop_reason: StopReason,
    pub stats: TrajectoryStats,
    pub samples: usize,
    pub t_span: [f64; 2],
    pub classification: ClassificationReport,
    pub rates: Vec<RateFit>,
    pub spin: Option<SpinReport>,
    pub equilibrium: Option<EquilibriumSection>,
    pub shadow: Option<ShadowReport>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOptions {
    pub params: ScenarioParams,
    pub shadow: bool,
}

pub fn variant_of(mode: Mode) -> Option<Variant> {
    match mode {
        Mode::Parabolic => Some(Variant::Parabolic),
        Mode::Collision => Some(Variant::Collision),
        Mode::Generic => None,
    }
}

/// CC of the cluster nearest its shape in the last sample.
pub fn final_cluster_cc(tr: &Trajectory<f64>, b: &BlowupTrajectory) -> Result<CentralConfig> {
    let idx = b.cluster.indices();
    let last = tr.last();
    let masses: Vec<f64> = idx.iter().map(|&i| tr.sys.masses()[i]).collect();
    let guess: Vec<Vec2<f64>> = idx.iter().map(|&i| last.q[i]).collect();
    find_cc(&masses, &guess, &CcOptions::default())
}

fn scenario_checks(tr: &Trajectory<f64>, s: &Scenario<f64>, cl: &ClassificationReport) -> Vec<Check> {
    let mut out = Vec::new();
    let expected = match s.mode {
        Mode::Parabolic => Some(Verdict::KParabolic),
        Mode::Collision => Some(Verdict::KCollision),
        Mode::Generic => None,
    };
    match expected {
        Some(v) => out.push(Check::new(
            "classification",
            cl.verdict == v,
            format!("{:?}, expected {:?}", cl.verdict, v),
        )),
        None => out.push(Check::skipped("classification", "generic mode")),
    }
    let ok_stop = !matches!(tr.stop, StopReason::StepUnderflow | StopReason::MaxSteps);
    out.push(Check::new("integration", ok_stop, format!("stopped: {}", tr.stop.as_str())));
    out
}

fn rate_checks(rates: &[RateFit]) -> Vec<Check> {
    rates
        .iter()
        .map(|f| {
            let name = format!("rate {} vs {}", f.series, f.against);
            let detail = format!("slope {:.4}, {:?}, {:.2} decades", f.slope, f.criterion, f.decades);
            match f.status {
                FitStatus::Unreliable => Check::skipped(name, format!("unreliable: {}", detail)),
                FitStatus::Vanishing => Check::new(name, f.pass, "series vanishes to integration error"),
                _ => Check::new(name, f.pass, detail),
            }
        })
        .collect()
}

fn spin_checks(sp: &SpinReport) -> Vec<Check> {
    vec![
        Check::new(
            "spin tail variation",
            sp.tail_variation < sp.tolerance,
            format!("{:.3e} < {:.0e}", sp.tail_variation, sp.tolerance),
        ),
        Check::new(
            "arclength tail-Cauchy",
            sp.tail_cauchy,
            format!("{:.3e} < {:.0e}", sp.tail_arclength, sp.tolerance),
        ),
        Check::new(
            "spin bound",
            sp.bound_excess <= SPIN_BOUND_SLACK,
            format!("excess {:.3e} with C = {:.4}", sp.bound_excess, sp.c_bound),
        ),
    ]
}

/// Default start of the forced blow-up shadow: a small offset in size and
/// `v` from the equilibrium.
/// The parabolic start keeps `v = v0`: there `v` is the unstable
/// direction and an offset amounts to a nonzero energy bracket.
pub fn default_shadow_start(variant: Variant, dim: usize) -> DVector<f64> {
    let mut x0 = DVector::zeros(dim);
    x0[0] = 1e-2;
    if variant == Variant::Collision {
        x0[1] = 1e-2;
    }
    x0
}

/// Picard shadow of the blow-up field at `cc` forced by `forcing`.
pub fn blowup_shadow(
    cc: &CentralConfig,
    variant: Variant,
    forcing: Option<Forcing>,
    x0: Option<DVector<f64>>,
    horizon: f64,
    eta: Option<f64>,
    step: Option<f64>,
) -> Result<ShadowReport> {
    let setup = BlowupShadowSetup::new(cc, variant, forcing)?;
    if let Some(x) = &x0 {
        if x.len() != setup.dim() {
            return Err(Error::Dimension { expected: setup.dim(), got: x.len() });
        }
    }
    if setup.equilibrium.degenerate {
        return Err(Error::NoSpectralGap("degenerate equilibrium"));
    }
    let x0 = x0.unwrap_or_else(|| default_shadow_start(variant, setup.dim()));
    let p = setup.problem(&x0, horizon, Tolerances { rtol: 1e-12, atol: 1e-14 })?;
    let mut opts = ShadowOptions::new(eta.unwrap_or_else(|| setup.default_eta()));
    if let Some(h) = step {
        opts.step = h;
    }
    Ok(picard_solve(&p, &opts)?.report)
}

fn shadow_checks(r: &ShadowReport) -> Vec<Check> {
    vec![
        Check::new("shadow contraction", r.kappa < 1.0, format!("kappa {:.4}", r.kappa)),
        Check::new("shadow rate", r.rate_fit >= r.eta, format!("rate {:.4} >= eta {:.4}", r.rate_fit, r.eta)),
        Check::new(
            "shadow membership",
            r.membership_residual < MEMBERSHIP_TOL,
            format!("{:.3e}", r.membership_residual),
        ),
    ]
}

/// Runs a library scenario through every stage.
pub fn report_bundle(name: &str, opts: &ReportOptions) -> std::result::Result<ReportBundle, StageError> {
    let mut s = scenario_library(name, &opts.params).stage("validate")?;
    if let Some(c) = &opts.params.cluster {
        s.cluster = Cluster::from_one_based(c, s.sys.n()).stage("validate")?;
    }
    report_for(&s, opts.shadow)
}

pub fn report_for(s: &Scenario<f64>, shadow: bool) -> std::result::Result<ReportBundle, StageError> {
    if s.cluster.len() < 2 {
        return Err(StageError {
            stage: "validate",
            error: Error::InvalidCluster("a cluster needs at least two bodies".into()),
        });
    }
    let tr = integrate(s).stage("simulate")?;
    let classification = classify(&tr, &s.cluster);
    let mut checks = scenario_checks(&tr, s, &classification);
    let rates = rate_suite(&tr, &s.cluster, s.mode).stage("diagnostics")?;
    checks.extend(rate_checks(&rates));
    let (mut spin, mut equilibrium, mut shadow_report) = (None, None, None);
    if let Some(variant) = variant_of(s.mode) {
        let b = transform(&tr, &s.cluster, variant).stage("transform")?;
        let sp = spin_report(&b).stage("diagnostics")?;
        checks.extend(spin_checks(&sp));
        spin = Some(sp);
        let cc = final_cluster_cc(&tr, &b).stage("equilibrium")?;
        let eq = classify_cc(&cc, variant).stage("equilibrium")?;
        let conv = equilibrium_convergence(&b, &cc, &eq).stage("equilibrium")?;
        let dv = (conv.final_v - conv.v0).abs();
        let dv_start = conv.v_error.first().map_or(0.0, |x| x.abs());
        let approaching = conv.rate.is_some_and(|r| r > 0.0) && dv <= EQUILIBRIUM_REDUCTION * dv_start;
        checks.push(Check::new(
            "equilibrium v",
            dv < EQUILIBRIUM_V_TOL || approaching,
            format!(
                "v = {:.7}, v0 = {:.7}, |v - v0| from {:.3e} to {:.3e}, rate {:?}",
                conv.final_v, conv.v0, dv_start, dv, conv.rate
            ),
        ));
        if shadow {
            let horizon = b.samples.last().map_or(0.0, |x| x.state.tau).min(10.0);
            let r = blowup_shadow(&cc, variant, Some(b.forcing()), None, horizon.max(1.0), None, None).stage("shadow")?;
            checks.extend(shadow_checks(&r));
            shadow_report = Some(r);
        }
        equilibrium = Some(EquilibriumSection {
            cc: CcRecord::from_equilibrium(&cc, Some(&eq)),
            final_v: conv.final_v,
            v0: conv.v0,
            final_s_error: *conv.s_error.last().unwrap_or(&0.0),
            final_distance: conv.final_distance,
            rate: conv.rate,
            data: eq,
        });
    }
    let pass = checks.iter().all(|c| c.status != CheckStatus::Fail);
    Ok(ReportBundle {
        schema: REPORT_SCHEMA.into(),
        scenario: s.name.clone(),
        mode: s.mode,
        masses: s.sys.masses().to_vec(),
        cluster: s.cluster.one_based(),
        stop_reason: tr.stop,
        stats: tr.stats,
        samples: tr.len(),
        t_span: [tr.states[0].t, tr.last().t],
        classification,
        rates,
        spin,
        equilibrium,
        shadow: shadow_report,
        checks,
        pass,
    })
}

/// Independent scenarios in parallel, in input order.
pub fn report_batch(names: &[String], opts: &ReportOptions) -> Vec<std::result::Result<ReportBundle, StageError>> {
    use rayon::prelude::*;
    names.par_iter().map(|n| report_bundle(n, opts)).collect()
}

/// Where the forcing of a blow-up shadow comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSource {
    /// A library scenario, transformed for its own cluster.
    Scenario(String),
    /// A blow-up CSV with sidecar, relative to the problem file.
    BlowupCsv(String),
}

/// Shadow problem document: the blow-up field at a central configuration,
/// optionally forced by a recorded trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowProblemFile {
    pub masses: Vec<f64>,
    /// Approximate CC; refined before use.
    pub positions: Vec<[f64; 2]>,
    pub variant: Variant,
    #[serde(default)]
    pub forcing: Option<ForcingSource>,
    /// Offset from the equilibrium; see [`default_shadow_start`].
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub horizon: f64,
    /// `min(beta / 2, |v0| / 4)` when absent.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

pub fn run_shadow_file(f: &ShadowProblemFile, base: &std::path::Path) -> std::result::Result<ShadowReport, StageError> {
    if !(f.horizon > 0.0) {
        return Err(StageError {
            stage: "validate",
            error: Error::InvalidParameter(format!("horizon {} must be positive", f.horizon)),
        });
    }
    let guess: Vec<Vec2<f64>> = f.positions.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let cc = find_cc(&f.masses, &guess, &CcOptions::default()).stage("centconfig")?;
    let forcing = match &f.forcing {
        None => None,
        Some(ForcingSource::Scenario(name)) => {
            let s = scenario_library(name, &ScenarioParams::default()).stage("validate")?;
            let tr = integrate(&s).stage("simulate")?;
            Some(transform(&tr, &s.cluster, f.variant).stage("transform")?.forcing())
        }
        Some(ForcingSource::BlowupCsv(path)) => {
            Some(crate::io::read_blowup(&base.join(path)).stage("validate")?.forcing())
        }
    };
    let x0 = f.x0.as_ref().map(|v| DVector::from_column_slice(v));
    blowup_shadow(&cc, f.variant, forcing, x0, f.horizon, f.eta, f.step).stage("shadow")
}

/// Parses a bundle and checks its internal consistency.
pub fn validate_bundle(text: &str) -> Result<ReportBundle> {
    let b: ReportBundle = crate::io::parse_json(text, "report")?;
    if b.schema != REPORT_SCHEMA {
        return Err(Error::Format(format!("schema `{}`, expected `{}`", b.schema, REPORT_SCHEMA)));
    }
    if b.cluster.len() < 2 || b.cluster.iter().any(|&i| i == 0 || i > b.masses.len()) {
        return Err(Error::Format("cluster indices out of range".into()));
    }
    let pass = b.checks.iter().all(|c| c.status != CheckStatus::Fail);
    if pass != b.pass {
        return Err(Error::Format("`pass` disagrees with the checks".into()));
    }
    if let Some(sp) = &b.spin {
        if sp.t.len() != sp.theta.len() || sp.t.len() != sp.arclength.len() {
            return Err(Error::Format("spin series lengths differ".into()));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cluster_fails_validation() {
        let p = ScenarioParams {
            cluster: Some(vec![]),
            ..Default::default()
        };
        let e = report_bundle("lagrange_homothetic_collision", &ReportOptions { params: p, shadow: false }).unwrap_err();
        assert_eq!(e.stage, "validate");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn validator_rejects_inconsistent_pass() {
        let b = report_bundle("lagrange_homothetic_collision", &ReportOptions::default()).unwrap();
        let mut v = serde_json::to_value(&b).unwrap();
        v["pass"] = serde_json::Value::Bool(!b.pass);
        assert!(validate_bundle(&v.to_string()).is_err());
        v["pass"] = serde_json::Value::Bool(b.pass);
        v["schema"] = "other".into();
        assert!(validate_bundle(&v.to_string()).is_err());
    }
}
