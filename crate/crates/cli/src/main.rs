use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use spinlab::blowup::{transform, Variant};
use spinlab::centconfig::{classify, find_cc, CcOptions, CcRecord};
use spinlab::diagnostics::{fit_series, rate_suite, spin_report_with, Criterion, SPIN_TAIL_TOL};
use spinlab::dynamics::{integrate, scenario_library, Mode, Scenario, ScenarioParams, NAMES};
use spinlab::io::{self, ScenarioFile, TrajectoryMeta};
use spinlab::report::{self, ReportOptions, ShadowProblemFile, StageError};
use spinlab::system::{Cluster, Vec2};
use spinlab::Error;

#[derive(Parser)]
#[command(name = "spinlab", version, about = "N-body cluster blow-up diagnostics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a scenario file or library scenario to a trajectory CSV.
    Simulate {
        /// Scenario JSON, or a library name.
        scenario: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Parameter overrides (JSON) for a library scenario.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Blow-up variables for a cluster of a trajectory CSV.
    Transform {
        trajectory: PathBuf,
        /// One-based body indices; the sidecar's cluster when absent.
        #[arg(long, value_delimiter = ',')]
        cluster: Option<Vec<usize>>,
        /// `parabolic` or `collision`; from the sidecar's mode when absent.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Central configurations.
    Cc {
        #[command(subcommand)]
        cmd: CcCmd,
    },
    /// Spin and arclength diagnostics of a blow-up CSV.
    Spin {
        blowup: PathBuf,
        #[arg(long, default_value_t = SPIN_TAIL_TOL)]
        tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rate-law fits. A trajectory CSV gets the full suite; any other
    /// numeric CSV gets each column fitted against the first.
    Rates {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',')]
        cluster: Option<Vec<usize>>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Picard shadow of a blow-up problem file.
    Shadow {
        problem: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Every diagnostic for one or more scenarios as one JSON document.
    /// Exits 1 when a check fails.
    Report {
        /// Library names or scenario JSON files; several run in parallel.
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[arg(long)]
        shadow: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a report bundle against its schema.
    Validate { bundle: PathBuf },
}

#[derive(Subcommand)]
enum CcCmd {
    /// Refine a guess `{masses, positions}` to a normalised CC.
    Find {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Blow-up equilibrium and spectrum of a converged CC.
    Classify {
        input: PathBuf,
        #[arg(long, default_value = "collision")]
        variant: Variant,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_input() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => io::write_json(p, value)?,
        None => {
            let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", text) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(Error::from(e).into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn load_scenario(arg: &str, params: &ScenarioParams) -> Result<Scenario<f64>, Error> {
    let path = Path::new(arg);
    if path.is_file() {
        ScenarioFile::parse(&io::read_text(path)?)?.to_scenario()
    } else if NAMES.contains(&arg) {
        scenario_library(arg, params)
    } else {
        Err(Error::Io(format!("{}: no such file or library scenario", arg)))
    }
}

fn simulate(scenario: &str, output: &Path, params: Option<&Path>) -> Outcome {
    let params: ScenarioParams = match params {
        Some(p) => io::read_json(p)?,
        None => ScenarioParams::default(),
    };
    let s = load_scenario(scenario, &params)?;
    let tr = integrate(&s)?;
    let meta = TrajectoryMeta {
        scenario: s.name.clone(),
        masses: s.sys.masses().to_vec(),
        cluster: s.cluster.one_based(),
        mode: s.mode,
        stop_reason: tr.stop,
        stats: tr.stats,
    };
    io::write_trajectory(output, &tr, &meta)?;
    eprintln!(
        "{} samples to t = {:.6e}, stopped: {}",
        tr.len(),
        tr.last().t,
        tr.stop.as_str()
    );
    Ok(0)
}

fn transform_cmd(path: &Path, cluster: Option<Vec<usize>>, variant: Option<Variant>, output: &Path) -> Outcome {
    let (tr, meta) = io::read_trajectory(path)?;
    let cl = Cluster::from_one_based(&cluster.unwrap_or(meta.cluster), tr.sys.n())?;
    let variant = match variant.or_else(|| report::variant_of(meta.mode)) {
        Some(v) => v,
        None => return Err(Error::InvalidParameter("generic mode needs an explicit --variant".into()).into()),
    };
    let b = transform(&tr, &cl, variant)?;
    io::write_blowup(output, &b, tr.sys.masses())?;
    eprintln!("{} samples, {} chart switches", b.len(), b.switches.len());
    Ok(0)
}

fn cc_cmd(cmd: CcCmd) -> Outcome {
    match cmd {
        CcCmd::Find { input, output } => {
            let rec: CcRecord = io::read_json(&input)?;
            let q: Vec<Vec2<f64>> = rec.positions.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            let cc = find_cc(&rec.masses, &q, &CcOptions::default())?;
            emit(&CcRecord::from_equilibrium(&cc, None), output.as_deref())?;
        }
        CcCmd::Classify { input, variant, output } => {
            let rec: CcRecord = io::read_json(&input)?;
            let cc = rec.to_central_config(1e-8)?;
            let eq = classify(&cc, variant)?;
            emit(&eq, output.as_deref())?;
        }
    }
    Ok(0)
}

fn rates_cmd(path: &Path, cluster: Option<Vec<usize>>, mode: Option<Mode>, output: Option<&Path>) -> Outcome {
    let table = io::read_table(path)?;
    let fits = if io::is_trajectory_header(&table.header) {
        let (tr, meta) = io::read_trajectory(path)?;
        let cl = Cluster::from_one_based(&cluster.unwrap_or(meta.cluster), tr.sys.n())?;
        rate_suite(&tr, &cl, mode.unwrap_or(meta.mode))?
    } else {
        if table.header.len() < 2 {
            return Err(Error::Format(format!("{}: need an abscissa and at least one series", path.display())).into());
        }
        let x = &table.columns[0];
        table.header[1..]
            .iter()
            .zip(&table.columns[1..])
            .map(|(name, y)| fit_series(name, &table.header[0], x, y, None, Criterion::Report))
            .collect()
    };
    emit(&fits, output)?;
    Ok(0)
}

fn report_cmd(scenarios: &[String], shadow: bool, output: Option<&Path>) -> Outcome {
    let opts = ReportOptions {
        params: ScenarioParams::default(),
        shadow,
    };
    let files: Vec<bool> = scenarios.iter().map(|s| Path::new(s).is_file()).collect();
    let results: Vec<Result<report::ReportBundle, StageError>> = if files.iter().any(|f| *f) {
        scenarios
            .iter()
            .map(|s| {
                let sc = load_scenario(s, &opts.params).map_err(|error| StageError { stage: "validate", error })?;
                report::report_for(&sc, shadow)
            })
            .collect()
    } else {
        report::report_batch(scenarios, &opts)
    };
    let mut bundles = Vec::new();
    for r in results {
        bundles.push(r?);
    }
    let pass = bundles.iter().all(|b| b.pass);
    if bundles.len() == 1 {
        emit(&bundles[0], output)?;
    } else {
        emit(&bundles, output)?;
    }
    for b in &bundles {
        for c in b.checks.iter().filter(|c| c.status == report::CheckStatus::Fail) {
            eprintln!("{}: check failed: {} ({})", b.scenario, c.name, c.detail);
        }
    }
    Ok(if pass { 0 } else { 1 })
}

fn run(cli: Cli) -> Outcome {
    match cli.cmd {
        Cmd::Simulate { scenario, output, params } => simulate(&scenario, &output, params.as_deref()),
        Cmd::Transform {
            trajectory,
            cluster,
            variant,
            output,
        } => transform_cmd(&trajectory, cluster, variant, &output),
        Cmd::Cc { cmd } => cc_cmd(cmd),
        Cmd::Spin { blowup, tol, output } => {
            let b = io::read_blowup(&blowup)?;
            emit(&spin_report_with(&b, tol)?, output.as_deref())?;
            Ok(0)
        }
        Cmd::Rates {
            csv,
            cluster,
            mode,
            output,
        } => rates_cmd(&csv, cluster, mode, output.as_deref()),
        Cmd::Shadow { problem, output } => {
            let f: ShadowProblemFile = io::read_json(&problem)?;
            let base = problem.parent().unwrap_or(Path::new("."));
            emit(&report::run_shadow_file(&f, base)?, output.as_deref())?;
            Ok(0)
        }
        Cmd::Report {
            scenarios,
            shadow,
            output,
        } => report_cmd(&scenarios, shadow, output.as_deref()),
        Cmd::Validate { bundle } => {
            let b = report::validate_bundle(&io::read_text(&bundle)?)?;
            eprintln!("{}: valid, pass = {}", b.scenario, b.pass);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
