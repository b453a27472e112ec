//! File formats: scenario JSON, trajectory and blow-up CSV with JSON
//! sidecars, generic numeric tables. Every write goes through a temporary
//! file and a rename.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::blowup::{BlowupSample, BlowupState, BlowupTrajectory, ForcingValue, Variant};
use crate::dynamics::{Mode, Scenario, StopConditions, StopReason, Trajectory, TrajectoryStats};
use crate::error::{Error, Result};
use crate::integrator::Tolerances;
use crate::system::{CartesianState, Cluster, MassSystem, Vec2};

/// `NaN` and infinities as JSON `null`, read back as `NaN`.
pub mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// [`nan_null`] for `[f64; 2]`.
pub mod nan_null_pair {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
        x.map(|v| v.is_finite().then_some(v)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 2], D::Error> {
        Ok(<[Option<f64>; 2]>::deserialize(d)?.map(|v| v.unwrap_or(f64::NAN)))
    }
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{}: not a file path", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{}.tmp{}", name, std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::Io(format!("{}: {}", tmp.display(), e)))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(format!("{}: {}", path.display(), e))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e)))
}

/// Parses JSON; the error names the line and column of the first problem.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("{}: {}", what, e)))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

/// `out.csv` -> `out.csv.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopFile {
    pub t_end: f64,
    #[serde(default)]
    pub r_min: Option<f64>,
    #[serde(default)]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesFile {
    pub rtol: f64,
    pub atol: f64,
}

/// Scenario document. Physics fields have no defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    /// One-based body indices.
    pub cluster: Vec<usize>,
    pub mode: Mode,
    pub stop: StopFile,
    pub tolerances: TolerancesFile,
    /// Start time; 0 when absent.
    #[serde(default)]
    pub t0: Option<f64>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "scenario")
    }

    pub fn to_scenario(&self) -> Result<Scenario<f64>> {
        let n = self.masses.len();
        if self.positions.len() != n || self.velocities.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.positions.len().min(self.velocities.len()),
            });
        }
        let sys = MassSystem::new(self.masses.clone())?;
        let q = self.positions.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let v = self.velocities.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let initial = CartesianState::centered(&sys, self.t0.unwrap_or(0.0), q, v)?;
        let cluster = Cluster::from_one_based(&self.cluster, n)?;
        if !(self.tolerances.rtol > 0.0 && self.tolerances.atol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        let stop = StopConditions {
            t_end: self.stop.t_end,
            r_min: self.stop.r_min,
            r_max: self.stop.r_max,
        };
        Ok(Scenario::new(
            self.name.clone().unwrap_or_else(|| "custom".into()),
            sys,
            initial,
            cluster,
            self.mode,
            stop,
        )?
        .with_tolerances(Tolerances {
            rtol: self.tolerances.rtol,
            atol: self.tolerances.atol,
        }))
    }

    pub fn from_scenario(s: &Scenario<f64>) -> Self {
        Self {
            name: Some(s.name.clone()),
            masses: s.sys.masses().to_vec(),
            positions: s.initial.q.iter().map(|p| [p.x, p.y]).collect(),
            velocities: s.initial.v.iter().map(|p| [p.x, p.y]).collect(),
            cluster: s.cluster.one_based(),
            mode: s.mode,
            stop: StopFile {
                t_end: s.stop.t_end,
                r_min: s.stop.r_min,
                r_max: s.stop.r_max,
            },
            tolerances: TolerancesFile {
                rtol: s.tol.rtol,
                atol: s.tol.atol,
            },
            t0: Some(s.initial.t),
        }
    }
}

/// Sidecar of a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scenario: String,
    pub masses: Vec<f64>,
    pub cluster: Vec<usize>,
    pub mode: Mode,
    pub stop_reason: StopReason,
    pub stats: TrajectoryStats,
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for p in ["q", "v"] {
        for i in 1..=n {
            h.push(format!("{}{}x", p, i));
            h.push(format!("{}{}y", p, i));
        }
    }
    h
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_trajectory(path: &Path, tr: &Trajectory<f64>, meta: &TrajectoryMeta) -> Result<()> {
    let n = tr.sys.n();
    let rows = tr.states.iter().map(|s| {
        let mut r = vec![fmt17(s.t)];
        for p in s.q.iter().chain(&s.v) {
            r.push(fmt17(p.x));
            r.push(fmt17(p.y));
        }
        r
    });
    let bytes = csv_bytes(&trajectory_header(n), rows)?;
    write_atomic(path, &bytes)?;
    write_json(&sidecar_path(path), meta)
}

/// Numeric CSV as a header and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Format(format!("missing column `{}`", name)))
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }
}

pub fn parse_table(text: &str, what: &str) -> Result<Table> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| Error::Format(format!("{}: {}", what, e)))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().any(|h| h.is_empty()) {
        return Err(Error::Format(format!("{} line 1: empty header field", what)));
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Format(format!("{} line {}: {}", what, line, e)))?;
        if rec.len() != header.len() {
            return Err(Error::Format(format!(
                "{} line {}: {} fields, expected {}",
                what,
                line,
                rec.len(),
                header.len()
            )));
        }
        for (j, f) in rec.iter().enumerate() {
            let x: f64 = f.parse().map_err(|_| {
                Error::Format(format!("{} line {}, field `{}`: `{}` is not a number", what, line, header[j], f))
            })?;
            columns[j].push(x);
        }
    }
    Ok(Table { header, columns })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table(&read_text(path)?, &path.display().to_string())
}

/// True when the header is the trajectory header for some body count.
pub fn is_trajectory_header(header: &[String]) -> bool {
    let m = header.len();
    m >= 9 && (m - 1) % 4 == 0 && header == trajectory_header((m - 1) / 4).as_slice()
}

pub fn read_trajectory(path: &Path) -> Result<(Trajectory<f64>, TrajectoryMeta)> {
    let table = read_table(path)?;
    let meta: TrajectoryMeta = read_json(&sidecar_path(path))?;
    let n = meta.masses.len();
    if table.header != trajectory_header(n) {
        return Err(Error::Format(format!(
            "{} line 1: header does not match {} bodies",
            path.display(),
            n
        )));
    }
    let sys = MassSystem::new(meta.masses.clone())?;
    let c = &table.columns;
    let states = (0..table.rows())
        .map(|k| {
            let q = (0..n).map(|i| Vec2::new(c[1 + 2 * i][k], c[2 + 2 * i][k])).collect();
            let v = (0..n).map(|i| Vec2::new(c[1 + 2 * n + 2 * i][k], c[2 + 2 * n + 2 * i][k])).collect();
            CartesianState { t: c[0][k], q, v }
        })
        .collect();
    Ok((
        Trajectory {
            sys,
            states,
            stats: meta.stats,
            stop: meta.stop_reason,
        },
        meta,
    ))
}

/// Sidecar of a blow-up CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupMeta {
    pub variant: Variant,
    pub masses: Vec<f64>,
    /// One-based indices into the original system.
    pub cluster: Vec<usize>,
    pub n_bodies: usize,
    pub switches: Vec<usize>,
}

/// `tau,t,u|r,v,s1..,w1..,hk,F,P,Q1..,theta,theta_dot,mu,b_norm,chart`.
pub fn blowup_header(variant: Variant, m: usize) -> Vec<String> {
    let mut h: Vec<String> = vec!["tau".into(), "t".into(), variant.size_name().into(), "v".into()];
    h.extend((1..=m).map(|i| format!("s{}", i)));
    h.extend((1..=m).map(|i| format!("w{}", i)));
    h.extend(["hk", "F", "P"].iter().map(|s| s.to_string()));
    h.extend((1..=m).map(|i| format!("Q{}", i)));
    h.extend(["theta", "theta_dot", "mu", "b_norm", "chart"].iter().map(|s| s.to_string()));
    h
}

pub fn write_blowup(path: &Path, b: &BlowupTrajectory, masses: &[f64]) -> Result<()> {
    let m = b.samples.first().map_or(0, |s| s.state.s.len());
    let rows = b.samples.iter().map(|s| {
        let st = &s.state;
        let mut r = vec![fmt17(st.tau), fmt17(st.t), fmt17(st.size), fmt17(st.v)];
        r.extend(st.s.iter().chain(st.w.iter()).map(|x| fmt17(*x)));
        r.extend([s.hk, s.f, s.forcing.p].iter().map(|x| fmt17(*x)));
        r.extend(s.forcing.q.iter().map(|x| fmt17(*x)));
        r.extend([s.theta, s.theta_dot, s.mu, s.b_norm].iter().map(|x| fmt17(*x)));
        r.push(st.chart.to_string());
        r
    });
    let bytes = csv_bytes(&blowup_header(b.variant, m), rows)?;
    write_atomic(path, &bytes)?;
    let cl_masses: Vec<f64> = b.cluster.indices().iter().map(|&i| masses[i]).collect();
    write_json(
        &sidecar_path(path),
        &BlowupMeta {
            variant: b.variant,
            masses: cl_masses,
            cluster: b.cluster.one_based(),
            n_bodies: b.cluster.n_bodies(),
            switches: b.switches.clone(),
        },
    )
}

pub fn read_blowup(path: &Path) -> Result<BlowupTrajectory> {
    let table = read_table(path)?;
    let meta: BlowupMeta = read_json(&sidecar_path(path))?;
    let k = meta.cluster.len();
    let m = 2 * k.saturating_sub(2);
    if table.header != blowup_header(meta.variant, m) {
        return Err(Error::Format(format!(
            "{} line 1: header does not match a {}-body {} blow-up",
            path.display(),
            k,
            meta.variant.as_str()
        )));
    }
    let cluster = Cluster::from_one_based(&meta.cluster, meta.n_bodies)?;
    let c = &table.columns;
    let col = |name: &str| table.column(name);
    let (tau, t, size, v) = (col("tau")?, col("t")?, col(meta.variant.size_name())?, col("v")?);
    let (hk, f, p) = (col("hk")?, col("F")?, col("P")?);
    let (theta, theta_dot, mu, b_norm, chart) = (col("theta")?, col("theta_dot")?, col("mu")?, col("b_norm")?, col("chart")?);
    let samples = (0..table.rows())
        .map(|i| {
            let vec_at = |off: usize| DVector::from_fn(m, |j, _| c[off + j][i]);
            let s = vec_at(4);
            let w = vec_at(4 + m);
            let q = vec_at(7 + 2 * m);
            let r = match meta.variant {
                Variant::Parabolic => size[i].powi(-2),
                Variant::Collision => size[i],
            };
            let mm = match meta.variant {
                Variant::Parabolic => mu[i],
                Variant::Collision => mu[i] * r.powf(-2.5),
            };
            BlowupSample {
                state: BlowupState {
                    variant: meta.variant,
                    tau: tau[i],
                    t: t[i],
                    size: size[i],
                    v: v[i],
                    s,
                    w,
                    chart: chart[i] as usize,
                },
                r,
                rho: v[i] / r.sqrt(),
                theta: theta[i],
                theta_dot: theta_dot[i],
                mu: mu[i],
                hk: hk[i],
                f: f[i],
                speed: f[i].max(0.0).sqrt() / r.powf(1.5),
                b_norm: b_norm[i],
                forcing: ForcingValue { p: p[i], q, m: mm },
            }
        })
        .collect();
    Ok(BlowupTrajectory {
        variant: meta.variant,
        cluster,
        samples,
        switches: meta.switches,
    })
}
