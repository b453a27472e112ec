//! Central configurations of a cluster: residual, solver, restricted
//! Hessian and the spectral data of the corresponding blow-up equilibrium.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blowup::{Chart, ShapeSpace, Variant};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::system::{pair_gradient, subset_potential, to_complex, MassMetric, Vec2};

/// Relative tolerance below which a Hessian eigenvalue counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralConfig {
    pub masses: Vec<f64>,
    /// Positions relative to the cluster centre of mass.
    pub positions: Vec<[f64; 2]>,
    pub lambda: f64,
    pub normalized: bool,
    pub residual: f64,
    /// Gradient norms of the Newton iterates, first to last.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl CentralConfig {
    pub fn points(&self) -> Vec<Vec2<f64>> {
        self.positions.iter().map(|p| Vec2::new(p[0], p[1])).collect()
    }

    /// Sorted mutual distances, a rotation- and reflection-invariant key.
    pub fn distance_key(&self) -> Vec<f64> {
        let q = self.points();
        let mut d = Vec::new();
        for i in 0..q.len() {
            for j in i + 1..q.len() {
                d.push((q[i] - q[j]).norm());
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d
    }
}

/// Positions relative to the centre of mass of the given bodies.
fn centered<T: Real>(masses: &[T], q: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let m0 = masses.iter().fold(T::zero(), |a, &m| a + m);
    let c = q.iter().zip(masses).fold(Vec2::zeros(), |a, (x, &m)| a + x * m) / m0;
    q.iter().map(|x| x - c).collect()
}

/// `(|grad_i U + lambda m_i q_i|, lambda)` with `lambda = U/I`, the norm
/// taken in the dual mass metric `sum |f_i|^2 / m_i`. Positions are taken
/// relative to their centre of mass.
pub fn cc_residual<T: Real>(masses: &[T], q: &[Vec2<T>]) -> Result<(T, T)> {
    if masses.len() != q.len() || q.len() < 2 {
        return Err(Error::Dimension {
            expected: masses.len().max(2),
            got: q.len(),
        });
    }
    let z = centered(masses, q);
    let idx: Vec<usize> = (0..z.len()).collect();
    let u = subset_potential(masses, &z, &idx)?;
    let inertia = z.iter().zip(masses).fold(T::zero(), |a, (x, &m)| a + m * x.norm_squared());
    let lambda = u / inertia;
    let g = pair_gradient(masses, &z, &idx, &idx)?;
    let mut res = T::zero();
    for i in 0..z.len() {
        let f = g[i] + z[i] * (lambda * masses[i]);
        res += f.norm_squared() / masses[i];
    }
    Ok((res.sqrt(), lambda))
}

/// Solver settings for [`find_cc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcOptions {
    pub max_iterations: usize,
    /// Target for the residual of the normalised configuration.
    pub tol: f64,
}

impl Default for CcOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tol: 1e-13,
        }
    }
}

/// Rotates and normalises relative coordinates to `I = 1` with the first
/// body on the positive x-axis.
fn gauge_fixed(metric: &MassMetric<f64>, z: &[nalgebra::Complex<f64>]) -> Vec<Vec2<f64>> {
    let n = metric.norm2(z).sqrt();
    let first: Vec<Vec2<f64>> = z.iter().map(|a| Vec2::new(a.re / n, a.im / n)).collect();
    let mut all = first.clone();
    all.push(metric.eliminated(&first));
    let angle = all[0].y.atan2(all[0].x);
    let rot = crate::system::rotation(-angle);
    all.iter().map(|x| rot * x).collect()
}

/// Damped Newton iteration for a critical point of the shape potential
/// `V` in the best-conditioned chart of the guess. Shape space is already
/// the quotient by rotations, so no gauge direction remains; the result is
/// returned with `I = 1` and the first body on the positive x-axis.
pub fn find_cc(masses: &[f64], guess: &[Vec2<f64>], opts: &CcOptions) -> Result<CentralConfig> {
    let k = masses.len();
    if guess.len() != k || k < 2 {
        return Err(Error::Dimension { expected: k.max(2), got: guess.len() });
    }
    if masses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidMasses("masses must be positive".into()));
    }
    let metric = MassMetric::from_masses(masses.to_vec());
    let z = centered(masses, guess);
    let idx: Vec<usize> = (0..k).collect();
    subset_potential(masses, &z, &idx)?;
    let zc: Vec<_> = z[..k - 1].iter().map(to_complex).collect();
    if k == 2 {
        let pos = gauge_fixed(&metric, &zc);
        return finish(masses, &pos, vec![]);
    }
    let j = ShapeSpace::<f64>::preferred_chart(&zc);
    let chart = Chart::new(metric.clone(), j)?;
    let mut s = chart.coordinates(&zc)?;
    let mut g = chart.potential_gradient(&s)?;
    let mut history = vec![g.norm()];
    let mut damping = 0.0;
    for _ in 0..opts.max_iterations {
        if g.norm() < opts.tol {
            break;
        }
        let h = chart.potential_hessian(&s)?;
        let m = s.len();
        let mut accepted = false;
        for _ in 0..40 {
            let lhs = if damping > 0.0 {
                &h.transpose() * &h + DMatrix::identity(m, m) * damping
            } else {
                h.clone()
            };
            let rhs = if damping > 0.0 { h.transpose() * &g } else { g.clone() };
            let step = match lhs.lu().solve(&rhs) {
                Some(x) => x,
                None => {
                    damping = (damping * 10.0).max(1e-8);
                    continue;
                }
            };
            let trial = &s - step;
            match chart.potential_gradient(&trial) {
                Ok(gt) if gt.norm() < g.norm() => {
                    s = trial;
                    g = gt;
                    damping *= 0.1;
                    if damping < 1e-12 {
                        damping = 0.0;
                    }
                    accepted = true;
                    break;
                }
                _ => damping = (damping * 10.0).max(1e-6),
            }
        }
        history.push(g.norm());
        if !accepted {
            break;
        }
    }
    let p = chart.point(&s);
    let pos = gauge_fixed(&metric, &p);
    let (res, _) = cc_residual(masses, &pos)?;
    if !(res < opts.tol.max(1e-10)) {
        return Err(Error::NoConvergence {
            iterations: history.len() - 1,
            residual: res,
        });
    }
    finish(masses, &pos, history)
}

fn finish(masses: &[f64], pos: &[Vec2<f64>], history: Vec<f64>) -> Result<CentralConfig> {
    let (residual, lambda) = cc_residual(masses, pos)?;
    Ok(CentralConfig {
        masses: masses.to_vec(),
        positions: pos.iter().map(|x| [x.x, x.y]).collect(),
        lambda,
        normalized: true,
        residual,
        history,
    })
}

/// Runs [`find_cc`] from `starts` random shapes in parallel and keeps one
/// representative per distinct distance set.
pub fn multi_start(masses: &[f64], starts: usize, seed: u64) -> Vec<CentralConfig> {
    let k = masses.len();
    let found: Vec<CentralConfig> = (0..starts)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let guess: Vec<Vec2<f64>> = (0..k)
                .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            find_cc(masses, &guess, &CcOptions::default()).ok()
        })
        .collect();
    let mut out: Vec<CentralConfig> = Vec::new();
    for cc in found {
        let key = cc.distance_key();
        let dup = out.iter().any(|o| {
            o.distance_key()
                .iter()
                .zip(&key)
                .all(|(a, b)| (a - b).abs() < 1e-6)
        });
        if !dup {
            out.push(cc);
        }
    }
    out.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    out
}

/// Hessian of `V` at a central configuration in Fubini–Study form,
/// `A^{-1} D^2 V`, with its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedHessian {
    pub chart: usize,
    pub s0: DVector<f64>,
    pub matrix: DMatrix<f64>,
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
}

pub fn restricted_hessian(cc: &CentralConfig) -> Result<RestrictedHessian> {
    restricted_hessian_in_chart(cc, None)
}

/// Same as [`restricted_hessian`] in a chosen chart.
pub fn restricted_hessian_in_chart(cc: &CentralConfig, chart: Option<usize>) -> Result<RestrictedHessian> {
    let k = cc.masses.len();
    let metric = MassMetric::from_masses(cc.masses.clone());
    let q = cc.points();
    let zc: Vec<_> = q[..k - 1].iter().map(to_complex).collect();
    if k == 2 {
        return Ok(RestrictedHessian {
            chart: 0,
            s0: DVector::zeros(0),
            matrix: DMatrix::zeros(0, 0),
            eigenvalues: vec![],
        });
    }
    let j = chart.unwrap_or_else(|| ShapeSpace::<f64>::preferred_chart(&zc));
    let ch = Chart::new(metric, j)?;
    let s0 = ch.coordinates(&zc)?;
    let a = ch.a_matrix(&s0);
    let d2 = ch.potential_hessian(&s0)?;
    let l = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidState("Fubini-Study matrix is not positive definite".into()))?
        .l();
    let li = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidState("singular Cholesky factor".into()))?;
    let sym = &li * &d2 * li.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let matrix = a.cholesky().unwrap().solve(&d2);
    Ok(RestrictedHessian {
        chart: j,
        s0,
        matrix,
        eigenvalues,
    })
}

/// Roots `(lambda_+, lambda_-)` of `lambda^2 + (v0/2) lambda - c = 0` as
/// `[re, im]` pairs.
pub fn lambda_pair(v0: f64, c: f64) -> ([f64; 2], [f64; 2]) {
    let disc = v0 * v0 + 16.0 * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        ([(-v0 + r) / 4.0, 0.0], [(-v0 - r) / 4.0, 0.0])
    } else {
        let i = (-disc).sqrt() / 4.0;
        ([-v0 / 4.0, i], [-v0 / 4.0, -i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumData {
    pub mode: Variant,
    pub chart: usize,
    pub s0: Vec<f64>,
    /// `V(s0)`.
    pub potential: f64,
    pub v0: f64,
    /// Eigenvalues `c` of the restricted Hessian.
    pub hessian_eigenvalues: Vec<f64>,
    /// `(lambda_+, lambda_-)` per `c`, each as `[re, im]`.
    pub lambda_pairs: Vec<([f64; 2], [f64; 2])>,
    /// Every eigenvalue of the linearised blow-up field, as `[re, im]`.
    pub spectrum: Vec<[f64; 2]>,
    pub beta: f64,
    pub degenerate: bool,
}

/// Equilibrium `(0, v0, s0, 0)` of the blow-up field for a central
/// configuration, with the spectrum of the linearisation: `-v0/2` for `u`
/// (parabolic) or `v0` for `r` (collision), `v0` for `v`, and the pairs
/// `lambda_pm` for the shape block.
pub fn classify(cc: &CentralConfig, mode: Variant) -> Result<EquilibriumData> {
    let h = restricted_hessian(cc)?;
    let k = cc.masses.len();
    let metric = MassMetric::from_masses(cc.masses.clone());
    let potential = if k == 2 {
        Chart::new(metric, 0)?.potential(&DVector::zeros(0))?
    } else {
        Chart::new(metric, h.chart)?.potential(&h.s0)?
    };
    let speed = (2.0 * potential).sqrt();
    let v0 = match mode {
        Variant::Parabolic => speed,
        Variant::Collision => -speed,
    };
    let lambda_pairs: Vec<_> = h.eigenvalues.iter().map(|&c| lambda_pair(v0, c)).collect();
    let mut spectrum = vec![
        match mode {
            Variant::Parabolic => [-v0 / 2.0, 0.0],
            Variant::Collision => [v0, 0.0],
        },
        [v0, 0.0],
    ];
    for (a, b) in &lambda_pairs {
        spectrum.push(*a);
        spectrum.push(*b);
    }
    let beta = spectrum
        .iter()
        .map(|l| l[0].abs())
        .filter(|x| *x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let big = h.eigenvalues.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let scale = if big > 0.0 { big } else { 1.0 };
    let degenerate = h.eigenvalues.iter().any(|c| c.abs() < DEGENERACY_TOL * scale);
    Ok(EquilibriumData {
        mode,
        chart: h.chart,
        s0: h.s0.iter().copied().collect(),
        potential,
        v0,
        hessian_eigenvalues: h.eigenvalues,
        lambda_pairs,
        spectrum,
        beta: if beta.is_finite() { beta } else { 0.0 },
        degenerate,
    })
}

/// CC exchange record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcRecord {
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Variant>,
}

impl CcRecord {
    pub fn from_equilibrium(cc: &CentralConfig, eq: Option<&EquilibriumData>) -> Self {
        Self {
            masses: cc.masses.clone(),
            positions: cc.positions.clone(),
            lambda: Some(cc.lambda),
            eigenvalues: eq.map(|e| e.hessian_eigenvalues.clone()),
            beta: eq.map(|e| e.beta),
            mode: eq.map(|e| e.mode),
        }
    }

    /// Reads the record as a converged configuration, checking the residual.
    pub fn to_central_config(&self, tol: f64) -> Result<CentralConfig> {
        let q: Vec<Vec2<f64>> = self.positions.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        if q.len() != self.masses.len() {
            return Err(Error::Dimension {
                expected: self.masses.len(),
                got: q.len(),
            });
        }
        let (residual, lambda) = cc_residual(&self.masses, &q)?;
        let scale = lit::<f64>(1.0).max(lambda);
        if !(residual <= tol * scale) {
            return Err(Error::NoConvergence { iterations: 0, residual });
        }
        let z = centered(&self.masses, &q);
        let metric = MassMetric::from_masses(self.masses.clone());
        let zc: Vec<_> = z[..z.len() - 1].iter().map(to_complex).collect();
        finish(&self.masses, &gauge_fixed(&metric, &zc), vec![])
    }
}
