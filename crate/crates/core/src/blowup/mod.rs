//! Shape coordinates of a cluster and the McGehee-type blow-up of its
//! relative motion.
//!
//! A cluster state splits into size `r = sqrt(I_k)`, its rate `rho = r'`,
//! an overall phase `theta`, the angular momentum `mu`, and a point `s` of
//! complex projective shape space with velocity `omega`, plus the frame
//! (cluster centre and the bodies outside the cluster).

pub mod fubini;
pub mod transform;

use nalgebra::{Complex, ComplexField, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::system::{cluster_geometry, pair_gradient, CartesianState, Cluster, MassMetric, MassSystem, Vec2};

pub use fubini::{solve_spd, Chart, FubiniData};
pub use transform::{
    energy_blowup, forcing_at, from_blowup, res_field, to_blowup, transform, BlowupRates, BlowupSample, BlowupState, BlowupTrajectory, Forcing,
    ForcingValue, Variant,
};

/// Charts are switched once `|Z_j|` drops below this fraction of `max |Z_a|`.
pub const CHART_SWITCH_RATIO: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeState<T: Real> {
    pub t: T,
    pub r: T,
    pub rho: T,
    pub theta: T,
    pub mu: T,
    pub s: DVector<T>,
    pub omega: DVector<T>,
    pub chart: usize,
    /// Cluster centre of mass and its velocity.
    pub c: Vec2<T>,
    pub cdot: Vec2<T>,
    /// Positions and velocities of the bodies outside the cluster, in
    /// complement order.
    pub external_q: Vec<Vec2<T>>,
    pub external_v: Vec<Vec2<T>>,
}

/// Time derivatives of the cluster part of a [`ShapeState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRates<T: Real> {
    pub r: T,
    pub rho: T,
    pub theta: T,
    pub mu: T,
    pub s: DVector<T>,
    pub omega: DVector<T>,
    pub cddot: Vec2<T>,
}

/// Partial derivatives of `U_kk'` in shape coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPartials<T: Real> {
    pub dr: T,
    pub dtheta: T,
    pub ds: DVector<T>,
    /// Gradient with respect to the cluster centre.
    pub dc: Vec2<T>,
}

/// Shape space of one cluster inside a mass system.
#[derive(Debug, Clone)]
pub struct ShapeSpace<T: Real> {
    pub sys: MassSystem<T>,
    pub cluster: Cluster,
    pub metric: MassMetric<T>,
    charts: Vec<Chart<T>>,
}

impl<T: Real> ShapeSpace<T> {
    pub fn new(sys: &MassSystem<T>, cluster: &Cluster) -> Result<Self> {
        if cluster.len() < 2 || cluster.n_bodies() != sys.n() {
            return Err(Error::InvalidCluster(format!(
                "a cluster needs at least two of the {} bodies",
                sys.n()
            )));
        }
        let metric = crate::system::mass_metric(sys, cluster);
        let charts = (0..metric.dim())
            .map(|j| Chart::new(metric.clone(), j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sys: sys.clone(),
            cluster: cluster.clone(),
            metric,
            charts,
        })
    }

    /// Number of bodies in the cluster.
    pub fn k(&self) -> usize {
        self.cluster.len()
    }

    /// Real dimension of shape space, `2|k| - 4`.
    pub fn dim(&self) -> usize {
        2 * self.k() - 4
    }

    pub fn default_chart(&self) -> usize {
        self.k() - 2
    }

    pub fn chart(&self, j: usize) -> Result<&Chart<T>> {
        self.charts
            .get(j)
            .ok_or_else(|| Error::InvalidParameter(format!("chart {} does not exist", j)))
    }

    /// Relative coordinates `Z` and `Z'` of the first `|k|-1` cluster bodies.
    pub fn relative(&self, state: &CartesianState<T>) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>, Vec2<T>, Vec2<T>)> {
        let g = cluster_geometry(&self.sys, &self.cluster, &state.q, &state.v)?;
        let d = self.metric.dim();
        let z = g.z[..d].iter().map(|v| Complex::new(v.x, v.y)).collect();
        let zd = g.zdot[..d].iter().map(|v| Complex::new(v.x, v.y)).collect();
        Ok((z, zd, g.c, g.cdot))
    }

    /// Index of the largest coordinate, the best conditioned chart.
    pub fn preferred_chart(z: &[Complex<T>]) -> usize {
        (0..z.len())
            .max_by(|a, b| z[*a].modulus().partial_cmp(&z[*b].modulus()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0)
    }

    /// `|Z_j| / max |Z_a|`.
    pub fn chart_ratio(z: &[Complex<T>], j: usize) -> T {
        let big = z.iter().fold(T::zero(), |a, x| a.max(x.modulus()));
        z[j].modulus() / big
    }

    pub fn to_shape(&self, state: &CartesianState<T>, chart: Option<usize>) -> Result<ShapeState<T>> {
        let (z, zd, c, cdot) = self.relative(state)?;
        let j = chart.unwrap_or_else(|| self.default_chart());
        let ch = self.chart(j)?;
        let s = ch.coordinates(&z)?;
        let zj = z[j];
        let zdj = zd[j];
        let om: Vec<Complex<T>> = ch
            .free
            .iter()
            .map(|&l| (zd[l] * zj - z[l] * zdj) / (zj * zj))
            .collect();
        let inner = self.metric.inner(&z, &zd);
        let r = self.metric.norm2(&z).sqrt();
        if !(r > T::zero()) {
            return Err(Error::InvalidState("cluster is at total collision".into()));
        }
        let comp = self.cluster.complement();
        Ok(ShapeState {
            t: state.t,
            r,
            rho: inner.re / r,
            theta: zj.argument(),
            mu: inner.im,
            s,
            omega: ch.from_complex(&om),
            chart: j,
            c,
            cdot,
            external_q: comp.iter().map(|&i| state.q[i]).collect(),
            external_v: comp.iter().map(|&i| state.v[i]).collect(),
        })
    }

    /// Relative coordinates `Z` and `Z'` of a shape state.
    pub fn relative_from_shape(&self, sh: &ShapeState<T>) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>)> {
        let ch = self.chart(sh.chart)?;
        let p = ch.point(&sh.s);
        let e = ch.embed(&sh.omega);
        let n = self.metric.norm2(&p);
        let sn = n.sqrt();
        let pe = self.metric.inner(&p, &e);
        let (g, om) = (pe.re, pe.im);
        let phase = fubini::polar(sh.r, sh.theta);
        let theta_dot = sh.mu / (sh.r * sh.r) - om / n;
        let z: Vec<Complex<T>> = p.iter().map(|a| phase * *a / sn).collect();
        let radial = Complex::new(sh.rho / sh.r, theta_dot);
        let n32 = n * sn;
        let zd = z
            .iter()
            .zip(p.iter().zip(&e))
            .map(|(za, (pa, ea))| radial * *za + phase * (*ea / sn - *pa * (g / n32)))
            .collect();
        Ok((z, zd))
    }

    pub fn from_shape(&self, sh: &ShapeState<T>) -> Result<CartesianState<T>> {
        let (z, zd) = self.relative_from_shape(sh)?;
        let ch = self.chart(sh.chart)?;
        let zb = ch.bodies(&z);
        let vb = ch.bodies(&zd);
        let n = self.sys.n();
        let mut q = vec![Vec2::zeros(); n];
        let mut v = vec![Vec2::zeros(); n];
        for (a, &i) in self.cluster.indices().iter().enumerate() {
            q[i] = sh.c + zb[a];
            v[i] = sh.cdot + vb[a];
        }
        for (b, i) in self.cluster.complement().into_iter().enumerate() {
            q[i] = sh.external_q[b];
            v[i] = sh.external_v[b];
        }
        Ok(CartesianState { t: sh.t, q, v })
    }

    /// Positions of all bodies for a shape state.
    fn positions(&self, sh: &ShapeState<T>, z: &[Complex<T>]) -> Result<Vec<Vec2<T>>> {
        let ch = self.chart(sh.chart)?;
        let zb = ch.bodies(z);
        let mut q = vec![Vec2::zeros(); self.sys.n()];
        for (a, &i) in self.cluster.indices().iter().enumerate() {
            q[i] = sh.c + zb[a];
        }
        for (b, i) in self.cluster.complement().into_iter().enumerate() {
            q[i] = sh.external_q[b];
        }
        Ok(q)
    }

    pub fn cross_partials(&self, sh: &ShapeState<T>) -> Result<CrossPartials<T>> {
        let ch = self.chart(sh.chart)?;
        let (z, _) = self.relative_from_shape(sh)?;
        let q = self.positions(sh, &z)?;
        let idx = self.cluster.indices();
        let g = pair_gradient(self.sys.masses(), &q, idx, &self.cluster.complement())?;
        let gk: Vec<Vec2<T>> = idx.iter().map(|&i| g[i]).collect();
        let dc = gk.iter().fold(Vec2::zeros(), |a, x| a + x);
        let gz = ch.z_gradient(&gk);
        let pair = |dz: &[Complex<T>]| gz.iter().zip(dz).fold(T::zero(), |a, (g, d)| a + (g.conj() * d).re);
        let dr = pair(&z.iter().map(|a| *a / sh.r).collect::<Vec<_>>());
        let i = Complex::new(T::zero(), T::one());
        let dtheta = pair(&z.iter().map(|a| *a * i).collect::<Vec<_>>());
        let phase = fubini::polar(sh.r, sh.theta);
        let dx = ch.normalized_derivatives(&sh.s);
        let ds = DVector::from_iterator(
            dx.len(),
            dx.iter().map(|d| pair(&d.iter().map(|a| *a * phase).collect::<Vec<_>>())),
        );
        Ok(CrossPartials { dr, dtheta, ds, dc })
    }

    /// Equations of motion in shape coordinates, including the magnetic
    /// term `(mu/r^2) A^{-1} K omega` coming from the curvature of `B`.
    pub fn el_field(&self, sh: &ShapeState<T>) -> Result<ShapeRates<T>> {
        let ch = self.chart(sh.chart)?;
        let d = ch.data(&sh.s, &sh.omega)?;
        let cp = self.cross_partials(sh)?;
        let r = sh.r;
        let r2 = r * r;
        let r3 = r2 * r;
        let rho_dot = r * d.f - d.v / r2 + sh.mu * sh.mu / r3 + cp.dr;
        let theta_dot = sh.mu / r2 - d.b.dot(&sh.omega);
        let mu_dot = cp.dtheta;
        let omega_dot = if ch.dim() == 0 {
            DVector::zeros(0)
        } else {
            let gv = ch.potential_gradient(&sh.s)?;
            let rhs = ch.f_gradient(&sh.s, &sh.omega) * lit::<T>(0.5) + gv / r3 - ch.da_term(&sh.s, &sh.omega)
                + &cp.ds / r2
                - &d.b * (mu_dot / r2)
                + ch.curvature(&sh.s) * &sh.omega * (sh.mu / r2);
            solve_spd(&d.a, &rhs)? - &sh.omega * (lit::<T>(2.0) * sh.rho / r)
        };
        Ok(ShapeRates {
            r: sh.rho,
            rho: rho_dot,
            theta: theta_dot,
            mu: mu_dot,
            s: sh.omega.clone(),
            omega: omega_dot,
            cddot: cp.dc / self.metric.total_mass,
        })
    }

    /// Cluster energy `h_k = rho^2/2 + r^2 F/2 + mu^2/(2 r^2) - V/r`.
    pub fn energy(&self, sh: &ShapeState<T>) -> Result<T> {
        let d = self.chart(sh.chart)?.data(&sh.s, &sh.omega)?;
        let half = lit::<T>(0.5);
        let r2 = sh.r * sh.r;
        Ok(half * sh.rho * sh.rho + half * r2 * d.f + half * sh.mu * sh.mu / r2 - d.v / sh.r)
    }
}
