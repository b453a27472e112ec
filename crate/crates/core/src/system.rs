//! Mass systems, clusters, potentials and the cluster-level scalars
//! (centre of mass, inertia, energy, angular momentum) everything else uses.
//!
//! Indices are zero-based throughout the library; the file formats and the
//! command line use one-based indices and convert at the boundary.

use nalgebra::{Complex, DMatrix, Vector2};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub type Vec2<T> = Vector2<T>;

/// Default tolerance for re-centring a state on construction.
pub const COM_DRIFT_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MassSystem<T> {
    masses: Vec<T>,
}

impl<T: Real> MassSystem<T> {
    pub fn new(masses: Vec<T>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::InvalidMasses(format!(
                "need at least two bodies, got {}",
                masses.len()
            )));
        }
        if let Some(i) = masses.iter().position(|m| !(*m > T::zero())) {
            return Err(Error::InvalidMasses(format!("mass {} is not positive", i)));
        }
        Ok(Self { masses })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.masses.len()
    }

    #[inline]
    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    #[inline]
    pub fn mass(&self, i: usize) -> T {
        self.masses[i]
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().fold(T::zero(), |a, &m| a + m)
    }

    pub fn cluster_mass(&self, cluster: &Cluster) -> T {
        cluster
            .indices()
            .iter()
            .fold(T::zero(), |a, &i| a + self.masses[i])
    }
}

/// Ordered subset `k` of the bodies, `|k| >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cluster {
    indices: Vec<usize>,
    n: usize,
}

impl Cluster {
    /// Builds a cluster from zero-based indices; the indices are sorted.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.len() < 2 {
            return Err(Error::InvalidCluster(format!(
                "cluster needs at least two bodies, got {}",
                indices.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCluster("repeated index".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidCluster(format!(
                "index {} out of range for {} bodies",
                i + 1,
                n
            )));
        }
        Ok(Self { indices, n })
    }

    /// Builds a cluster from one-based indices as used in the file formats.
    pub fn from_one_based(indices: &[usize], n: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidCluster("indices are one-based".into()));
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), n)
    }

    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            n,
        }
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn n_bodies(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// The complement `k'`.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.contains(*i)).collect()
    }

    pub fn is_everything(&self) -> bool {
        self.indices.len() == self.n
    }
}

/// Positions and velocities of all bodies at time `t`, centre of mass at rest
/// at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianState<T> {
    pub t: T,
    pub q: Vec<Vec2<T>>,
    pub v: Vec<Vec2<T>>,
}

impl<T: Real> CartesianState<T> {
    /// Validates and re-centres a state. Drifts up to [`COM_DRIFT_LIMIT`]
    /// (relative to the configuration size) are removed silently.
    pub fn new(sys: &MassSystem<T>, t: T, q: Vec<Vec2<T>>, v: Vec<Vec2<T>>) -> Result<Self> {
        Self::with_tolerance(sys, t, q, v, lit(COM_DRIFT_LIMIT))
    }

    pub fn with_tolerance(
        sys: &MassSystem<T>,
        t: T,
        q: Vec<Vec2<T>>,
        v: Vec<Vec2<T>>,
        tol: T,
    ) -> Result<Self> {
        check_lengths(sys, &q, &v)?;
        let (cq, cv) = (barycentre(sys, &q), barycentre(sys, &v));
        let qs = scale_of(&q);
        let vs = scale_of(&v);
        let drift = (cq.norm() / qs).max(cv.norm() / vs);
        if !(drift <= tol) {
            return Err(Error::CenterOfMassDrift {
                drift: drift.as_f64(),
                limit: tol.as_f64(),
            });
        }
        let state = Self {
            t,
            q: q.into_iter().map(|x| x - cq).collect(),
            v: v.into_iter().map(|x| x - cv).collect(),
        };
        state.check_separated()?;
        Ok(state)
    }

    /// Shifts an arbitrary state into the centre-of-mass frame.
    pub fn centered(sys: &MassSystem<T>, t: T, q: Vec<Vec2<T>>, v: Vec<Vec2<T>>) -> Result<Self> {
        check_lengths(sys, &q, &v)?;
        let (cq, cv) = (barycentre(sys, &q), barycentre(sys, &v));
        let state = Self {
            t,
            q: q.into_iter().map(|x| x - cq).collect(),
            v: v.into_iter().map(|x| x - cv).collect(),
        };
        state.check_separated()?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    fn check_separated(&self) -> Result<()> {
        for i in 0..self.q.len() {
            for j in i + 1..self.q.len() {
                if !((self.q[i] - self.q[j]).norm() > T::zero()) {
                    return Err(Error::Collision(i, j));
                }
            }
        }
        Ok(())
    }

    /// Rigid rotation of positions and velocities by `angle`.
    pub fn rotated(&self, angle: T) -> Self {
        let rot = rotation(angle);
        Self {
            t: self.t,
            q: self.q.iter().map(|x| rot * x).collect(),
            v: self.v.iter().map(|x| rot * x).collect(),
        }
    }

    /// Flat layout `[q1x, q1y, ..., qnx, qny, v1x, ..., vny]`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(4 * self.q.len());
        for x in &self.q {
            out.push(x.x);
            out.push(x.y);
        }
        for x in &self.v {
            out.push(x.x);
            out.push(x.y);
        }
        out
    }

    pub fn from_flat(t: T, flat: &[T]) -> Self {
        let n = flat.len() / 4;
        let q = (0..n).map(|i| Vec2::new(flat[2 * i], flat[2 * i + 1])).collect();
        let v = (0..n)
            .map(|i| Vec2::new(flat[2 * n + 2 * i], flat[2 * n + 2 * i + 1]))
            .collect();
        Self { t, q, v }
    }

    pub fn kinetic_energy(&self, sys: &MassSystem<T>) -> T {
        self.v
            .iter()
            .zip(sys.masses())
            .fold(T::zero(), |a, (v, &m)| a + m * v.norm_squared())
            * lit(0.5)
    }

    pub fn energy(&self, sys: &MassSystem<T>) -> Result<T> {
        Ok(self.kinetic_energy(sys) - total_potential(sys, &self.q)?)
    }

    /// Total angular momentum `sum m_i q_i x v_i`.
    pub fn angular_momentum(&self, sys: &MassSystem<T>) -> T {
        self.q
            .iter()
            .zip(&self.v)
            .zip(sys.masses())
            .fold(T::zero(), |a, ((q, v), &m)| a + m * cross(q, v))
    }

    pub fn linear_momentum(&self, sys: &MassSystem<T>) -> Vec2<T> {
        self.v
            .iter()
            .zip(sys.masses())
            .fold(Vec2::zeros(), |a, (v, &m)| a + v * m)
    }

    pub fn min_distance(&self) -> (T, usize, usize) {
        min_pair_distance(&self.q, None)
    }
}

fn check_lengths<T: Real>(sys: &MassSystem<T>, q: &[Vec2<T>], v: &[Vec2<T>]) -> Result<()> {
    if q.len() != sys.n() {
        return Err(Error::Dimension {
            expected: sys.n(),
            got: q.len(),
        });
    }
    if v.len() != sys.n() {
        return Err(Error::Dimension {
            expected: sys.n(),
            got: v.len(),
        });
    }
    Ok(())
}

fn scale_of<T: Real>(x: &[Vec2<T>]) -> T {
    x.iter().fold(T::one(), |a, p| a.max(p.norm()))
}

fn barycentre<T: Real>(sys: &MassSystem<T>, x: &[Vec2<T>]) -> Vec2<T> {
    let s = x
        .iter()
        .zip(sys.masses())
        .fold(Vec2::zeros(), |a, (p, &m)| a + p * m);
    s / sys.total_mass()
}

/// Planar cross product `a x b`.
#[inline]
pub fn cross<T: Real>(a: &Vec2<T>, b: &Vec2<T>) -> T {
    a.x * b.y - a.y * b.x
}

/// Rotation by +90 degrees.
#[inline]
pub fn perp<T: Real>(a: &Vec2<T>) -> Vec2<T> {
    Vec2::new(-a.y, a.x)
}

pub fn rotation<T: Real>(angle: T) -> nalgebra::Matrix2<T> {
    let (s, c) = angle.sin_cos();
    nalgebra::Matrix2::new(c, -s, s, c)
}

#[inline]
pub fn to_complex<T: Real>(a: &Vec2<T>) -> Complex<T> {
    Complex::new(a.x, a.y)
}

#[inline]
pub fn from_complex<T: Real>(a: &Complex<T>) -> Vec2<T> {
    Vec2::new(a.re, a.im)
}

/// Minimum pairwise distance, optionally restricted to a subset of bodies.
pub fn min_pair_distance<T: Real>(q: &[Vec2<T>], subset: Option<&[usize]>) -> (T, usize, usize) {
    let all: Vec<usize>;
    let idx = match subset {
        Some(s) => s,
        None => {
            all = (0..q.len()).collect();
            &all
        }
    };
    let mut best = (T::max_value().unwrap_or_else(|| lit(f64::MAX)), 0, 0);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d = (q[i] - q[j]).norm();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    best
}

/// Potential `sum_{i<j in idx} m_i m_j / r_ij` over a subset of bodies.
pub fn subset_potential<T: Real>(masses: &[T], q: &[Vec2<T>], idx: &[usize]) -> Result<T> {
    let mut u = T::zero();
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let r = (q[i] - q[j]).norm();
            if !(r > T::zero()) {
                return Err(Error::Collision(i.min(j), i.max(j)));
            }
            u += masses[i] * masses[j] / r;
        }
    }
    Ok(u)
}

/// `U(q) = sum_{i<j} m_i m_j / r_ij`.
pub fn total_potential<T: Real>(sys: &MassSystem<T>, q: &[Vec2<T>]) -> Result<T> {
    let idx: Vec<usize> = (0..sys.n()).collect();
    subset_potential(sys.masses(), q, &idx)
}

/// The decomposition `U = U_k + U_k' + U_kk'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSplit<T> {
    pub inner: T,
    pub outer: T,
    pub cross: T,
}

impl<T: Real> PotentialSplit<T> {
    pub fn total(&self) -> T {
        self.inner + self.outer + self.cross
    }
}

pub fn split_potentials<T: Real>(
    sys: &MassSystem<T>,
    cluster: &Cluster,
    q: &[Vec2<T>],
) -> Result<PotentialSplit<T>> {
    let m = sys.masses();
    let comp = cluster.complement();
    let inner = subset_potential(m, q, cluster.indices())?;
    let outer = subset_potential(m, q, &comp)?;
    let mut cross = T::zero();
    for &i in cluster.indices() {
        for &j in &comp {
            let r = (q[i] - q[j]).norm();
            if !(r > T::zero()) {
                return Err(Error::Collision(i.min(j), i.max(j)));
            }
            cross += m[i] * m[j] / r;
        }
    }
    Ok(PotentialSplit {
        inner,
        outer,
        cross,
    })
}

/// Gradients `grad_i U` of the pair potential summed over the pairs
/// `(i, j)` with `i` in `targets` and `j` in `sources`, `i != j`.
/// Returns one vector per body (zero for bodies outside `targets`).
pub fn pair_gradient<T: Real>(
    masses: &[T],
    q: &[Vec2<T>],
    targets: &[usize],
    sources: &[usize],
) -> Result<Vec<Vec2<T>>> {
    let mut g = vec![Vec2::zeros(); q.len()];
    for &i in targets {
        for &j in sources {
            if i == j {
                continue;
            }
            let d = q[j] - q[i];
            let r2 = d.norm_squared();
            if !(r2 > T::zero()) {
                return Err(Error::Collision(i.min(j), i.max(j)));
            }
            let r = r2.sqrt();
            // grad_i (m_i m_j / |q_i - q_j|) = m_i m_j (q_j - q_i) / r^3
            g[i] += d * (masses[i] * masses[j] / (r2 * r));
        }
    }
    Ok(g)
}

/// `grad_i U` for every body.
pub fn potential_gradient<T: Real>(sys: &MassSystem<T>, q: &[Vec2<T>]) -> Result<Vec<Vec2<T>>> {
    let all: Vec<usize> = (0..sys.n()).collect();
    pair_gradient(sys.masses(), q, &all, &all)
}

/// `grad_i U_k` for `i` in the cluster (zero elsewhere).
pub fn cluster_gradient<T: Real>(
    sys: &MassSystem<T>,
    cluster: &Cluster,
    q: &[Vec2<T>],
) -> Result<Vec<Vec2<T>>> {
    pair_gradient(sys.masses(), q, cluster.indices(), cluster.indices())
}

/// `grad_i U_kk'` for `i` in the cluster (zero elsewhere).
pub fn cross_gradient<T: Real>(
    sys: &MassSystem<T>,
    cluster: &Cluster,
    q: &[Vec2<T>],
) -> Result<Vec<Vec2<T>>> {
    pair_gradient(sys.masses(), q, cluster.indices(), &cluster.complement())
}

/// Second variation `d^2 U_k [dq, dq']` of the cluster potential.
pub fn cluster_hessian_form<T: Real>(
    masses: &[T],
    q: &[Vec2<T>],
    idx: &[usize],
    dq: &[Vec2<T>],
    dq2: &[Vec2<T>],
) -> T {
    let mut acc = T::zero();
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let x = q[i] - q[j];
            let r2 = x.norm_squared();
            let r = r2.sqrt();
            let d1 = dq[i] - dq[j];
            let d2 = dq2[i] - dq2[j];
            let r3 = r2 * r;
            let r5 = r3 * r2;
            acc += masses[i]
                * masses[j]
                * (-(d1.dot(&d2)) / r3 + lit::<T>(3.0) * x.dot(&d1) * x.dot(&d2) / r5);
        }
    }
    acc
}

/// Quantities of the cluster's motion relative to its own centre of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGeometry<T> {
    /// Cluster centre of mass `c_k`.
    pub c: Vec2<T>,
    pub cdot: Vec2<T>,
    /// Relative positions `q_i - c_k`, in cluster order (all `|k|` bodies).
    pub z: Vec<Vec2<T>>,
    pub zdot: Vec<Vec2<T>>,
    /// `I_k = sum m_i |z_i|^2`.
    pub inertia: T,
    pub kinetic: T,
    pub potential: T,
    /// `h_k = K_k - U_k`.
    pub energy: T,
    /// Angular momentum of the relative motion.
    pub mu: T,
}

pub fn cluster_geometry<T: Real>(
    sys: &MassSystem<T>,
    cluster: &Cluster,
    q: &[Vec2<T>],
    v: &[Vec2<T>],
) -> Result<ClusterGeometry<T>> {
    let m = sys.masses();
    let mk = sys.cluster_mass(cluster);
    let idx = cluster.indices();
    let c = idx.iter().fold(Vec2::zeros(), |a, &i| a + q[i] * m[i]) / mk;
    let cdot = idx.iter().fold(Vec2::zeros(), |a, &i| a + v[i] * m[i]) / mk;
    let z: Vec<Vec2<T>> = idx.iter().map(|&i| q[i] - c).collect();
    let zdot: Vec<Vec2<T>> = idx.iter().map(|&i| v[i] - cdot).collect();
    let mut inertia = T::zero();
    let mut kinetic = T::zero();
    let mut mu = T::zero();
    for (a, &i) in idx.iter().enumerate() {
        inertia += m[i] * z[a].norm_squared();
        kinetic += m[i] * zdot[a].norm_squared();
        mu += m[i] * cross(&z[a], &zdot[a]);
    }
    kinetic *= lit(0.5);
    let potential = subset_potential(m, q, idx)?;
    Ok(ClusterGeometry {
        c,
        cdot,
        z,
        zdot,
        inertia,
        kinetic,
        potential,
        energy: kinetic - potential,
        mu,
    })
}

/// Mass metric of a cluster in the relative coordinates
/// `z_i = q_i - c_k`, `i = 1..|k|-1` (the last body is eliminated).
///
/// As a Hermitian form on `C^{|k|-1}` it is the real symmetric matrix
/// `diag(m_1..m_{k-1}) + m m^T / m_k`; the real form on `R^{2|k|-2}` is that
/// matrix tensored with the 2x2 identity.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMetric<T: Real> {
    /// `(|k|-1) x (|k|-1)` Hermitian (real symmetric) block.
    pub hermitian: DMatrix<T>,
    /// `(2|k|-2) x (2|k|-2)` real matrix.
    pub matrix: DMatrix<T>,
    /// Total cluster mass `m_0`.
    pub total_mass: T,
    /// Masses of the cluster bodies in cluster order.
    pub masses: Vec<T>,
}

pub fn mass_metric<T: Real>(sys: &MassSystem<T>, cluster: &Cluster) -> MassMetric<T> {
    let masses: Vec<T> = cluster.indices().iter().map(|&i| sys.mass(i)).collect();
    MassMetric::from_masses(masses)
}

impl<T: Real> MassMetric<T> {
    pub fn from_masses(masses: Vec<T>) -> Self {
        let k = masses.len();
        let last = masses[k - 1];
        let herm = DMatrix::from_fn(k - 1, k - 1, |a, b| {
            let d = if a == b { masses[a] } else { T::zero() };
            d + masses[a] * masses[b] / last
        });
        let matrix = DMatrix::from_fn(2 * (k - 1), 2 * (k - 1), |a, b| {
            if a % 2 == b % 2 {
                herm[(a / 2, b / 2)]
            } else {
                T::zero()
            }
        });
        let total_mass = masses.iter().fold(T::zero(), |a, &m| a + m);
        Self {
            hermitian: herm,
            matrix,
            total_mass,
            masses,
        }
    }

    /// Complex dimension `|k| - 1`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.hermitian.nrows()
    }

    /// `<<a, b>>_C = conj(a)^T M b`.
    pub fn inner(&self, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..a.len() {
            let mut row = Complex::new(T::zero(), T::zero());
            for j in 0..b.len() {
                row += b[j] * self.hermitian[(i, j)];
            }
            acc += a[i].conj() * row;
        }
        acc
    }

    pub fn norm2(&self, a: &[Complex<T>]) -> T {
        self.inner(a, a).re
    }

    /// Position of the eliminated last body, `-(1/m_k) sum m_i z_i`.
    pub fn eliminated<V>(&self, z: &[V]) -> V
    where
        V: Copy + std::ops::Mul<T, Output = V> + std::ops::Add<Output = V> + std::ops::Neg<Output = V>,
    {
        let k = self.masses.len();
        let mut acc = z[0] * self.masses[0];
        for i in 1..k - 1 {
            acc = acc + z[i] * self.masses[i];
        }
        -(acc * (T::one() / self.masses[k - 1]))
    }

    /// `1/2 zdot^T M zdot + 1/2 m_0 |cdot|^2`.
    pub fn kinetic(&self, zdot: &[Vec2<T>], cdot: &Vec2<T>) -> T {
        let zc: Vec<Complex<T>> = zdot.iter().map(to_complex).collect();
        (self.norm2(&zc) + self.total_mass * cdot.norm_squared()) * lit(0.5)
    }
}

/// `mu = zdot^T M J z` with `J` the blockwise rotation by +90 degrees;
/// `z` and `zdot` hold the first `|k|-1` relative positions.
pub fn angular_momentum<T: Real>(metric: &MassMetric<T>, z: &[Vec2<T>], zdot: &[Vec2<T>]) -> Result<T> {
    let d = metric.dim();
    if z.len() != d || zdot.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: z.len().min(zdot.len()),
        });
    }
    let mut mu = T::zero();
    for a in 0..d {
        for b in 0..d {
            mu += metric.hermitian[(a, b)] * zdot[a].dot(&perp(&z[b]));
        }
    }
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    fn equilateral(side: f64) -> Vec<Vec2<f64>> {
        let r = side / 3f64.sqrt();
        (0..3)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                v(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    #[test]
    fn potential_examples() {
        let sys = MassSystem::new(vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(total_potential(&sys, &[v(-0.5, 0.), v(0.5, 0.)]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(total_potential(&sys, &[v(0., 0.), v(3., 4.)]).unwrap(), 0.2, epsilon = 1e-15);
        let sys3 = MassSystem::new(vec![1.0; 3]).unwrap();
        assert_abs_diff_eq!(total_potential(&sys3, &equilateral(1.0)).unwrap(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn coincident_bodies_are_named() {
        let sys = MassSystem::new(vec![1.0; 3]).unwrap();
        let err = total_potential(&sys, &[v(0., 0.), v(1., 0.), v(1., 0.)]).unwrap_err();
        assert_eq!(err, Error::Collision(1, 2));
    }

    #[test]
    fn split_examples() {
        let sys = MassSystem::new(vec![1.0; 3]).unwrap();
        let q = [v(0., 0.), v(1., 0.), v(10., 0.)];
        let k = Cluster::new(vec![0, 1], 3).unwrap();
        let s = split_potentials(&sys, &k, &q).unwrap();
        assert_abs_diff_eq!(s.inner, 1.0, epsilon = 1e-15);
        assert_eq!(s.outer, 0.0);
        assert_abs_diff_eq!(s.cross, 0.1 + 1.0 / 9.0, epsilon = 1e-15);
        let all = Cluster::all(3);
        let s = split_potentials(&sys, &all, &q).unwrap();
        assert_eq!((s.outer, s.cross), (0.0, 0.0));
    }

    #[test]
    fn geometry_examples() {
        let sys = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let k = Cluster::all(2);
        let g = cluster_geometry(&sys, &k, &[v(-0.5, 0.), v(0.5, 0.)], &[v(0.5, 0.), v(-0.5, 0.)]).unwrap();
        assert_abs_diff_eq!(g.c.norm(), 0.0);
        assert_abs_diff_eq!(g.inertia, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.energy, -0.75, epsilon = 1e-15);

        let sys3 = MassSystem::new(vec![1.0; 3]).unwrap();
        let q = equilateral(1.0);
        let g = cluster_geometry(&sys3, &Cluster::all(3), &q, &[Vec2::zeros(); 3]).unwrap();
        assert_abs_diff_eq!(g.inertia, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.energy, -3.0, epsilon = 1e-14);
    }

    #[test]
    fn mass_metric_two_body() {
        let m = MassMetric::from_masses(vec![1.0, 1.0]);
        assert_eq!(m.matrix, DMatrix::identity(2, 2) * 2.0);
        let m = MassMetric::from_masses(vec![1.0, 3.0]);
        assert_abs_diff_eq!(m.matrix[(0, 0)], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.matrix[(1, 1)], 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn angular_momentum_examples() {
        let m = MassMetric::from_masses(vec![1.0, 1.0]);
        let mu = angular_momentum(&m, &[v(1., 0.)], &[v(0., 1.)]).unwrap();
        assert_abs_diff_eq!(mu, 2.0, epsilon = 1e-15);
        let mu = angular_momentum(&m, &[v(1., 2.)], &[v(3., 6.)]).unwrap();
        assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cluster_validation() {
        assert!(Cluster::new(vec![1], 3).is_err());
        assert!(Cluster::new(vec![1, 1], 3).is_err());
        assert!(Cluster::new(vec![0, 3], 3).is_err());
        let k = Cluster::from_one_based(&[3, 1], 4).unwrap();
        assert_eq!(k.indices(), &[0, 2]);
        assert_eq!(k.complement(), vec![1, 3]);
    }

    #[test]
    fn state_recentres_small_drift_and_rejects_large() {
        let sys = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let s = CartesianState::new(&sys, 0.0, vec![v(-0.5, 1e-10), v(0.5, 0.)], vec![Vec2::zeros(); 2]).unwrap();
        assert!(s.q[0].y.abs() < 1e-10 && (s.q[0].y + s.q[1].y).abs() < 1e-20);
        let err = CartesianState::new(&sys, 0.0, vec![v(0.0, 0.0), v(1.0, 0.)], vec![Vec2::zeros(); 2]);
        assert!(matches!(err, Err(Error::CenterOfMassDrift { .. })));
        let c = CartesianState::centered(&sys, 0.0, vec![v(0.0, 0.0), v(1.0, 0.)], vec![Vec2::zeros(); 2]).unwrap();
        assert_abs_diff_eq!(c.q[0].x, -0.5);
    }

    #[test]
    fn works_in_single_precision() {
        let sys = MassSystem::new(vec![1.0f32, 1.0]).unwrap();
        let u = total_potential(&sys, &[Vec2::new(0.0f32, 0.0), Vec2::new(3.0, 4.0)]).unwrap();
        assert!((u - 0.2).abs() < 1e-7);
    }
}
