//! Fubini–Study geometry of one homogeneous chart of shape space.
//!
//! A chart `j` writes the relative configuration `Z in C^{|k|-1}` as
//! `Z = r e^{i theta} p / |p|` with `p_j = 1` and the remaining entries of
//! `p` forming the chart point `s`. Real vectors of length `2|k|-4` hold
//! `s` and its velocity as interleaved (re, im) pairs.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::system::{cluster_hessian_form, subset_potential, MassMetric, Vec2};

pub type C<T> = Complex<T>;

pub fn polar<T: Real>(r: T, theta: T) -> C<T> {
    C::new(r * theta.cos(), r * theta.sin())
}

/// `F`, `A`, `B`, `Omega`, `G` and `V` at one chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct FubiniData<T: Real> {
    /// `|omega|^2_FS`.
    pub f: T,
    pub a: DMatrix<T>,
    /// Row vector with `B omega = Omega / N`.
    pub b: DVector<T>,
    pub omega_form: T,
    pub g_form: T,
    /// `V(s) = |p| U_k(p)`.
    pub v: T,
    /// `N = |p|^2`.
    pub n: T,
}

/// One chart of the shape space of a cluster, with the cluster masses
/// needed to evaluate the potential.
#[derive(Debug, Clone)]
pub struct Chart<T: Real> {
    pub metric: MassMetric<T>,
    /// Index of the coordinate fixed to 1.
    pub index: usize,
    /// Complex coordinates that make up `s`, in order.
    pub free: Vec<usize>,
    /// `re <<E e_j, E e_l>>` on real basis vectors of `s`-space.
    ms: DMatrix<T>,
    /// `im <<E e_j, E e_l>>`.
    js: DMatrix<T>,
}

fn unit<T: Real>(l: usize) -> C<T> {
    if l % 2 == 0 {
        C::new(T::one(), T::zero())
    } else {
        C::new(T::zero(), T::one())
    }
}

impl<T: Real> Chart<T> {
    pub fn new(metric: MassMetric<T>, index: usize) -> Result<Self> {
        let d = metric.dim();
        if index >= d {
            return Err(Error::InvalidParameter(format!(
                "chart {} out of range for {} complex coordinates",
                index, d
            )));
        }
        let free: Vec<usize> = (0..d).filter(|a| *a != index).collect();
        let m = 2 * free.len();
        let mut ms = DMatrix::zeros(m, m);
        let mut js = DMatrix::zeros(m, m);
        for j in 0..m {
            for l in 0..m {
                let w = unit::<T>(j).conj() * unit::<T>(l) * metric.hermitian[(free[j / 2], free[l / 2])];
                ms[(j, l)] = w.re;
                js[(j, l)] = w.im;
            }
        }
        Ok(Self {
            metric,
            index,
            free,
            ms,
            js,
        })
    }

    /// Real dimension `2|k| - 4` of the chart.
    pub fn dim(&self) -> usize {
        2 * self.free.len()
    }

    /// Complex form of a real `s`-space vector.
    pub fn to_complex(&self, x: &DVector<T>) -> Vec<C<T>> {
        (0..self.free.len()).map(|a| C::new(x[2 * a], x[2 * a + 1])).collect()
    }

    pub fn from_complex(&self, x: &[C<T>]) -> DVector<T> {
        let mut out = DVector::zeros(2 * x.len());
        for (a, z) in x.iter().enumerate() {
            out[2 * a] = z.re;
            out[2 * a + 1] = z.im;
        }
        out
    }

    /// `E x`: embeds an `s`-space vector with 0 in the fixed slot.
    pub fn embed(&self, x: &DVector<T>) -> Vec<C<T>> {
        let mut out = vec![C::new(T::zero(), T::zero()); self.metric.dim()];
        for (a, &i) in self.free.iter().enumerate() {
            out[i] = C::new(x[2 * a], x[2 * a + 1]);
        }
        out
    }

    /// Homogeneous point `p = E s + e_j`.
    pub fn point(&self, s: &DVector<T>) -> Vec<C<T>> {
        let mut p = self.embed(s);
        p[self.index] = C::new(T::one(), T::zero());
        p
    }

    /// Chart coordinates of a homogeneous point; fails when `Z_j` is
    /// negligible compared with the largest coordinate.
    pub fn coordinates(&self, z: &[C<T>]) -> Result<DVector<T>> {
        let zj = z[self.index];
        let big = z.iter().fold(T::zero(), |a, x| a.max(x.modulus()));
        let ratio = zj.modulus() / big;
        if !(ratio > lit(1e-8)) {
            let suggested = (0..z.len())
                .max_by(|a, b| z[*a].modulus().partial_cmp(&z[*b].modulus()).unwrap())
                .unwrap_or(0);
            return Err(Error::ChartSingular {
                chart: self.index,
                ratio: ratio.as_f64(),
                suggested,
            });
        }
        let s: Vec<C<T>> = self.free.iter().map(|&i| z[i] / zj).collect();
        Ok(self.from_complex(&s))
    }

    fn mp(&self, p: &[C<T>]) -> Vec<C<T>> {
        let d = p.len();
        (0..d)
            .map(|a| {
                (0..d).fold(C::new(T::zero(), T::zero()), |acc, b| acc + p[b] * self.metric.hermitian[(a, b)])
            })
            .collect()
    }

    /// Linear forms `G(s, .)` and `Omega(s, .)` as vectors, and `N`.
    pub fn forms(&self, s: &DVector<T>) -> (DVector<T>, DVector<T>, T) {
        let p = self.point(s);
        let mp = self.mp(&p);
        let n = p.iter().zip(&mp).fold(T::zero(), |a, (x, y)| a + (x.conj() * y).re);
        let m = self.dim();
        let mut bg = DVector::zeros(m);
        let mut bo = DVector::zeros(m);
        for l in 0..m {
            let w = mp[self.free[l / 2]].conj() * unit::<T>(l);
            bg[l] = w.re;
            bo[l] = w.im;
        }
        (bg, bo, n)
    }

    /// `A(s)` assembled from the metric and the two linear forms.
    pub fn a_matrix(&self, s: &DVector<T>) -> DMatrix<T> {
        let (bg, bo, n) = self.forms(s);
        &self.ms / n - (&bg * bg.transpose() + &bo * bo.transpose()) / (n * n)
    }

    pub fn b_vector(&self, s: &DVector<T>) -> DVector<T> {
        let (_, bo, n) = self.forms(s);
        bo / n
    }

    /// `|omega|^2_FS` straight from its definition.
    pub fn f_direct(&self, s: &DVector<T>, w: &DVector<T>) -> T {
        let p = self.point(s);
        let e = self.embed(w);
        let n = self.metric.norm2(&p);
        let a = self.metric.inner(&p, &e);
        self.metric.norm2(&e) / n - a.norm_sqr() / (n * n)
    }

    /// Normalised configuration `p / |p|`.
    pub fn normalized(&self, s: &DVector<T>) -> Vec<C<T>> {
        let p = self.point(s);
        let n = self.metric.norm2(&p).sqrt();
        p.into_iter().map(|x| x / n).collect()
    }

    /// Cluster body positions (all `|k|`, relative to the cluster centre)
    /// for relative coordinates `Z`.
    pub fn bodies(&self, z: &[C<T>]) -> Vec<Vec2<T>> {
        let mut out: Vec<Vec2<T>> = z.iter().map(|x| Vec2::new(x.re, x.im)).collect();
        out.push(self.metric.eliminated(&out));
        out
    }

    /// `V(s)`.
    pub fn potential(&self, s: &DVector<T>) -> Result<T> {
        let x = self.normalized(s);
        let q = self.bodies(&x);
        let idx: Vec<usize> = (0..q.len()).collect();
        subset_potential(&self.metric.masses, &q, &idx)
    }

    /// Gradient of `U_k` with respect to `Z` (complex form of the real
    /// gradient), given per-body gradients `g` of any pair potential.
    pub fn z_gradient(&self, g: &[Vec2<T>]) -> Vec<C<T>> {
        let k = self.metric.masses.len();
        let last = g[k - 1];
        (0..k - 1)
            .map(|a| {
                let v = g[a] - last * (self.metric.masses[a] / self.metric.masses[k - 1]);
                C::new(v.x, v.y)
            })
            .collect()
    }

    /// Derivative of `p/|p|` along the real `s`-direction `delta`.
    fn dx(&self, p: &[C<T>], n: T, bg: &DVector<T>, delta: &DVector<T>) -> Vec<C<T>> {
        let e = self.embed(delta);
        let g = bg.dot(delta);
        let sn = n.sqrt();
        let n32 = n * sn;
        p.iter().zip(&e).map(|(pa, ea)| *ea / sn - *pa * (g / n32)).collect()
    }

    /// Derivatives of `p/|p|` along each real basis direction of `s`.
    pub fn normalized_derivatives(&self, s: &DVector<T>) -> Vec<Vec<C<T>>> {
        let (bg, _, n) = self.forms(s);
        let p = self.point(s);
        let m = self.dim();
        (0..m)
            .map(|l| {
                let mut d = DVector::zeros(m);
                d[l] = T::one();
                self.dx(&p, n, &bg, &d)
            })
            .collect()
    }

    /// `grad_s V` (Euclidean).
    pub fn potential_gradient(&self, s: &DVector<T>) -> Result<DVector<T>> {
        let (bg, _, n) = self.forms(s);
        let p = self.point(s);
        let x: Vec<C<T>> = p.iter().map(|a| *a / n.sqrt()).collect();
        let q = self.bodies(&x);
        let idx: Vec<usize> = (0..q.len()).collect();
        let g = crate::system::pair_gradient(&self.metric.masses, &q, &idx, &idx)?;
        let gz = self.z_gradient(&g);
        let m = self.dim();
        let mut out = DVector::zeros(m);
        for l in 0..m {
            let mut d = DVector::zeros(m);
            d[l] = T::one();
            let dx = self.dx(&p, n, &bg, &d);
            out[l] = gz.iter().zip(&dx).fold(T::zero(), |a, (g, x)| a + (g.conj() * x).re);
        }
        Ok(out)
    }

    /// Euclidean Hessian `D^2 V(s)`.
    pub fn potential_hessian(&self, s: &DVector<T>) -> Result<DMatrix<T>> {
        let (bg, _, n) = self.forms(s);
        let p = self.point(s);
        let sn = n.sqrt();
        let x: Vec<C<T>> = p.iter().map(|a| *a / sn).collect();
        let q = self.bodies(&x);
        let idx: Vec<usize> = (0..q.len()).collect();
        let masses = &self.metric.masses;
        let g = crate::system::pair_gradient(masses, &q, &idx, &idx)?;
        let gz = self.z_gradient(&g);
        let m = self.dim();
        let basis: Vec<DVector<T>> = (0..m)
            .map(|l| {
                let mut d = DVector::zeros(m);
                d[l] = T::one();
                d
            })
            .collect();
        let dxs: Vec<Vec<Vec2<T>>> = basis.iter().map(|d| self.bodies(&self.dx(&p, n, &bg, d))).collect();
        let n32 = n * sn;
        let n52 = n32 * n;
        let mut h = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let second = cluster_hessian_form(masses, &q, &idx, &dxs[a], &dxs[b]);
                let (ea, eb) = (self.embed(&basis[a]), self.embed(&basis[b]));
                let (ga, gb) = (bg[a], bg[b]);
                let mab = self.ms[(a, b)];
                let ddx: Vec<C<T>> = (0..p.len())
                    .map(|i| {
                        -(ea[i] * gb + eb[i] * ga) / n32 - p[i] * (mab / n32)
                            + p[i] * (lit::<T>(3.0) * ga * gb / n52)
                    })
                    .collect();
                let first = gz.iter().zip(&ddx).fold(T::zero(), |acc, (g, d)| acc + (g.conj() * d).re);
                h[(a, b)] = second + first;
                h[(b, a)] = h[(a, b)];
            }
        }
        Ok(h)
    }

    pub fn data(&self, s: &DVector<T>, w: &DVector<T>) -> Result<FubiniData<T>> {
        let (bg, bo, n) = self.forms(s);
        let a = &self.ms / n - (&bg * bg.transpose() + &bo * bo.transpose()) / (n * n);
        let f = if self.dim() == 0 { T::zero() } else { (w.transpose() * &a * w)[(0, 0)] };
        Ok(FubiniData {
            f,
            a,
            b: &bo / n,
            omega_form: bo.dot(w),
            g_form: bg.dot(w),
            v: self.potential(s)?,
            n,
        })
    }

    /// `d A / d s_j` for every `j`.
    pub fn a_derivatives(&self, s: &DVector<T>) -> Vec<DMatrix<T>> {
        let (bg, bo, n) = self.forms(s);
        let m = self.dim();
        let n2 = n * n;
        let n3 = n2 * n;
        let outer = &bg * bg.transpose() + &bo * bo.transpose();
        (0..m)
            .map(|j| {
                let dbg = self.ms.column(j).into_owned();
                // d/ds_j of im <<p, E e_l>> = im <<E e_j, E e_l>>
                let dbo = self.js.row(j).transpose();
                let dn = bg[j] * lit(2.0);
                let d_outer = &dbg * bg.transpose() + &bg * dbg.transpose() + &dbo * bo.transpose() + &bo * dbo.transpose();
                -(&self.ms * (dn / n2)) - d_outer / n2 + &outer * (lit::<T>(2.0) * dn / n3)
            })
            .collect()
    }

    /// Partial gradient of `F(s, w)` in `s` at fixed `w`.
    pub fn f_gradient(&self, s: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        let da = self.a_derivatives(s);
        DVector::from_iterator(da.len(), da.iter().map(|d| (w.transpose() * d * w)[(0, 0)]))
    }

    /// `DA(s)(w) w = sum_j w_j (dA/ds_j) w`.
    pub fn da_term(&self, s: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        let da = self.a_derivatives(s);
        let mut out = DVector::zeros(self.dim());
        for (j, d) in da.iter().enumerate() {
            out += d * w * w[j];
        }
        out
    }

    /// Curvature `K_lj = dB_j/ds_l - dB_l/ds_j` of the connection form `B`.
    pub fn curvature(&self, s: &DVector<T>) -> DMatrix<T> {
        let (bg, bo, n) = self.forms(s);
        let m = self.dim();
        let two = lit::<T>(2.0);
        DMatrix::from_fn(m, m, |l, j| {
            // dB_j/ds_l = js(l, j)/N - 2 bo_j bg_l / N^2
            let dl_bj = self.js[(l, j)] / n - two * bo[j] * bg[l] / (n * n);
            let dj_bl = self.js[(j, l)] / n - two * bo[l] * bg[j] / (n * n);
            dl_bj - dj_bl
        })
    }
}

/// Solves `A x = y` for the symmetric positive-definite `A`.
pub fn solve_spd<T: Real>(a: &DMatrix<T>, y: &DVector<T>) -> Result<DVector<T>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidState("Fubini-Study matrix is not positive definite".into()))?;
    Ok(ch.solve(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chart(masses: Vec<f64>, index: usize) -> Chart<f64> {
        Chart::new(MassMetric::from_masses(masses), index).unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(m, |_, _| rng.gen_range(-scale..scale))
    }

    #[test]
    fn quadratic_form_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = chart(vec![1.0, 2.0, 0.5, 1.5], 2);
        for _ in 0..50 {
            let s = rand_vec(&mut rng, 4, 1.0);
            let w = rand_vec(&mut rng, 4, 1.0);
            let d = c.data(&s, &w).unwrap();
            assert!((d.f - c.f_direct(&s, &w)).abs() < 1e-12);
            assert!((d.b.dot(&w) - d.omega_form / d.n).abs() < 1e-12);
            assert!(d.f >= -1e-15);
        }
    }

    #[test]
    fn zero_velocity_has_zero_norm() {
        let c = chart(vec![1.0, 1.0, 1.0], 1);
        let s = DVector::from_vec(vec![0.3, -0.2]);
        let d = c.data(&s, &DVector::zeros(2)).unwrap();
        assert_eq!(d.f, 0.0);
        let d = c.data(&s, &DVector::from_vec(vec![1e-3, 0.0])).unwrap();
        assert!(d.f > 0.0);
    }

    #[test]
    fn lagrange_point_potential() {
        // Equilateral unit triangle in relative coordinates.
        let c = chart(vec![1.0, 1.0, 1.0], 1);
        let rt = 1.0 / 3f64.sqrt();
        let z: Vec<Vec2<f64>> = (0..3)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                Vec2::new(rt * a.cos(), rt * a.sin())
            })
            .collect();
        let zc: Vec<C<f64>> = z[..2].iter().map(|v| C::new(v.x, v.y)).collect();
        let s = c.coordinates(&zc).unwrap();
        assert!((c.potential(&s).unwrap() - 3.0).abs() < 1e-13);
        assert!(c.potential_gradient(&s).unwrap().norm() < 1e-12);
    }

    fn fd_grad(f: impl Fn(&DVector<f64>) -> f64, s: &DVector<f64>, h: f64) -> DVector<f64> {
        DVector::from_fn(s.len(), |l, _| {
            let mut a = s.clone();
            let mut b = s.clone();
            a[l] += h;
            b[l] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = chart(vec![1.0, 2.0, 3.0, 0.7], 1);
        for _ in 0..10 {
            let s = rand_vec(&mut rng, 4, 0.8);
            let w = rand_vec(&mut rng, 4, 1.0);
            let gv = c.potential_gradient(&s).unwrap();
            let fd = fd_grad(|x| c.potential(x).unwrap(), &s, 1e-6);
            assert!((&gv - &fd).norm() < 1e-7 * (1.0 + gv.norm()), "{} {}", gv, fd);
            let h = c.potential_hessian(&s).unwrap();
            for l in 0..4 {
                let col = fd_grad(|x| c.potential_gradient(x).unwrap()[l], &s, 1e-6);
                for j in 0..4 {
                    assert!((h[(l, j)] - col[j]).abs() < 1e-6 * (1.0 + h.norm()));
                }
            }
            let gf = c.f_gradient(&s, &w);
            let fd = fd_grad(|x| c.f_direct(x, &w), &s, 1e-6);
            assert!((&gf - &fd).norm() < 1e-7 * (1.0 + gf.norm()));
            let k = c.curvature(&s);
            for l in 0..4 {
                let dbl = fd_grad(|x| c.b_vector(x)[l], &s, 1e-6);
                for j in 0..4 {
                    let dbj_l = fd_grad(|x| c.b_vector(x)[j], &s, 1e-6)[l];
                    assert!((k[(l, j)] - (dbj_l - dbl[j])).abs() < 1e-7);
                }
            }
            let da = c.a_derivatives(&s);
            for j in 0..4 {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp[j] += 1e-6;
                sm[j] -= 1e-6;
                let fd = (c.a_matrix(&sp) - c.a_matrix(&sm)) / 2e-6;
                assert!((&da[j] - fd).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn singular_chart_is_reported() {
        let c = chart(vec![1.0, 1.0, 1.0], 1);
        let z = vec![C::new(1.0, 0.0), C::new(0.0, 0.0)];
        match c.coordinates(&z) {
            Err(Error::ChartSingular { chart, suggested, .. }) => {
                assert_eq!((chart, suggested), (1, 0));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn single_precision_chart() {
        let c = Chart::new(MassMetric::from_masses(vec![1.0f32, 1.0, 1.0]), 1).unwrap();
        let s = DVector::from_vec(vec![0.5f32, 0.8]);
        let w = DVector::from_vec(vec![0.1f32, -0.2]);
        let d = c.data(&s, &w).unwrap();
        assert!((d.f - c.f_direct(&s, &w)).abs() < 1e-5);
    }
}
