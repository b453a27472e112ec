use nalgebra::DMatrix;

use super::spectral_norm;
use crate::error::{Error, Result};

/// Stable, centre and unstable spectral projections of a matrix with the
/// constant in its exponential bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSplit {
    pub a: DMatrix<f64>,
    pub pi_s: DMatrix<f64>,
    pub pi_c: DMatrix<f64>,
    pub pi_u: DMatrix<f64>,
    /// `[re, im]`.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Smallest nonzero `|Re lambda|`.
    pub beta: f64,
    pub epsilon: f64,
    pub spectral_radius: f64,
    pub stable_dim: usize,
    pub center_dim: usize,
    pub unstable_dim: usize,
    /// Largest sampled ratio over all three bounds.
    pub c_eps_sampled: f64,
    /// Sampled value inflated by 10%, used in the contraction estimate.
    pub c_eps: f64,
}

/// Matrix sign function by scaled Newton iteration.
pub fn matrix_sign(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut x = m.clone();
    let mut scaled = true;
    for it in 0..100 {
        let inv = x
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NoSpectralGap("sign function"))?;
        let c = if scaled {
            let det = x.determinant().abs();
            if det > 0.0 && det.is_finite() {
                det.powf(-1.0 / n as f64)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let next = (&x * c + inv / c) * 0.5;
        let delta = (&next - &x).norm();
        x = next;
        if delta <= 1e-13 * x.norm() {
            if !scaled {
                return Ok(x);
            }
            scaled = false;
        }
        if it > 60 {
            scaled = false;
        }
    }
    Err(Error::NoConvergence {
        iterations: 100,
        residual: (&x * &x - DMatrix::identity(n, n)).norm(),
    })
}

/// Splits `a` at the real parts `-beta/2` and `beta/2`. `epsilon` defaults
/// to `beta / 4` and must lie in `(0, beta)`.
pub fn spectral_split(a: &DMatrix<f64>, epsilon: Option<f64>) -> Result<LinearSplit> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::Dimension { expected: n.max(1), got: a.ncols() });
    }
    let ev = a.complex_eigenvalues();
    let eigenvalues: Vec<[f64; 2]> = ev.iter().map(|c| [c.re, c.im]).collect();
    let spectral_radius = ev.iter().map(|c| c.re.hypot(c.im)).fold(0.0, f64::max);
    let zero_tol = 1e-9 * spectral_radius.max(1.0);
    let beta = eigenvalues
        .iter()
        .map(|l| l[0].abs())
        .filter(|x| *x > zero_tol)
        .fold(f64::INFINITY, f64::min);
    if !beta.is_finite() {
        return Err(Error::NoSpectralGap("stable/unstable"));
    }
    let epsilon = epsilon.unwrap_or(beta / 4.0);
    if !(epsilon > 0.0 && epsilon < beta) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {} must lie in (0, beta = {})",
            epsilon, beta
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let sigma = beta / 2.0;
    let pi_s = (&eye - matrix_sign(&(a + &eye * sigma))?) * 0.5;
    let pi_u = (&eye + matrix_sign(&(a - &eye * sigma))?) * 0.5;
    let pi_c = &eye - &pi_s - &pi_u;
    let count = |f: &dyn Fn(f64) -> bool| eigenvalues.iter().filter(|l| f(l[0])).count();
    let stable_dim = count(&|re| re < -zero_tol);
    let unstable_dim = count(&|re| re > zero_tol);
    let center_dim = n - stable_dim - unstable_dim;
    let c_eps_sampled = sample_bound_constant(a, &pi_s, &pi_c, &pi_u, beta, epsilon);
    Ok(LinearSplit {
        a: a.clone(),
        pi_s,
        pi_c,
        pi_u,
        eigenvalues,
        beta,
        epsilon,
        spectral_radius,
        stable_dim,
        center_dim,
        unstable_dim,
        c_eps_sampled,
        c_eps: 1.1 * c_eps_sampled,
    })
}

/// Largest of `|e^{At} pi_s| e^{(beta-eps)t}`, `|e^{-At} pi_u| e^{(beta-eps)t}`
/// and `|e^{+-At} pi_c| e^{-eps t}` over a log-spaced grid in `t >= 0`.
/// The exponentials are taken of `A pi` so the other blocks never enter.
fn sample_bound_constant(
    a: &DMatrix<f64>,
    pi_s: &DMatrix<f64>,
    pi_c: &DMatrix<f64>,
    pi_u: &DMatrix<f64>,
    beta: f64,
    eps: f64,
) -> f64 {
    let gap = beta - eps;
    let t_max = (1e12f64).ln() / gap;
    let mut times = vec![0.0];
    let m = 200;
    for i in 0..=m {
        times.push(1e-3 * (t_max / 1e-3).powf(i as f64 / m as f64));
    }
    let a_s = a * pi_s;
    let a_u = a * pi_u;
    let a_c = a * pi_c;
    let has_c = pi_c.norm() > 1e-12;
    times
        .iter()
        .map(|&t| {
            let s = spectral_norm(&((&a_s * t).exp() * pi_s)) * (gap * t).exp();
            let u = spectral_norm(&((&a_u * -t).exp() * pi_u)) * (gap * t).exp();
            let c = if has_c {
                let f = spectral_norm(&((&a_c * t).exp() * pi_c));
                let b = spectral_norm(&((&a_c * -t).exp() * pi_c));
                f.max(b) * (-eps * t).exp()
            } else {
                0.0
            };
            s.max(u).max(c)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn projector_checks(sp: &LinearSplit) {
        let n = sp.a.nrows();
        for p in [&sp.pi_s, &sp.pi_c, &sp.pi_u] {
            assert!((p * p - p).norm() < 1e-12);
            assert!((p * &sp.a - &sp.a * p).norm() < 1e-12);
        }
        assert!((&sp.pi_s + &sp.pi_c + &sp.pi_u - DMatrix::<f64>::identity(n, n)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_example() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 0.0]));
        let sp = spectral_split(&a, None).unwrap();
        projector_checks(&sp);
        assert_relative_eq!(sp.beta, 1.0, epsilon = 1e-12);
        assert_relative_eq!(sp.pi_s[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sp.pi_u[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sp.pi_c[(2, 2)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sp.c_eps_sampled, 1.0, epsilon = 1e-9);
        assert_eq!((sp.stable_dim, sp.center_dim, sp.unstable_dim), (1, 1, 1));
    }

    #[test]
    fn jordan_block_needs_larger_constant() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        let sp = spectral_split(&a, None).unwrap();
        projector_checks(&sp);
        assert!(sp.c_eps_sampled > 1.0);
        assert_relative_eq!(sp.beta, 1.0, epsilon = 1e-12);
        // e^{At} pi_s = e^{-t} [[1, t], [0, 1]] on the stable block.
        let t: f64 = 2.0;
        let block = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
        let ratio = spectral_norm(&block) * (-0.25 * t).exp();
        assert!(sp.c_eps_sampled >= ratio * 0.999);
    }

    #[test]
    fn non_normal_projections() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 5.0, 0.0, 0.5]);
        let sp = spectral_split(&a, None).unwrap();
        projector_checks(&sp);
        assert_relative_eq!(sp.beta, 0.5, epsilon = 1e-12);
        let v_s = DVector::from_vec(vec![1.0, 0.0]);
        assert!((&sp.pi_s * &v_s - &v_s).norm() < 1e-12);
    }

    #[test]
    fn no_gap() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(spectral_split(&a, None), Err(Error::NoSpectralGap(_))));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        assert!(spectral_split(&b, Some(1.5)).is_err());
    }
}
