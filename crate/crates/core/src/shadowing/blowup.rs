use nalgebra::{DMatrix, DVector};

use super::ShadowProblem;
use crate::blowup::{res_field, BlowupState, Chart, Forcing, ForcingValue, Variant};
use crate::centconfig::{classify, CentralConfig, EquilibriumData};
use crate::error::{Error, Result};
use crate::integrator::{integrate, DenseStep, Options, Tolerances};
use crate::system::MassMetric;

/// Linearisation of the unforced blow-up field at `(0, v0, s0, 0)` in the
/// coordinates `(size, v, s, w)`.
pub fn blowup_linearization(chart: &Chart<f64>, eq: &EquilibriumData) -> Result<DMatrix<f64>> {
    let m = chart.dim();
    let n = 2 + 2 * m;
    let v0 = eq.v0;
    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = match eq.mode {
        Variant::Parabolic => -v0 / 2.0,
        Variant::Collision => v0,
    };
    a[(1, 1)] = v0;
    if m > 0 {
        let s0 = DVector::from_column_slice(&eq.s0);
        let am = chart.a_matrix(&s0);
        let d2 = chart.potential_hessian(&s0)?;
        let h = am
            .cholesky()
            .ok_or_else(|| Error::InvalidState("Fubini-Study matrix is not positive definite".into()))?
            .solve(&d2);
        for i in 0..m {
            a[(2 + i, 2 + m + i)] = 1.0;
            a[(2 + m + i, 2 + m + i)] = -v0 / 2.0;
            for j in 0..m {
                a[(2 + m + i, 2 + j)] = h[(i, j)];
            }
        }
    }
    Ok(a)
}

/// Blow-up field around a central configuration, shifted so the
/// equilibrium sits at the origin, with the size-weighted energy forcing of
/// a recorded trajectory as the perturbation.
#[derive(Debug, Clone)]
pub struct BlowupShadowSetup {
    pub chart: Chart<f64>,
    pub equilibrium: EquilibriumData,
    pub forcing: Option<Forcing>,
    pub jacobian: DMatrix<f64>,
}

impl BlowupShadowSetup {
    pub fn new(cc: &CentralConfig, variant: Variant, forcing: Option<Forcing>) -> Result<Self> {
        if let Some(f) = &forcing {
            if f.variant != variant {
                return Err(Error::VariantMismatch {
                    state: variant.as_str(),
                    forcing: f.variant.as_str(),
                });
            }
        }
        let equilibrium = classify(cc, variant)?;
        let chart = Chart::new(MassMetric::from_masses(cc.masses.clone()), equilibrium.chart)?;
        let jacobian = blowup_linearization(&chart, &equilibrium)?;
        Ok(Self {
            chart,
            equilibrium,
            forcing,
            jacobian,
        })
    }

    pub fn dim(&self) -> usize {
        2 + 2 * self.chart.dim()
    }

    pub fn state(&self, x: &DVector<f64>) -> BlowupState<f64> {
        let m = self.chart.dim();
        let s0 = DVector::from_column_slice(&self.equilibrium.s0);
        BlowupState {
            variant: self.equilibrium.mode,
            tau: 0.0,
            t: 0.0,
            size: x[0],
            v: self.equilibrium.v0 + x[1],
            s: s0 + x.rows(2, m),
            w: x.rows(2 + m, m).into_owned(),
            chart: self.equilibrium.chart,
        }
    }

    /// Unforced field in shifted coordinates; `NaN` where the chart fails.
    pub fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.chart.dim();
        match res_field(&self.chart, &self.state(x), &ForcingValue::zero(m)) {
            Ok(r) => {
                let mut out = DVector::zeros(self.dim());
                out[0] = r.size;
                out[1] = r.v;
                out.rows_mut(2, m).copy_from(&r.s);
                out.rows_mut(2 + m, m).copy_from(&r.w);
                out
            }
            Err(_) => DVector::from_element(self.dim(), f64::NAN),
        }
    }

    /// `(0, size^2 P(tau), 0, 0)`.
    pub fn perturbation(&self, x: &DVector<f64>, tau: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        if let Some(f) = &self.forcing {
            out[1] = x[0] * x[0] * f.eval(tau).p;
        }
        out
    }

    /// Integrates the forced field from `x0` over `[0, horizon]` and
    /// returns the shadowing problem with that solution as reference.
    pub fn problem(&self, x0: &DVector<f64>, horizon: f64, tol: Tolerances<f64>) -> Result<ShadowProblem<'_>> {
        let d = self.dim();
        if x0.len() != d {
            return Err(Error::Dimension { expected: d, got: x0.len() });
        }
        let mut rhs = |tau: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let x = DVector::from_column_slice(y);
            let v = self.field(&x) + self.perturbation(&x, tau);
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidState("blow-up field is not finite".into()));
            }
            dy.copy_from_slice(v.as_slice());
            Ok(())
        };
        let mut steps: Vec<DenseStep<f64>> = Vec::new();
        let opts = Options {
            tol,
            max_steps: 1_000_000,
            ..Options::default()
        };
        let sol = integrate(&mut rhs, 0.0, x0.as_slice(), horizon, &opts, &[], |s| {
            steps.push(s.clone());
            true
        })?;
        let reached = *sol.t.last().unwrap();
        if reached < horizon * (1.0 - 1e-12) {
            return Err(Error::InvalidState(format!(
                "reference stopped at tau = {} before {}",
                reached, horizon
            )));
        }
        let start = x0.clone();
        let reference = move |tau: f64| -> DVector<f64> {
            if steps.is_empty() || tau <= 0.0 {
                return start.clone();
            }
            let i = steps.partition_point(|s| s.t0 <= tau).max(1) - 1;
            let s = &steps[i];
            DVector::from_vec(s.eval(tau.min(s.t1())))
        };
        Ok(ShadowProblem {
            dim: d,
            field: Box::new(move |x| self.field(x)),
            jacobian: self.jacobian.clone(),
            perturbation: Box::new(move |x, tau| self.perturbation(x, tau)),
            membership: Box::new(|x| x[0].abs()),
            reference: Box::new(reference),
            horizon,
        })
    }

    /// Default weight `min(beta / 2, |v0| / 4)`.
    pub fn default_eta(&self) -> f64 {
        (self.equilibrium.beta / 2.0).min(self.equilibrium.v0.abs() / 4.0)
    }
}
