//! Weighted least-squares line fits and log-log power-law fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Weighted RMS of the residuals.
    pub rms: f64,
    pub n: usize,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Zero of the fitted line.
    pub fn root(&self) -> f64 {
        -self.intercept / self.slope
    }
}

/// Weighted least squares for `y = a x + b`.
pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return Err(Error::InsufficientData(format!("{} points for a line fit", n)));
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::InsufficientData("zero total weight".into()));
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (y[i] - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("no spread in abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for i in 0..n {
        let r = y[i] - (slope * x[i] + intercept);
        ss += w[i] * r * r;
    }
    Ok(LineFit {
        slope,
        intercept,
        rms: (ss / sw).sqrt(),
        n,
    })
}

pub fn line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    weighted_line(x, y, &vec![1.0; x.len()])
}

/// Power-law fit `y ~ C x^p` over a window of the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    /// `ln C`.
    pub log_prefactor: f64,
    pub rms: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n: usize,
    /// Decades of `x` spanned by the window.
    pub decades: f64,
}

/// Fits `ln|y|` against `ln x` on the samples whose `x` lies within one
/// decade of the final sample (the decade adjacent to the end of the
/// series, whichever direction `x` runs). Each point is weighted by the
/// log-spacing it covers so that clustered samples do not dominate.
pub fn last_decade_power_fit(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    power_fit_window(x, y, 10.0)
}

pub fn power_fit_window(x: &[f64], y: &[f64], factor: f64) -> Result<PowerFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InsufficientData(format!("{} samples", x.len())));
    }
    let last = *x.last().unwrap();
    let first = x[0];
    let increasing = last > first;
    let (lo, hi) = if increasing {
        (last / factor, last)
    } else {
        (last, last * factor)
    };
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for i in 0..x.len() {
        if x[i] > 0.0 && x[i] >= lo * (1.0 - 1e-12) && x[i] <= hi * (1.0 + 1e-12) && y[i] != 0.0 && y[i].is_finite() {
            lx.push(x[i].ln());
            ly.push(y[i].abs().ln());
        }
    }
    if lx.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable samples in the fit window",
            lx.len()
        )));
    }
    let m = lx.len();
    let mut w = vec![0.0; m];
    for i in 0..m {
        let a = if i > 0 { lx[i - 1] } else { lx[i] };
        let b = if i + 1 < m { lx[i + 1] } else { lx[i] };
        w[i] = 0.5 * (b - a).abs();
    }
    if w.iter().all(|v| *v == 0.0) {
        w.iter_mut().for_each(|v| *v = 1.0);
    }
    let f = weighted_line(&lx, &ly, &w)?;
    let (xmin, xmax) = lx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(PowerFit {
        exponent: f.slope,
        log_prefactor: f.intercept,
        rms: f.rms,
        x_lo: xmin.exp(),
        x_hi: xmax.exp(),
        n: m,
        decades: (xmax - xmin) / std::f64::consts::LN_10,
    })
}
