//! Log-linear least squares for exponential scaling laws.

use crate::error::{HarnessError, Result};
use serde::{Deserialize, Serialize};

/// Slopes with magnitude below this are reported as non-exponential.
pub const FLAT_SLOPE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub predicted: Option<f64>,
    /// |slope / predicted - 1|.
    pub deviation: Option<f64>,
    pub exponential: bool,
    /// Indices of points dropped because the rate was not positive.
    pub dropped: Vec<usize>,
    pub points: usize,
}

/// Least squares of `ys` on `xs` after dropping non-finite entries.
///
/// `ys` are already on the log scale. Use [`fit_rates`] for raw rates.
pub fn fit_exponential(xs: &[f64], ys: &[f64], predicted: Option<f64>) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(HarnessError::Usage("fit needs equally long x and y".into()));
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)).collect();
    let dropped = xs.iter().zip(ys).enumerate().filter(|(_, (x, y))| !(x.is_finite() && y.is_finite())).map(|(i, _)| i).collect();
    linear_fit(&pts, predicted, dropped)
}

/// Fits log(rate) against x. Non-positive rates are dropped with a warning on stderr.
pub fn fit_rates(xs: &[f64], rates: &[f64], predicted: Option<f64>) -> Result<FitResult> {
    let mut dropped = Vec::new();
    let mut pts = Vec::new();
    for (i, (&x, &r)) in xs.iter().zip(rates).enumerate() {
        if r > 0.0 && r.is_finite() {
            pts.push((x, r.ln()));
        } else {
            eprintln!("warning: dropping point {i} (x = {x}) with non-positive rate {r}");
            dropped.push(i);
        }
    }
    linear_fit(&pts, predicted, dropped)
}

fn linear_fit(pts: &[(f64, f64)], predicted: Option<f64>, dropped: Vec<usize>) -> Result<FitResult> {
    if pts.len() < 3 {
        return Err(HarnessError::Usage(format!("fit needs at least 3 usable points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::Usage("fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    let deviation = predicted.filter(|p| *p != 0.0).map(|p| (slope / p - 1.0).abs());
    Ok(FitResult {
        slope,
        intercept,
        r2,
        predicted,
        deviation,
        exponential: slope.abs() > FLAT_SLOPE,
        dropped,
        points: pts.len(),
    })
}
