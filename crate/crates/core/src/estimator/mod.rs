//! Regression-adjustment estimation of global effects: weights, design
//! matrices, least squares, robust variance and confidence intervals.

mod adjust;
mod design;
mod ols;
mod weights;

use nalgebra::DVector;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sem::Dataset;

pub use adjust::{
    adjust_and_estimate, node_columns, select_adjustment, AdjustChoice, AdjustOptions,
    AdjustmentSelection,
};
pub use design::{build_design, Design, RegressorSpec, Variant};
pub use ols::{ols_fit, sandwich_variance, OlsFit, CONDITION_LIMIT};
pub use weights::{
    closed_form_weights, closed_form_weights_over, default_weights, mc_weights, Weights,
    WeightsProvenance,
};

/// `omega0 . alpha0 + omega1 . (alpha0 + alpha1)`.
pub fn estimate_tau(alpha0: &[f64], alpha1: &[f64], w: &Weights) -> Result<f64> {
    if alpha0.len() != w.omega0.len() || alpha1.len() != w.omega1.len() {
        return Err(Error::Dimension(format!(
            "coefficients of length ({}, {}) but weights of length {}",
            alpha0.len(),
            alpha1.len(),
            w.omega0.len()
        )));
    }
    Ok(alpha0
        .iter()
        .zip(alpha1)
        .zip(w.omega0.iter().zip(&w.omega1))
        .map(|((a0, a1), (w0, w1))| w0 * a0 + w1 * (a0 + a1))
        .sum())
}

/// Normal interval `tau_hat +- z sqrt(sigma2 / n)`.
pub fn confidence_interval(
    tau_hat: f64,
    sigma2_hat: f64,
    n: usize,
    level: f64,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if !(sigma2_hat >= 0.0) || n == 0 {
        return Err(Error::InvalidInput(format!(
            "need sigma2 >= 0 and n > 0, got {sigma2_hat} and {n}"
        )));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = z * (sigma2_hat / n as f64).sqrt();
    Ok((tau_hat - half, tau_hat + half))
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub condition_number: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
    /// Per feature, the 1-based units with an empty affector set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units_without_affectors: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub variant: Variant,
    pub columns: Vec<String>,
    pub adjustment: Vec<String>,
    pub alpha_full_hat: Vec<f64>,
    /// Intercept and feature coefficients; zero for features not in the design.
    pub alpha0_hat: Vec<f64>,
    /// Treatment and interaction coefficients; zero for interactions not in the design.
    pub alpha1_hat: Vec<f64>,
    pub tau_hat: f64,
    pub sigma2_hat: f64,
    pub std_error: f64,
    pub level: f64,
    pub ci: (f64, f64),
    pub n_units: usize,
    pub weights: Weights,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<AdjustmentSelection>,
}

/// Contrast vector on the design columns: `omega0 + omega1` on the `alpha0`
/// slots, `omega1` on the `alpha1` slots, zero on adjustment columns.
pub fn contrast(design: &Design, w: &Weights) -> Result<DVector<f64>> {
    if w.n_features() != design.n_features {
        return Err(Error::Dimension(format!(
            "weights for {} feature(s), data has {}",
            w.n_features(),
            design.n_features
        )));
    }
    let mut v = DVector::zeros(design.columns.len());
    for (k, col) in design.alpha0_columns().into_iter().enumerate() {
        if let Some(c) = col {
            v[c] += w.omega0[k] + w.omega1[k];
        }
    }
    for (k, col) in design.alpha1_columns().into_iter().enumerate() {
        if let Some(c) = col {
            v[c] += w.omega1[k];
        }
    }
    Ok(v)
}

/// Fits the design and converts the coefficients into an effect estimate.
pub fn estimate_design(design: &Design, w: &Weights, level: f64) -> Result<EstimateReport> {
    let v = contrast(design, w)?;
    let fit = ols::ols_fit_named(&design.matrix, &design.response, &design.columns)?;
    let pick = |cols: Vec<Option<usize>>| -> Vec<f64> {
        cols.into_iter()
            .map(|c| c.map_or(0.0, |c| fit.coef[c]))
            .collect()
    };
    let alpha0_hat = pick(design.alpha0_columns());
    let alpha1_hat = pick(design.alpha1_columns());
    let tau_hat = v.dot(&fit.coef);
    let sigma2_hat = sandwich_variance(&design.matrix, &fit.residuals, &v)?;
    let n = design.n_rows();
    let ci = confidence_interval(tau_hat, sigma2_hat, n, level)?;
    Ok(EstimateReport {
        variant: design.variant,
        columns: design.columns.clone(),
        adjustment: design.adjustment.clone(),
        alpha_full_hat: fit.coef.iter().copied().collect(),
        alpha0_hat,
        alpha1_hat,
        tau_hat,
        sigma2_hat,
        std_error: (sigma2_hat / n as f64).sqrt(),
        level,
        ci,
        n_units: n,
        weights: w.clone(),
        diagnostics: Diagnostics {
            condition_number: fit.condition,
            max_degree: None,
            units_without_affectors: None,
        },
        selection: None,
    })
}

pub fn estimate(
    ds: &Dataset,
    spec: &RegressorSpec,
    w: &Weights,
    level: f64,
) -> Result<EstimateReport> {
    estimate_design(&build_design(ds, spec)?, w, level)
}

#[cfg(test)]
mod tests;
