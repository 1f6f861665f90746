use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Designs whose condition number exceeds this are rejected as singular.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub condition: f64,
}

/// Least squares through a QR factorisation.
pub fn ols_fit(m: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let names: Vec<String> = (0..m.ncols()).map(|j| format!("column {j}")).collect();
    ols_fit_named(m, y, &names)
}

pub(crate) fn ols_fit_named(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<OlsFit> {
    let (n, p) = m.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{n} design rows but {} responses",
            y.len()
        )));
    }
    if n < p || p == 0 {
        return Err(Error::Singular {
            condition: f64::INFINITY,
            columns: names.to_vec(),
        });
    }
    if m.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "design or response contains non-finite values".into(),
        ));
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let condition = check_conditioning(&r, names)?;
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let coef = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let residuals = y - m * &coef;
    Ok(OlsFit {
        coef,
        residuals,
        condition,
    })
}

/// Condition number of the triangular factor; on failure names the columns
/// loading on the smallest right singular vector.
fn check_conditioning(r: &DMatrix<f64>, names: &[String]) -> Result<f64> {
    let svd = r.clone().svd(false, true);
    let s = &svd.singular_values;
    let (mut lo, mut hi, mut arg) = (f64::INFINITY, 0.0f64, 0);
    for (k, &v) in s.iter().enumerate() {
        hi = hi.max(v);
        if v < lo {
            lo = v;
            arg = k;
        }
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_finite() && condition <= CONDITION_LIMIT {
        return Ok(condition);
    }
    let columns = match &svd.v_t {
        Some(v_t) => v_t
            .row(arg)
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() >= 0.1)
            .map(|(j, _)| names[j].clone())
            .collect(),
        None => names.to_vec(),
    };
    Err(Error::Singular { condition, columns })
}

/// Robust variance of `sqrt(N) v' alpha_hat`:
/// `v' A^-1 B A^-1 v` with `A = M'M / N` and `B = M' diag(e^2) M / N`.
pub fn sandwich_variance(
    m: &DMatrix<f64>,
    residuals: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let (n, p) = m.shape();
    if residuals.len() != n || v.len() != p {
        return Err(Error::Dimension(format!(
            "design {n}x{p}, {} residuals, weight vector of length {}",
            residuals.len(),
            v.len()
        )));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let r = m.clone().qr().r();
    let names: Vec<String> = (0..p).map(|j| format!("column {j}")).collect();
    check_conditioning(&r, &names)?;
    // u = N (R'R)^-1 v
    let a = r
        .tr_solve_upper_triangular(v)
        .ok_or_else(|| Error::Numerical("singular inner matrix".into()))?;
    let u = r
        .solve_upper_triangular(&a)
        .ok_or_else(|| Error::Numerical("singular inner matrix".into()))?
        * n as f64;
    let mu = m * u;
    let total: f64 = mu
        .iter()
        .zip(residuals.iter())
        .map(|(a, e)| (e * a).powi(2))
        .sum();
    Ok(total / n as f64)
}
