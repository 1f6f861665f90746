use serde::Serialize;

use super::{GraphCell, StudyResult};
use crate::depgraph::ls_line;
use crate::error::{Error, Result};
use crate::estimator::Variant;

/// Metrics of one estimator on one network. The variance uses divisor `n`
/// so that `rmse^2 = bias^2 + variance` holds exactly.
#[derive(Debug, Clone, Serialize)]
pub struct GraphMetrics {
    pub graph: usize,
    pub tau: f64,
    pub bias: f64,
    pub variance: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub replications: usize,
    pub failures: usize,
    pub max_degree: usize,
}

impl GraphMetrics {
    fn new(cell: &GraphCell, variant: Variant) -> Option<GraphMetrics> {
        let runs = cell.runs(variant)?;
        let k = runs.tau_hat.len();
        if k == 0 {
            return None;
        }
        let kf = k as f64;
        let mean = runs.tau_hat.iter().sum::<f64>() / kf;
        let variance = runs.tau_hat.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / kf;
        let mse = runs
            .tau_hat
            .iter()
            .map(|t| (t - cell.tau).powi(2))
            .sum::<f64>()
            / kf;
        Some(GraphMetrics {
            graph: cell.graph,
            tau: cell.tau,
            bias: mean - cell.tau,
            variance,
            rmse: mse.sqrt(),
            coverage: runs.covered as f64 / kf,
            replications: k,
            failures: runs.failures,
            max_degree: cell.max_degree,
        })
    }
}

/// Per-network metrics averaged over networks.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsCell {
    pub variant: Variant,
    pub n: usize,
    pub rmse: f64,
    pub bias: f64,
    pub variance: f64,
    /// Log of the averaged variance.
    pub log_variance: f64,
    pub coverage: f64,
    pub mean_max_degree: f64,
    pub failures: usize,
    pub per_graph: Vec<GraphMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsTable {
    pub sizes: Vec<usize>,
    pub variants: Vec<Variant>,
    pub cells: Vec<MetricsCell>,
}

impl MetricsTable {
    pub fn from_cells(sizes: &[usize], variants: &[Variant], cells: &[GraphCell]) -> MetricsTable {
        let mut out = Vec::new();
        for &variant in variants {
            for &n in sizes {
                let at: Vec<&GraphCell> = cells.iter().filter(|c| c.n == n).collect();
                let per_graph: Vec<GraphMetrics> = at
                    .iter()
                    .filter_map(|c| GraphMetrics::new(c, variant))
                    .collect();
                let failures = at
                    .iter()
                    .filter_map(|c| c.runs(variant))
                    .map(|r| r.failures)
                    .sum();
                let avg = |f: fn(&GraphMetrics) -> f64| {
                    if per_graph.is_empty() {
                        f64::NAN
                    } else {
                        per_graph.iter().map(f).sum::<f64>() / per_graph.len() as f64
                    }
                };
                let variance = avg(|g| g.variance);
                out.push(MetricsCell {
                    variant,
                    n,
                    rmse: avg(|g| g.rmse),
                    bias: avg(|g| g.bias),
                    variance,
                    log_variance: variance.ln(),
                    coverage: avg(|g| g.coverage),
                    mean_max_degree: avg(|g| g.max_degree as f64),
                    failures,
                    per_graph,
                });
            }
        }
        MetricsTable {
            sizes: sizes.to_vec(),
            variants: variants.to_vec(),
            cells: out,
        }
    }

    pub fn get(&self, variant: Variant, n: usize) -> Option<&MetricsCell> {
        self.cells.iter().find(|c| c.variant == variant && c.n == n)
    }

    /// One metric per size for a variant, in size order.
    pub fn series(&self, variant: Variant, metric: impl Fn(&MetricsCell) -> f64) -> Vec<f64> {
        self.sizes
            .iter()
            .filter_map(|&n| self.get(variant, n).map(&metric))
            .collect()
    }
}

/// Least-squares slope of log variance against log `N`.
pub fn variance_slope(m: &MetricsTable, variant: Variant) -> Result<f64> {
    if !m.variants.contains(&variant) {
        return Err(Error::InvalidInput(format!(
            "variant {variant} was not run"
        )));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &n in &m.sizes {
        if let Some(c) = m.get(variant, n) {
            if c.log_variance.is_finite() {
                x.push((n as f64).ln());
                y.push(c.log_variance);
            }
        }
    }
    Ok(ls_line(&x, &y)?.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCheckRow {
    pub n: usize,
    /// Variance of `tau_hat - tau` pooled over every network and replication.
    pub empirical_variance: f64,
    pub mean_sigma2_over_n: f64,
    /// `N * sqrt(mean((sigma2_hat / N - empirical_variance)^2))`.
    pub scaled_rmse: f64,
}

/// Accuracy of the robust variance estimate against the empirical variance
/// of the estimator, per size.
pub fn variance_estimator_check(
    result: &StudyResult,
    variant: Variant,
) -> Result<Vec<VarianceCheckRow>> {
    let mut rows = Vec::new();
    for &n in &result.config.sizes {
        let (mut dev, mut s2) = (Vec::new(), Vec::new());
        for cell in result.cells_at(n) {
            let runs = cell
                .runs(variant)
                .ok_or_else(|| Error::InvalidInput(format!("variant {variant} was not run")))?;
            dev.extend(runs.tau_hat.iter().map(|t| t - cell.tau));
            s2.extend(runs.sigma2_hat.iter().copied());
        }
        if dev.is_empty() {
            continue;
        }
        let k = dev.len() as f64;
        let mean = dev.iter().sum::<f64>() / k;
        let empirical_variance = dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k;
        let nf = n as f64;
        let msq = s2
            .iter()
            .map(|s| (s / nf - empirical_variance).powi(2))
            .sum::<f64>()
            / k;
        rows.push(VarianceCheckRow {
            n,
            empirical_variance,
            mean_sigma2_over_n: s2.iter().sum::<f64>() / k / nf,
            scaled_rmse: nf * msq.sqrt(),
        });
    }
    Ok(rows)
}
