//! Monte Carlo study runner: networks, data replications, estimators,
//! metrics, diagnostics and reports.

mod config;
mod metrics;
mod normality;
pub mod panel;
mod report;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::depgraph::dependency_graph_from_map;
use crate::error::{ErrorClass, Result};
use crate::estimator::{default_weights, estimate, RegressorSpec, Variant};
use crate::features::FeatureMap;
use crate::rng::{self, derive_seed, tag};
use crate::sem::{mc_tau_oracle, simulate, true_tau};

pub use config::{StudyConfig, PRESETS};
pub use metrics::{
    variance_estimator_check, variance_slope, GraphMetrics, MetricsCell, MetricsTable,
    VarianceCheckRow,
};
pub use normality::{
    lilliefors_statistic, normality_diagnostic, normality_from_samples, uniform_band,
    LillieforsNull, NormalityReport,
};
pub use report::{write_outputs, SvgPlot};

/// Replications of one estimator on one network. Failed fits are counted and
/// left out of the vectors.
#[derive(Debug, Clone, Serialize)]
pub struct VariantRuns {
    pub variant: Variant,
    pub tau_hat: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
    pub covered: usize,
    pub failures: usize,
}

/// All replications on one sampled network.
#[derive(Debug, Clone, Serialize)]
pub struct GraphCell {
    pub n: usize,
    pub graph: usize,
    pub tau: f64,
    pub max_degree: usize,
    pub runs: Vec<VariantRuns>,
}

impl GraphCell {
    pub fn runs(&self, variant: Variant) -> Option<&VariantRuns> {
        self.runs.iter().find(|r| r.variant == variant)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub n: usize,
    pub graph: usize,
    pub tau: f64,
    pub oracle: f64,
    pub se: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub cells: Vec<GraphCell>,
    pub metrics: MetricsTable,
    pub oracle_checks: Vec<OracleCheck>,
}

impl StudyResult {
    pub fn total_failures(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.runs)
            .map(|r| r.failures)
            .sum()
    }

    pub fn cells_at(&self, n: usize) -> impl Iterator<Item = &GraphCell> {
        self.cells.iter().filter(move |c| c.n == n)
    }
}

fn network_map(cfg: &StudyConfig, n: usize, g: usize) -> Result<FeatureMap> {
    let net = cfg.generator.generate(
        n,
        &mut rng::stream(cfg.seed, &[tag::NETWORK, n as u64, g as u64]),
    )?;
    FeatureMap::new(&net, &cfg.features)
}

fn run_cell(cfg: &StudyConfig, n: usize, g: usize) -> Result<GraphCell> {
    let map = network_map(cfg, n, g)?;
    let wseed = derive_seed(cfg.seed, &[tag::WEIGHTS, n as u64, g as u64]);
    let weights = default_weights(&map, cfg.pi, cfg.eta, cfg.mc_reps, wseed)?;
    let tau = true_tau(&cfg.sem, &weights)?;
    let max_degree = dependency_graph_from_map(&map).max_degree();
    let specs: Vec<RegressorSpec> = cfg
        .variants
        .iter()
        .map(|v| v.with_adjustment(&cfg.adjustment))
        .collect();

    // Per replication and variant: (tau_hat, sigma2_hat, covered), or None when the fit failed numerically.
    let reps: Vec<Vec<Option<(f64, f64, bool)>>> = (0..cfg.nrep_data)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(cfg.seed, &[tag::DATA, n as u64, g as u64, r as u64]);
            let ds = simulate(&cfg.sem, &map, &mut rng)?;
            specs
                .iter()
                .map(|spec| match estimate(&ds, spec, &weights, cfg.level) {
                    Ok(rep) => Ok(Some((
                        rep.tau_hat,
                        rep.sigma2_hat,
                        rep.ci.0 <= tau && tau <= rep.ci.1,
                    ))),
                    Err(e) if e.class() == ErrorClass::Numerical => Ok(None),
                    Err(e) => Err(e),
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let runs = cfg
        .variants
        .iter()
        .enumerate()
        .map(|(k, &variant)| {
            let mut vr = VariantRuns {
                variant,
                tau_hat: Vec::with_capacity(cfg.nrep_data),
                sigma2_hat: Vec::with_capacity(cfg.nrep_data),
                covered: 0,
                failures: 0,
            };
            for rep in &reps {
                match rep[k] {
                    Some((t, s, c)) => {
                        vr.tau_hat.push(t);
                        vr.sigma2_hat.push(s);
                        vr.covered += usize::from(c);
                    }
                    None => vr.failures += 1,
                }
            }
            vr
        })
        .collect();
    Ok(GraphCell {
        n,
        graph: g,
        tau,
        max_degree,
        runs,
    })
}

/// Cross-checks the closed-form truth of a few cells against brute force.
fn oracle_checks(cfg: &StudyConfig, cells: &[GraphCell]) -> Result<Vec<OracleCheck>> {
    let k = cfg.oracle_checks.min(cells.len());
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    let mut r = rng::stream(cfg.seed, &[tag::ORACLE]);
    while picked.len() < k {
        let c = r.random_range(0..cells.len());
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    picked
        .par_iter()
        .map(|&c| {
            let cell = &cells[c];
            let map = network_map(cfg, cell.n, cell.graph)?;
            let oseed = derive_seed(cfg.seed, &[tag::ORACLE, cell.n as u64, cell.graph as u64]);
            let o = mc_tau_oracle(&cfg.sem, &map, cfg.pi, cfg.eta, cfg.oracle_reps, oseed)?;
            Ok(OracleCheck {
                n: cell.n,
                graph: cell.graph,
                tau: cell.tau,
                oracle: o.tau,
                se: o.se,
                agrees: (o.tau - cell.tau).abs() <= 3.0 * o.se + 1e-12,
            })
        })
        .collect()
}

/// Runs the grid `sizes x nrep_graph x nrep_data x variants`. Results depend
/// only on the configuration, not on the thread count.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let grid: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| (0..cfg.nrep_graph).map(move |g| (n, g)))
        .collect();
    let cells: Vec<GraphCell> = grid
        .par_iter()
        .map(|&(n, g)| run_cell(cfg, n, g))
        .collect::<Result<_>>()?;
    let metrics = MetricsTable::from_cells(&cfg.sizes, &cfg.variants, &cells);
    let oracle_checks = oracle_checks(cfg, &cells)?;
    Ok(StudyResult {
        config: cfg.clone(),
        cells,
        metrics,
        oracle_checks,
    })
}
