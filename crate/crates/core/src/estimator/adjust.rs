use serde::Serialize;

use super::{estimate, weights, EstimateReport, RegressorSpec, Weights};
use crate::depgraph::dependency_graph_from_map;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::graph::{Dag, NodeSet, Role};
use crate::sem::Dataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdjustChoice {
    /// Smallest valid set among the observed candidates.
    Auto,
    Explicit(NodeSet),
}

#[derive(Debug, Clone)]
pub struct AdjustOptions {
    pub adjust: AdjustChoice,
    /// Graph nodes to treat as unobserved even if the data has them.
    pub unobserved: NodeSet,
    pub level: f64,
    pub mc_reps: usize,
    pub seed: u64,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        AdjustOptions {
            adjust: AdjustChoice::Auto,
            unobserved: NodeSet::new(),
            level: 0.95,
            mc_reps: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjustmentSelection {
    pub exposure: NodeSet,
    pub outcome: String,
    pub candidates: NodeSet,
    pub unobserved: NodeSet,
    pub valid_sets: Vec<NodeSet>,
    pub chosen: NodeSet,
    pub automatic: bool,
}

/// Data columns measuring graph node `node`: the column named `node`, or
/// every column named `node_<suffix>` for a multivariate node.
pub fn node_columns(ds: &Dataset, node: &str) -> Vec<String> {
    let prefix = format!("{node}_");
    ds.covariate_names
        .iter()
        .filter(|c| *c == node || c.starts_with(&prefix))
        .cloned()
        .collect()
}

fn single(g: &Dag, role: Role) -> Result<Option<String>> {
    let nodes = g.nodes_with_role(role);
    match nodes.len() {
        0 => Ok(None),
        1 => Ok(nodes.iter().next().map(str::to_string)),
        _ => Err(Error::InvalidInput(format!(
            "graph has several {role} nodes: {nodes}"
        ))),
    }
}

/// Exposure `{X, W, O}` and outcome located through node roles.
pub(crate) fn exposure_and_outcome(g: &Dag, n_features: usize) -> Result<(NodeSet, String)> {
    let w = single(g, Role::Treatment)?
        .ok_or_else(|| Error::InvalidInput("graph has no treatment node".into()))?;
    let y = single(g, Role::Outcome)?
        .ok_or_else(|| Error::InvalidInput("graph has no outcome node".into()))?;
    let mut exposure = NodeSet::new();
    exposure.insert(w);
    for role in [Role::FeatureBlock, Role::InteractionBlock] {
        match single(g, role)? {
            Some(v) => {
                exposure.insert(v);
            }
            None if n_features > 0 => {
                return Err(Error::InvalidInput(format!(
                    "data has features but the graph has no {role} node"
                )));
            }
            None => {}
        }
    }
    Ok((exposure, y))
}

/// Picks the adjustment set: the smallest valid set among observed
/// candidates, or the caller's set after checking it.
pub fn select_adjustment(
    ds: &Dataset,
    g: &Dag,
    opts: &AdjustOptions,
) -> Result<AdjustmentSelection> {
    let (exposure, outcome) = exposure_and_outcome(g, ds.n_features())?;
    let mut candidates = NodeSet::new();
    let mut unobserved = NodeSet::new();
    for node in g.nodes() {
        if exposure.contains(&node.id) || node.id == outcome {
            continue;
        }
        if !node_columns(ds, &node.id).is_empty() && !opts.unobserved.contains(&node.id) {
            candidates.insert(node.id.clone());
        } else {
            unobserved.insert(node.id.clone());
        }
    }
    let (chosen, valid_sets, automatic) = match &opts.adjust {
        AdjustChoice::Auto => {
            let valid = g.enumerate_valid_adjustment_sets(&exposure, &outcome, &candidates)?;
            let first = valid.first().cloned().ok_or_else(|| {
                Error::Identifiability(format!(
                    "no valid adjustment set for {exposure} -> {outcome} among observed covariates {candidates} (unobserved: {unobserved})"
                ))
            })?;
            (first, valid, true)
        }
        AdjustChoice::Explicit(z) => {
            for v in z.iter() {
                if !g.contains(v) {
                    return Err(Error::InvalidInput(format!(
                        "adjustment node `{v}` is not in the graph"
                    )));
                }
                if !candidates.contains(v) {
                    return Err(Error::InvalidInput(format!(
                        "adjustment node `{v}` is not an observed covariate"
                    )));
                }
            }
            if !g.is_valid_adjustment(&exposure, &outcome, z)? {
                return Err(Error::Identifiability(format!(
                    "{z} is not a valid adjustment set for {exposure} -> {outcome}"
                )));
            }
            (z.clone(), vec![z.clone()], false)
        }
    };
    Ok(AdjustmentSelection {
        exposure,
        outcome,
        candidates,
        unobserved,
        valid_sets,
        chosen,
        automatic,
    })
}

impl AdjustmentSelection {
    /// Data columns of the chosen set, in node order.
    pub fn columns(&self, ds: &Dataset) -> Vec<String> {
        self.chosen
            .iter()
            .flat_map(|v| node_columns(ds, v))
            .collect()
    }
}

/// Selects an adjustment set in the generic graph and runs the fully
/// adjusted estimator. Weights come from `map` when a network is supplied,
/// and otherwise assume every unit has affectors for every feature.
pub fn adjust_and_estimate(
    ds: &Dataset,
    g: &Dag,
    map: Option<&FeatureMap>,
    pi: f64,
    eta: f64,
    opts: &AdjustOptions,
) -> Result<EstimateReport> {
    let selection = select_adjustment(ds, g, opts)?;
    let p = ds.n_features();
    let w: Weights = match map {
        Some(map) => {
            if map.n_units() != ds.n_units() || map.n_features() != p {
                return Err(Error::Dimension(format!(
                    "network/features ({} units, {} features) do not match the data ({} units, {p} features)",
                    map.n_units(),
                    map.n_features(),
                    ds.n_units()
                )));
            }
            weights::default_weights(map, pi, eta, opts.mc_reps, opts.seed)?
        }
        None => Weights::assumed_exposure(p, pi, eta)?,
    };
    let mut report = estimate(
        ds,
        &RegressorSpec::FullyAdjusted(selection.columns(ds)),
        &w,
        opts.level,
    )?;
    if let Some(map) = map {
        report.diagnostics.max_degree = Some(dependency_graph_from_map(map).max_degree());
        report.diagnostics.units_without_affectors = Some(
            (0..map.n_features())
                .map(|k| map.empty_units(k).into_iter().map(|i| i + 1).collect())
                .collect(),
        );
    }
    report.selection = Some(selection);
    Ok(report)
}
