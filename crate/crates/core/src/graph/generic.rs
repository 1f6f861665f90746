//! Generic graphs obtained by stacking per-unit subgraphs of an explicit DAG,
//! and latent projections used to check them.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Dag, GraphError, Node, NodeSet, Role};

/// Splits an explicit label `W_3` into `("3", "W")` at the last `sep`.
/// Labels without the separator belong to unit `""`.
pub fn unit_suffix_labeling(sep: char) -> impl Fn(&str) -> (String, String) {
    move |id: &str| match id.rsplit_once(sep) {
        Some((label, unit)) => (unit.to_string(), label.to_string()),
        None => (String::new(), id.to_string()),
    }
}

impl Dag {
    /// Stacks the per-unit induced subgraphs of an explicit DAG.
    ///
    /// `labeling` maps each explicit node to `(unit, generic label)`. The
    /// result has an edge `A -> B` iff some unit has a within-unit edge
    /// `A_i -> B_i`; between-unit edges are ignored. A node's role is taken
    /// from the first explicit node carrying its label.
    pub fn stack_generic<F>(&self, labeling: F) -> Result<Dag, GraphError>
    where
        F: Fn(&str) -> (String, String),
    {
        let labels: Vec<(String, String)> = self.nodes.iter().map(|n| labeling(&n.id)).collect();
        let mut roles: BTreeMap<&str, Role> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (node, (_, label)) in self.nodes.iter().zip(&labels) {
            if !roles.contains_key(label.as_str()) {
                order.push(label);
                roles.insert(label, node.role);
            }
        }
        let mut edges: BTreeSet<(&str, &str)> = BTreeSet::new();
        for (a, cs) in self.children.iter().enumerate() {
            for &b in cs {
                if labels[a].0 == labels[b].0 {
                    edges.insert((&labels[a].1, &labels[b].1));
                }
            }
        }
        let nodes = order.iter().map(|l| Node {
            id: l.to_string(),
            role: roles[l],
        });
        Dag::new(nodes, edges)
    }

    /// Latent projection over `latents`.
    pub fn latent_projection(&self, latents: &NodeSet) -> Result<ProjectedGraph, GraphError> {
        let latent = self.mask_of(latents)?;
        let n = self.len();

        // Observed nodes reachable from v along directed paths whose interior
        // is latent.
        let reach = |v: usize| -> Vec<usize> {
            let mut out = Vec::new();
            let mut seen = vec![false; n];
            let mut stack: Vec<usize> = self.children_idx(v).to_vec();
            while let Some(w) = stack.pop() {
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                if latent[w] {
                    stack.extend_from_slice(self.children_idx(w));
                } else {
                    out.push(w);
                }
            }
            out.sort_unstable();
            out
        };

        let mut directed = BTreeSet::new();
        let mut bidirected = BTreeSet::new();
        for v in 0..n {
            let hits = reach(v);
            if latent[v] {
                for (k, &x) in hits.iter().enumerate() {
                    for &y in &hits[k + 1..] {
                        let (p, q) = (self.id(x).to_string(), self.id(y).to_string());
                        bidirected.insert(if p <= q { (p, q) } else { (q, p) });
                    }
                }
            } else {
                for &w in &hits {
                    directed.insert((self.id(v).to_string(), self.id(w).to_string()));
                }
            }
        }
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(v, _)| !latent[*v])
            .map(|(_, node)| node.clone())
            .collect();
        Ok(ProjectedGraph {
            nodes,
            directed,
            bidirected,
        })
    }
}

/// Mixed graph produced by [`Dag::latent_projection`]. Bidirected edges are
/// stored as sorted label pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProjectedGraph {
    pub nodes: Vec<Node>,
    pub directed: BTreeSet<(String, String)>,
    pub bidirected: BTreeSet<(String, String)>,
}

impl ProjectedGraph {
    /// The directed part as a [`Dag`].
    pub fn directed_part(&self) -> Result<Dag, GraphError> {
        Dag::new(self.nodes.iter().cloned(), self.directed.iter().cloned())
    }

    /// Relabels nodes through `f`; used to compare projections of different units.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> ProjectedGraph {
        let pair = |(a, b): &(String, String)| (f(a), f(b));
        ProjectedGraph {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    id: f(&n.id),
                    role: n.role,
                })
                .collect(),
            directed: self.directed.iter().map(pair).collect(),
            bidirected: self
                .bidirected
                .iter()
                .map(pair)
                .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
                .collect(),
        }
    }
}
