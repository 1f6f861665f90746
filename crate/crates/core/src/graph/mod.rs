//! Directed acyclic graphs over named, role-labelled nodes and the graphical
//! machinery used for identification: d-separation, causal and forbidden
//! nodes, the adjustment criterion, generic-graph stacking and latent
//! projection.
//!
//! Nodes are identified by their string label. Roles are metadata used by the
//! estimation pipeline to locate the exposure block `{X, W, O}`, the outcome
//! and the candidate covariates; they never change graphical answers.

mod adjustment;
mod generic;
mod text;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generic::{unit_suffix_labeling, ProjectedGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` declared twice")]
    DuplicateNode(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("graph contains a directed cycle through `{0}`")]
    Cycle(String),
    #[error("node sets must be pairwise disjoint; `{0}` appears in more than one")]
    NotDisjoint(String),
    #[error("too many candidate nodes for exhaustive enumeration ({0} > {max})", max = adjustment::MAX_ENUMERATION_CANDIDATES)]
    TooManyCandidates(usize),
}

/// Role of a generic variable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Covariate,
    Treatment,
    /// The multivariate interference-feature node `X`.
    FeatureBlock,
    /// The multivariate treatment-feature interaction node `O`.
    InteractionBlock,
    Outcome,
    #[default]
    Other,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Covariate => "covariate",
            Role::Treatment => "treatment",
            Role::FeatureBlock => "feature",
            Role::InteractionBlock => "interaction",
            Role::Outcome => "outcome",
            Role::Other => "other",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "covariate" => Role::Covariate,
            "treatment" => Role::Treatment,
            "feature" | "feature-block" => Role::FeatureBlock,
            "interaction" | "interaction-block" => Role::InteractionBlock,
            "outcome" => Role::Outcome,
            "other" => Role::Other,
            _ => return Err(format!("unknown role `{s}`")),
        })
    }
}

/// A set of node labels, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<String>);

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: impl Into<String>) -> bool {
        self.0.insert(node.into())
    }

    pub fn contains(&self, node: &str) -> bool {
        self.0.contains(node)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.0.iter().cloned().collect()
    }
}

impl<S: Into<String>> FromIterator<S> for NodeSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        NodeSet(iter.into_iter().map(Into::into).collect())
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = &'a String;
    type IntoIter = std::collections::btree_set::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            f.write_str(v)?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub role: Role,
}

/// Directed acyclic graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dag {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl PartialEq for Dag {
    fn eq(&self, other: &Self) -> bool {
        let mine: BTreeSet<_> = self.nodes.iter().map(|n| (&n.id, n.role)).collect();
        let theirs: BTreeSet<_> = other.nodes.iter().map(|n| (&n.id, n.role)).collect();
        mine == theirs && self.edge_set() == other.edge_set()
    }
}

impl Dag {
    /// Builds a graph from node declarations and edges given by label.
    pub fn new<I, E, A, B>(nodes: I, edges: E) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Node>,
        E: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut dag = Dag {
            nodes: Vec::new(),
            index: HashMap::new(),
            parents: Vec::new(),
            children: Vec::new(),
        };
        for node in nodes {
            if dag.index.contains_key(&node.id) {
                return Err(GraphError::DuplicateNode(node.id));
            }
            dag.push_node(node);
        }
        for (a, b) in edges {
            let (a, b) = (dag.require(a.as_ref())?, dag.require(b.as_ref())?);
            dag.add_edge(a, b)?;
        }
        dag.check_acyclic()?;
        Ok(dag)
    }

    /// Builds a graph from edges only; every node gets [`Role::Other`].
    pub fn from_edges<A: AsRef<str>, B: AsRef<str>>(
        edges: impl IntoIterator<Item = (A, B)>,
    ) -> Result<Self, GraphError> {
        let edges: Vec<(String, String)> = edges
            .into_iter()
            .map(|(a, b)| (a.as_ref().to_string(), b.as_ref().to_string()))
            .collect();
        let mut seen = BTreeSet::new();
        let mut nodes = Vec::new();
        for (a, b) in &edges {
            for v in [a, b] {
                if seen.insert(v.clone()) {
                    nodes.push(Node {
                        id: v.clone(),
                        role: Role::Other,
                    });
                }
            }
        }
        Dag::new(nodes, edges)
    }

    fn push_node(&mut self, node: Node) -> usize {
        let k = self.nodes.len();
        self.index.insert(node.id.clone(), k);
        self.nodes.push(node);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        k
    }

    fn add_edge(&mut self, a: usize, b: usize) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(self.nodes[a].id.clone()));
        }
        if self.children[a].contains(&b) {
            return Err(GraphError::DuplicateEdge(
                self.nodes[a].id.clone(),
                self.nodes[b].id.clone(),
            ));
        }
        self.children[a].push(b);
        self.parents[b].push(a);
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        match self.topological_order_idx() {
            Some(_) => Ok(()),
            None => {
                // Any node left with positive in-degree after Kahn's algorithm lies on
                // or downstream of a cycle; report the first one for the message.
                let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
                let mut queue: VecDeque<usize> =
                    (0..self.len()).filter(|&v| indeg[v] == 0).collect();
                while let Some(v) = queue.pop_front() {
                    for &c in &self.children[v] {
                        indeg[c] -= 1;
                        if indeg[c] == 0 {
                            queue.push_back(c);
                        }
                    }
                }
                let v = (0..self.len()).find(|&v| indeg[v] > 0).unwrap_or(0);
                Err(GraphError::Cycle(self.nodes[v].id.clone()))
            }
        }
    }

    fn topological_order_idx(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == self.len()).then_some(order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn role(&self, id: &str) -> Result<Role, GraphError> {
        Ok(self.nodes[self.require(id)?].role)
    }

    /// Nodes carrying `role`, as a set.
    pub fn nodes_with_role(&self, role: Role) -> NodeSet {
        self.nodes
            .iter()
            .filter(|n| n.role == role)
            .map(|n| n.id.clone())
            .collect()
    }

    /// All edges as `(from, to)` label pairs, sorted.
    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| {
                cs.iter()
                    .map(move |&b| (self.nodes[a].id.clone(), self.nodes[b].id.clone()))
            })
            .collect()
    }

    pub fn topological_order(&self) -> Vec<&str> {
        self.topological_order_idx()
            .expect("Dag invariant: acyclic")
            .into_iter()
            .map(|v| self.nodes[v].id.as_str())
            .collect()
    }

    pub(crate) fn require(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub(crate) fn mask_of(&self, set: &NodeSet) -> Result<Vec<bool>, GraphError> {
        let mut mask = vec![false; self.len()];
        for id in set.iter() {
            mask[self.require(id)?] = true;
        }
        Ok(mask)
    }

    pub(crate) fn set_of(&self, mask: &[bool]) -> NodeSet {
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(v, _)| self.nodes[v].id.clone())
            .collect()
    }

    pub(crate) fn id(&self, v: usize) -> &str {
        &self.nodes[v].id
    }

    pub(crate) fn parents_idx(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub(crate) fn children_idx(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parents(&self, v: &str) -> Result<NodeSet, GraphError> {
        let v = self.require(v)?;
        Ok(self.parents[v]
            .iter()
            .map(|&p| self.id(p).to_string())
            .collect())
    }

    pub fn children(&self, v: &str) -> Result<NodeSet, GraphError> {
        let v = self.require(v)?;
        Ok(self.children[v]
            .iter()
            .map(|&c| self.id(c).to_string())
            .collect())
    }

    /// Descendants of every node in `s`, including `s` itself.
    pub fn descendants(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        let start = self.mask_of(s)?;
        Ok(self.set_of(&self.closure(&start, |v| &self.children[v])))
    }

    /// Ancestors of every node in `s`, including `s` itself.
    pub fn ancestors(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        let start = self.mask_of(s)?;
        Ok(self.set_of(&self.closure(&start, |v| &self.parents[v])))
    }

    /// Reflexive transitive closure of `start` under `step`.
    pub(crate) fn closure<'a>(
        &'a self,
        start: &[bool],
        step: impl Fn(usize) -> &'a [usize],
    ) -> Vec<bool> {
        let mut mask = start.to_vec();
        let mut stack: Vec<usize> = (0..self.len()).filter(|&v| start[v]).collect();
        while let Some(v) = stack.pop() {
            for &w in step(v) {
                if !mask[w] {
                    mask[w] = true;
                    stack.push(w);
                }
            }
        }
        mask
    }
}
