//! Interaction networks over `N` units.
//!
//! Units are 0-based in memory and 1-based in files and on the command line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Directed graph on units `0..n`; an edge `j -> i` means unit `j` can
/// affect unit `i`. Adjacency lists are kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionNetwork {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl InteractionNetwork {
    pub fn empty(n: usize) -> Self {
        InteractionNetwork {
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
        }
    }

    /// Builds from 0-based directed edges. Repeated edges are merged.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut net = Self::empty(n);
        for (j, i) in edges {
            if j >= n || i >= n {
                return Err(Error::InvalidInput(format!(
                    "edge {} -> {} out of range for {n} units",
                    j + 1,
                    i + 1
                )));
            }
            if j == i {
                return Err(Error::InvalidInput(format!("self-loop on unit {}", i + 1)));
            }
            net.parents[i].push(j);
            net.children[j].push(i);
        }
        for list in net.parents.iter_mut().chain(net.children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(net)
    }

    /// Builds from 1-based edges, as written in papers and files.
    pub fn from_one_based(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut shifted = Vec::new();
        for (j, i) in edges {
            if j == 0 || i == 0 {
                return Err(Error::InvalidInput("unit indices start at 1".into()));
            }
            shifted.push((j - 1, i - 1));
        }
        Self::new(n, shifted)
    }

    pub(crate) fn from_sorted_parents(parents: Vec<Vec<usize>>) -> Self {
        let mut children = vec![Vec::new(); parents.len()];
        for (i, ps) in parents.iter().enumerate() {
            for &j in ps {
                children[j].push(i);
            }
        }
        InteractionNetwork { parents, children }
    }

    pub fn n_units(&self) -> usize {
        self.parents.len()
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Edges `(j, i)` ordered by source, then target.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(j, cs)| cs.iter().map(move |&i| (j, i)))
    }

    pub fn has_edge(&self, j: usize, i: usize) -> bool {
        self.children
            .get(j)
            .is_some_and(|cs| cs.binary_search(&i).is_ok())
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.n_units() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "unit {} out of range for {} units",
                i + 1,
                self.n_units()
            )))
        }
    }

    /// `{j : j -> i}`, sorted.
    pub fn parents_set(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.parents[i])
    }

    pub fn children_set(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.children[i])
    }

    /// `{j != i : j -> l -> i for some l}`, sorted.
    pub fn second_order_set(&self, i: usize) -> Result<Vec<usize>> {
        self.check(i)?;
        Ok(self.second_order_unchecked(i))
    }

    pub(crate) fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub(crate) fn second_order_unchecked(&self, i: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.parents[i]
            .iter()
            .flat_map(|&l| self.parents[l].iter().copied())
            .filter(|&j| j != i)
            .collect();
        set.into_iter().collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.parents.iter().map(Vec::len).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.parents == self.children
    }

    pub fn write_tsv(&self) -> String {
        let mut out = format!("# n_units={}\n", self.n_units());
        for (j, i) in self.edges() {
            let _ = writeln!(out, "{}\t{}", j + 1, i + 1);
        }
        out
    }

    pub fn parse_tsv(src: &str, origin: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (k, raw) in src.lines().enumerate() {
            let line = raw.trim();
            let lineno = k + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("n_units=") {
                    let v = v.trim().parse().map_err(|_| {
                        Error::parse(origin, lineno, format!("bad unit count `{v}`"))
                    })?;
                    n = Some(v);
                }
                continue;
            }
            let n =
                n.ok_or_else(|| Error::parse(origin, lineno, "edge before `# n_units=` header"))?;
            let mut cols = line.split('\t');
            let mut next = || -> Result<usize> {
                let s = cols
                    .next()
                    .ok_or_else(|| Error::parse(origin, lineno, "expected two columns"))?;
                let v: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad unit index `{s}`")))?;
                if v == 0 || v > n {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("unit {v} outside 1..={n}"),
                    ));
                }
                Ok(v)
            };
            let (j, i) = (next()?, next()?);
            if j == i {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("self-loop on unit {j}"),
                ));
            }
            edges.push((j, i));
        }
        let n = n.ok_or_else(|| Error::parse(origin, 1, "missing `# n_units=` header"))?;
        Self::from_one_based(n, edges)
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_tsv(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::InteractionNetwork;

    /// Three units: 1->2, 3->1, 2->3, 3->2.
    pub fn small() -> InteractionNetwork {
        InteractionNetwork::from_one_based(3, [(1, 2), (3, 1), (2, 3), (3, 2)]).unwrap()
    }

    /// Six units: 5->1, 2->5, 5->2, 6->5, 2->3.
    pub fn six() -> InteractionNetwork {
        InteractionNetwork::from_one_based(6, [(5, 1), (2, 5), (5, 2), (6, 5), (2, 3)]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn one_based(v: &[usize]) -> Vec<usize> {
        v.iter().map(|j| j + 1).collect()
    }

    #[test]
    fn parents_of_small_network() {
        let net = small();
        assert_eq!(one_based(net.parents_set(1).unwrap()), vec![1, 3]);
        assert_eq!(one_based(net.parents_set(0).unwrap()), vec![3]);
        assert!(InteractionNetwork::empty(4)
            .parents_set(2)
            .unwrap()
            .is_empty());
        assert!(net.parents_set(3).is_err());
    }

    #[test]
    fn second_order_of_six_unit_network() {
        let net = six();
        assert_eq!(one_based(&net.second_order_set(0).unwrap()), vec![2, 6]);
        assert!(net.second_order_set(4).unwrap().is_empty());
        assert!(net.second_order_set(3).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(InteractionNetwork::new(2, [(0, 0)]).is_err());
        assert!(InteractionNetwork::new(2, [(0, 2)]).is_err());
        assert!(InteractionNetwork::from_one_based(2, [(0, 1)]).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let net = six();
        let back = InteractionNetwork::parse_tsv(&net.write_tsv(), "mem").unwrap();
        assert_eq!(back, net);
        assert_eq!(
            InteractionNetwork::parse_tsv("# n_units=4\n", "mem")
                .unwrap()
                .n_units(),
            4
        );
    }

    #[test]
    fn tsv_errors() {
        assert!(InteractionNetwork::parse_tsv("1\t2\n", "mem").is_err());
        let err = InteractionNetwork::parse_tsv("# n_units=2\n1\t3\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(InteractionNetwork::parse_tsv("# n_units=2\n1\n", "mem").is_err());
    }

    #[test]
    fn symmetry() {
        assert!(!small().is_symmetric());
        let sym = InteractionNetwork::new(3, [(0, 1), (1, 0)]).unwrap();
        assert!(sym.is_symmetric());
        assert_eq!(sym.n_edges(), 2);
        assert!(sym.has_edge(1, 0) && !sym.has_edge(0, 2));
    }
}
