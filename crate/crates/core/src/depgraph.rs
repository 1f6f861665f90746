//! Interference dependency graphs and maximal-degree diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureSpec};
use crate::generators::NetworkGenerator;
use crate::network::InteractionNetwork;
use crate::rng::{self, tag};

/// Undirected graph on units stored as bitset rows. Symmetric, zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl DependencyGraph {
    fn empty(n: usize) -> Self {
        let words = n.div_ceil(64);
        DependencyGraph {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    fn set(&mut self, i: usize, j: usize) {
        if i != j {
            self.bits[i * self.words + j / 64] |= 1 << (j % 64);
            self.bits[j * self.words + i / 64] |= 1 << (i % 64);
        }
    }

    pub fn n_units(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    /// Edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                self.neighbours(i)
                    .into_iter()
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Builds directly from an edge list; used for fixtures.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut d = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidInput(format!(
                    "bad dependency edge {}-{}",
                    i + 1,
                    j + 1
                )));
            }
            d.set(i, j);
        }
        Ok(d)
    }
}

/// `i` and `j` are adjacent when one reads the other's treatment or both read
/// the treatment of a third unit.
pub fn dependency_graph_from_map(map: &FeatureMap) -> DependencyGraph {
    let n = map.n_units();
    let affectors: Vec<Vec<usize>> = (0..n).map(|i| map.combined_affectors(i)).collect();
    // Row l of `readers` marks the units whose features read W_l.
    let mut readers = DependencyGraph::empty(n);
    for (i, set) in affectors.iter().enumerate() {
        for &l in set {
            readers.bits[l * readers.words + i / 64] |= 1 << (i % 64);
        }
    }
    let words = readers.words;
    let mut d = DependencyGraph::empty(n);
    d.bits
        .par_chunks_mut(words.max(1))
        .enumerate()
        .take(n)
        .for_each(|(i, row)| {
            row.copy_from_slice(readers.row(i));
            for &l in &affectors[i] {
                row[l / 64] |= 1 << (l % 64);
                for (dst, src) in row.iter_mut().zip(readers.row(l)) {
                    *dst |= src;
                }
            }
            row[i / 64] &= !(1 << (i % 64));
        });
    d
}

pub fn dependency_graph(net: &InteractionNetwork, spec: &FeatureSpec) -> Result<DependencyGraph> {
    Ok(dependency_graph_from_map(&FeatureMap::new(net, spec)?))
}

pub fn max_degree(d: &DependencyGraph) -> usize {
    d.max_degree()
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeScaling {
    pub sizes: Vec<usize>,
    pub mean_max_degree: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares of `y` on `x`; returns `(slope, intercept)`.
pub fn ls_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if x.len() < 2 || sxx <= 0.0 {
        return Err(Error::Numerical(
            "slope fit needs at least two distinct sizes".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Average maximal degree over `reps` sampled networks per size and the
/// log-log slope of that average against `N`.
pub fn degree_scaling_slope(
    generator: &NetworkGenerator,
    spec: &FeatureSpec,
    sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<DegreeScaling> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sizes must be strictly ascending".into()));
    }
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let degrees: Vec<usize> = cells
        .par_iter()
        .map(|&(n, r)| {
            let mut rng = rng::stream(seed, &[tag::NETWORK, n as u64, r as u64]);
            let net = generator.generate(n, &mut rng)?;
            Ok(dependency_graph(&net, spec)?.max_degree())
        })
        .collect::<Result<_>>()?;
    let mean_max_degree: Vec<f64> = degrees
        .chunks(reps)
        .map(|c| c.iter().sum::<usize>() as f64 / reps as f64)
        .collect();
    let lx: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = mean_max_degree
        .iter()
        .map(|d| d.max(f64::MIN_POSITIVE).ln())
        .collect();
    let (slope, intercept) = ls_line(&lx, &ly)?;
    Ok(DegreeScaling {
        sizes: sizes.to_vec(),
        mean_max_degree,
        slope,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CustomFeature, FeatureKind};
    use crate::network::fixtures::*;
    use proptest::prelude::*;

    fn one_based(edges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
        edges.into_iter().map(|(i, j)| (i + 1, j + 1)).collect()
    }

    #[test]
    fn second_order_dependency_graph_of_six_units() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParentsOfParents);
        let d = dependency_graph(&six(), &spec).unwrap();
        assert_eq!(one_based(d.edges()), vec![(1, 2), (1, 6), (2, 6), (3, 5)]);
        assert_eq!(max_degree(&d), 2);
        let degrees: Vec<usize> = (0..6).map(|i| d.degree(i)).collect();
        assert_eq!(degrees, vec![2, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn parent_fraction_on_small_network_is_complete() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParents);
        let d = dependency_graph(&small(), &spec).unwrap();
        assert_eq!(one_based(d.edges()), vec![(1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn empty_network_and_complete_graph() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParents);
        let d = dependency_graph(&InteractionNetwork::empty(5), &spec).unwrap();
        assert_eq!(d.n_edges(), 0);
        assert_eq!(max_degree(&d), 0);
        let k4 = DependencyGraph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
            .unwrap();
        assert_eq!(max_degree(&k4), 3);
    }

    /// A non-local feature: a unit's in-degree minus the mean in-degree of the
    /// treated units. It reads every other unit, so all units are dependent.
    #[test]
    fn nonlocal_feature_has_full_degree() {
        let net = six();
        let n = net.n_units();
        let centrality = CustomFeature::new(
            "centrality-gap",
            move |_, i| (0..n).filter(|&j| j != i).collect(),
            |w| w.iter().map(|&v| f64::from(v)).sum::<f64>(),
        );
        let spec = FeatureSpec::single(FeatureKind::Custom(centrality));
        assert_eq!(dependency_graph(&net, &spec).unwrap().max_degree(), n - 1);
    }

    #[test]
    fn slope_fit() {
        let (s, c) = ls_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        assert!(ls_line(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(ls_line(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn bounded_degree_generators_stay_bounded() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParents);
        for generator in [
            NetworkGenerator::Family {
                min_size: 1,
                max_size: 6,
            },
            NetworkGenerator::Lattice2d,
        ] {
            let res = degree_scaling_slope(&generator, &spec, &[100, 400, 1600], 5, 11).unwrap();
            let d = &res.mean_max_degree;
            assert!(d[2] <= d[1], "{generator:?}: {d:?}");
            assert!(d.iter().all(|&v| v <= 6.0), "{generator:?}: {d:?}");
        }
    }

    /// Flip each treatment and record which units' features change.
    fn perturbation_graph(net: &InteractionNetwork, spec: &FeatureSpec) -> DependencyGraph {
        let map = FeatureMap::new(net, spec).unwrap();
        let n = net.n_units();
        let mut d = DependencyGraph::empty(n);
        let mut reads = vec![vec![false; n]; n];
        // For fraction features, exposure to unit j is detectable from any
        // baseline by flipping j alone.
        let base = vec![0u8; n];
        let x0 = map.compute(&base).unwrap();
        for j in 0..n {
            let mut w = base.clone();
            w[j] = 1;
            let x1 = map.compute(&w).unwrap();
            for i in 0..n {
                if i != j && (0..map.n_features()).any(|k| x0[(i, k)] != x1[(i, k)]) {
                    reads[i][j] = true;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let shared = (0..n).any(|l| l != i && l != j && reads[i][l] && reads[j][l]);
                if reads[i][j] || reads[j][i] || shared {
                    d.set(i, j);
                }
            }
        }
        d
    }

    proptest! {
        #[test]
        fn matches_perturbation_oracle(
            n in 1usize..=12,
            edges in prop::collection::vec((0usize..12, 0usize..12), 0..40),
        ) {
            let net = InteractionNetwork::new(
                n,
                edges.iter().filter(|(a, b)| a % n != b % n).map(|&(a, b)| (a % n, b % n)),
            ).unwrap();
            for name in ["frac-parents", "frac-parents-of-parents"] {
                let spec: FeatureSpec = name.parse().unwrap();
                prop_assert_eq!(dependency_graph(&net, &spec).unwrap(), perturbation_graph(&net, &spec));
            }
        }

        #[test]
        fn symmetric_with_empty_diagonal(
            n in 1usize..=20,
            edges in prop::collection::vec((0usize..20, 0usize..20), 0..60),
        ) {
            let net = InteractionNetwork::new(
                n,
                edges.iter().filter(|(a, b)| a % n != b % n).map(|&(a, b)| (a % n, b % n)),
            ).unwrap();
            let spec: FeatureSpec = "frac-parents,threshold-parents:0.5,frac-parents-of-parents".parse().unwrap();
            let d = dependency_graph(&net, &spec).unwrap();
            for i in 0..n {
                prop_assert!(!d.has_edge(i, i));
                for j in 0..n {
                    prop_assert_eq!(d.has_edge(i, j), d.has_edge(j, i));
                }
            }
        }
    }
}
