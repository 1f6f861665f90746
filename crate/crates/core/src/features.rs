//! Interference features: known summaries of the other units' treatments.
//!
//! Every feature declares, for each unit `i`, the set of units whose
//! treatments it reads (its affector set). Evaluation only ever sees those
//! treatments, so a feature cannot depend on anything it did not declare.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::network::InteractionNetwork;

/// Affector map of a custom feature: unit index to the units it reads.
pub type AffectorFn = dyn Fn(&InteractionNetwork, usize) -> Vec<usize> + Send + Sync;
/// Evaluates a custom feature from the affectors' treatments, in declared order.
pub type EvalFn = dyn Fn(&[u8]) -> f64 + Send + Sync;
/// Closed-form expectation given the affector count and treatment probability.
pub type ExpectationFn = dyn Fn(usize, f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct CustomFeature {
    pub name: String,
    affectors: Arc<AffectorFn>,
    eval: Arc<EvalFn>,
    expectation: Option<Arc<ExpectationFn>>,
}

impl CustomFeature {
    pub fn new(
        name: impl Into<String>,
        affectors: impl Fn(&InteractionNetwork, usize) -> Vec<usize> + Send + Sync + 'static,
        eval: impl Fn(&[u8]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomFeature {
            name: name.into(),
            affectors: Arc::new(affectors),
            eval: Arc::new(eval),
            expectation: None,
        }
    }

    pub fn with_expectation(
        mut self,
        f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.expectation = Some(Arc::new(f));
        self
    }
}

impl fmt::Debug for CustomFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFeature")
            .field("name", &self.name)
            .field("closed_form", &self.expectation.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum FeatureKind {
    /// Share of treated parents.
    FracTreatedParents,
    /// Indicator that the share of treated parents is at least `threshold`.
    ThresholdTreatedParents {
        threshold: f64,
    },
    /// Share of treated units two steps upstream, excluding the unit itself.
    FracTreatedParentsOfParents,
    Custom(CustomFeature),
}

impl PartialEq for FeatureKind {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::FracTreatedParents => f.write_str("frac-parents"),
            FeatureKind::ThresholdTreatedParents { threshold } => {
                write!(f, "threshold-parents:{threshold}")
            }
            FeatureKind::FracTreatedParentsOfParents => f.write_str("frac-parents-of-parents"),
            FeatureKind::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "frac-parents" => return Ok(FeatureKind::FracTreatedParents),
            "frac-parents-of-parents" => return Ok(FeatureKind::FracTreatedParentsOfParents),
            _ => {}
        }
        if let Some(t) = s.strip_prefix("threshold-parents") {
            let t = t
                .strip_prefix(':')
                .unwrap_or(if t.is_empty() { "0.5" } else { t });
            let threshold: f64 = t
                .parse()
                .map_err(|_| Error::Config(format!("bad threshold `{t}`")))?;
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!(
                    "threshold {threshold} outside [0, 1]"
                )));
            }
            return Ok(FeatureKind::ThresholdTreatedParents { threshold });
        }
        Err(Error::Config(format!(
            "unknown feature `{s}` (expected frac-parents, threshold-parents:<t> or frac-parents-of-parents)"
        )))
    }
}

/// Ordered list of feature kinds; column `k` of the feature matrix is kind `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub kinds: Vec<FeatureKind>,
    /// Value used for a unit whose affector set is empty.
    pub fill: f64,
}

impl FeatureSpec {
    pub fn new(kinds: Vec<FeatureKind>) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Config(
                "a feature spec needs at least one feature".into(),
            ));
        }
        Ok(FeatureSpec { kinds, fill: 0.0 })
    }

    pub fn single(kind: FeatureKind) -> Self {
        FeatureSpec {
            kinds: vec![kind],
            fill: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn has_closed_form(&self) -> bool {
        self.kinds.iter().all(|k| match k {
            FeatureKind::Custom(c) => c.expectation.is_some(),
            _ => true,
        })
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.kinds.iter().map(|k| k.to_string()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSpec::new(s.split(',').map(str::parse).collect::<Result<_>>()?)
    }
}

impl Serialize for FeatureSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let names: Vec<String> = self.kinds.iter().map(|k| k.to_string()).collect();
        names.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        FeatureSpec::new(
            names
                .iter()
                .map(|n| n.parse())
                .collect::<Result<_>>()
                .map_err(serde::de::Error::custom)?,
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Affector sets of every feature, resolved against one network.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    spec: FeatureSpec,
    /// `affectors[k][i]`, sorted for built-ins.
    affectors: Vec<Vec<Vec<usize>>>,
    n: usize,
}

impl FeatureMap {
    pub fn new(net: &InteractionNetwork, spec: &FeatureSpec) -> Result<Self> {
        let n = net.n_units();
        let mut affectors = Vec::with_capacity(spec.len());
        for kind in &spec.kinds {
            let sets: Vec<Vec<usize>> = match kind {
                FeatureKind::FracTreatedParents | FeatureKind::ThresholdTreatedParents { .. } => {
                    (0..n).map(|i| net.parents_of(i).to_vec()).collect()
                }
                FeatureKind::FracTreatedParentsOfParents => {
                    (0..n).map(|i| net.second_order_unchecked(i)).collect()
                }
                FeatureKind::Custom(c) => (0..n).map(|i| (c.affectors)(net, i)).collect(),
            };
            for (i, set) in sets.iter().enumerate() {
                if let Some(&j) = set.iter().find(|&&j| j >= n || j == i) {
                    return Err(Error::InvalidInput(format!(
                        "feature `{kind}` declares unit {} as affector of unit {}",
                        j + 1,
                        i + 1
                    )));
                }
            }
            affectors.push(sets);
        }
        Ok(FeatureMap {
            spec: spec.clone(),
            affectors,
            n,
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn n_units(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.affectors.len()
    }

    pub fn affectors(&self, k: usize, i: usize) -> &[usize] {
        &self.affectors[k][i]
    }

    /// Union over features of the units affecting unit `i`, sorted.
    pub fn combined_affectors(&self, i: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .affectors
            .iter()
            .flat_map(|a| a[i].iter().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Units whose affector set for feature `k` is empty; they get the fill value.
    pub fn empty_units(&self, k: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.affectors[k][i].is_empty())
            .collect()
    }

    fn eval_one(&self, k: usize, i: usize, w: &[u8], scratch: &mut Vec<u8>) -> f64 {
        let set = &self.affectors[k][i];
        match &self.spec.kinds[k] {
            FeatureKind::Custom(c) => {
                scratch.clear();
                scratch.extend(set.iter().map(|&j| w[j]));
                (c.eval)(scratch)
            }
            _ if set.is_empty() => self.spec.fill,
            FeatureKind::FracTreatedParents | FeatureKind::FracTreatedParentsOfParents => {
                treated(set, w) as f64 / set.len() as f64
            }
            FeatureKind::ThresholdTreatedParents { threshold } => f64::from(u8::from(
                treated(set, w) as f64 / set.len() as f64 >= *threshold,
            )),
        }
    }

    /// `N x P` feature matrix for treatment vector `w`.
    pub fn compute(&self, w: &[u8]) -> Result<DMatrix<f64>> {
        check_treatments(w, self.n)?;
        let mut x = DMatrix::zeros(self.n, self.n_features());
        let mut scratch = Vec::new();
        for k in 0..self.n_features() {
            for i in 0..self.n {
                x[(i, k)] = self.eval_one(k, i, w, &mut scratch);
            }
        }
        Ok(x)
    }

    /// Column sums of the feature matrix, without allocating it. No input checks.
    pub(crate) fn column_sums(&self, w: &[u8], out: &mut [f64], scratch: &mut Vec<u8>) {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = (0..self.n).map(|i| self.eval_one(k, i, w, scratch)).sum();
        }
    }

    /// `E[X_ik]` when every other unit is treated independently with probability `theta`.
    pub fn expectation(&self, k: usize, i: usize, theta: f64) -> Result<f64> {
        let size = self.affectors[k][i].len();
        let kind = &self.spec.kinds[k];
        if let FeatureKind::Custom(c) = kind {
            return match &c.expectation {
                Some(f) => Ok(f(size, theta)),
                None => Err(Error::NoClosedForm(kind.to_string())),
            };
        }
        if size == 0 {
            return Ok(self.spec.fill);
        }
        Ok(match kind {
            FeatureKind::ThresholdTreatedParents { threshold } => {
                let c = (0..=size).find(|&c| c as f64 / size as f64 >= *threshold);
                match c {
                    None => 0.0,
                    Some(0) => 1.0,
                    Some(c) => {
                        let bin = Binomial::new(theta.clamp(0.0, 1.0), size as u64)
                            .map_err(|e| Error::Numerical(e.to_string()))?;
                        bin.sf(c as u64 - 1)
                    }
                }
            }
            _ => theta,
        })
    }
}

fn treated(set: &[usize], w: &[u8]) -> usize {
    set.iter().filter(|&&j| w[j] == 1).count()
}

pub(crate) fn check_treatments(w: &[u8], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::Dimension(format!(
            "treatment vector has {} entries, network has {n} units",
            w.len()
        )));
    }
    if let Some(i) = w.iter().position(|&v| v > 1) {
        return Err(Error::InvalidInput(format!(
            "treatment of unit {} is {}, expected 0 or 1",
            i + 1,
            w[i]
        )));
    }
    Ok(())
}

/// One-shot feature computation.
pub fn compute_features(
    net: &InteractionNetwork,
    w: &[u8],
    spec: &FeatureSpec,
) -> Result<DMatrix<f64>> {
    FeatureMap::new(net, spec)?.compute(w)
}

/// Elementwise `O_i = W_i X_i`.
pub fn interactions(x: &DMatrix<f64>, w: &[u8]) -> DMatrix<f64> {
    let mut o = x.clone();
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0 {
            o.row_mut(i).fill(0.0);
        }
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn column(x: &DMatrix<f64>, k: usize) -> Vec<f64> {
        x.column(k).iter().copied().collect()
    }

    #[test]
    fn fraction_of_treated_parents_small_network() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParents);
        let x = compute_features(&small(), &[1, 0, 1], &spec).unwrap();
        assert_eq!(column(&x, 0), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn threshold_small_network() {
        let spec: FeatureSpec = "threshold-parents:0.5".parse().unwrap();
        let x = compute_features(&small(), &[1, 0, 1], &spec).unwrap();
        assert_eq!(column(&x, 0), vec![1.0, 1.0, 0.0]);
        let x = compute_features(&small(), &[0, 0, 1], &spec).unwrap();
        assert_eq!(column(&x, 0), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn all_untreated_gives_zero() {
        let spec: FeatureSpec = "frac-parents,threshold-parents:0.3,frac-parents-of-parents"
            .parse()
            .unwrap();
        let x = compute_features(&six(), &[0; 6], &spec).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_order_fraction_and_fill() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParentsOfParents);
        // Unit 1 reads units 2 and 6; unit 4 reads nothing.
        let x = compute_features(&six(), &[0, 1, 0, 1, 1, 0], &spec).unwrap();
        assert_eq!(x[(0, 0)], 0.5);
        assert_eq!(x[(3, 0)], 0.0);
        let mut spec = spec;
        spec.fill = -1.0;
        let x = compute_features(&six(), &[0, 1, 0, 1, 1, 0], &spec).unwrap();
        assert_eq!(x[(3, 0)], -1.0);
    }

    #[test]
    fn input_errors() {
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParents);
        assert!(matches!(
            compute_features(&small(), &[1, 0], &spec),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            compute_features(&small(), &[1, 2, 0], &spec),
            Err(Error::InvalidInput(_))
        ));
        assert!("bogus".parse::<FeatureSpec>().is_err());
        assert!("threshold-parents:1.5".parse::<FeatureSpec>().is_err());
    }

    #[test]
    fn spec_names_round_trip() {
        let spec: FeatureSpec = "frac-parents, threshold-parents:0.25,frac-parents-of-parents"
            .parse()
            .unwrap();
        let again: FeatureSpec = spec.to_string().parse().unwrap();
        assert_eq!(spec, again);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<FeatureSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn custom_features_see_only_declared_affectors() {
        let count = CustomFeature::new(
            "count",
            |net, i| net.parents_of(i).to_vec(),
            |w| w.iter().map(|&v| f64::from(v)).sum(),
        );
        let spec = FeatureSpec::single(FeatureKind::Custom(count));
        let x = compute_features(&small(), &[1, 0, 1], &spec).unwrap();
        assert_eq!(column(&x, 0), vec![1.0, 2.0, 0.0]);
        assert!(!spec.has_closed_form());
        let map = FeatureMap::new(&small(), &spec).unwrap();
        assert!(matches!(
            map.expectation(0, 0, 0.5),
            Err(Error::NoClosedForm(_))
        ));

        let bad = CustomFeature::new("self", |_, i| vec![i], |_| 0.0);
        assert!(FeatureMap::new(&small(), &FeatureSpec::single(FeatureKind::Custom(bad))).is_err());
    }

    #[test]
    fn threshold_expectation_matches_enumeration() {
        // Unit with three parents; enumerate all 8 patterns.
        let net = InteractionNetwork::new(4, [(1, 0), (2, 0), (3, 0)]).unwrap();
        for t in [0.0, 0.3, 0.5, 0.7, 1.0] {
            let spec = FeatureSpec::single(FeatureKind::ThresholdTreatedParents { threshold: t });
            let map = FeatureMap::new(&net, &spec).unwrap();
            let theta: f64 = 0.35;
            let mut exact = 0.0;
            for pattern in 0u8..8 {
                let w: Vec<u8> = std::iter::once(0)
                    .chain((0..3).map(|b| (pattern >> b) & 1))
                    .collect();
                let k = w.iter().filter(|&&v| v == 1).count() as i32;
                let p = theta.powi(k) * (1.0 - theta).powi(3 - k);
                exact += p * map.compute(&w).unwrap()[(0, 0)];
            }
            assert!(
                (map.expectation(0, 0, theta).unwrap() - exact).abs() < 1e-12,
                "t={t}"
            );
        }
    }

    #[test]
    fn fraction_mean_converges_to_theta() {
        let net = crate::generators::erdos_renyi(200, 0.05, &mut rng::stream(3, &[]));
        let spec = FeatureSpec::single(FeatureKind::FracTreatedParents);
        let map = FeatureMap::new(&net, &spec).unwrap();
        let with_parents: Vec<usize> = (0..200)
            .filter(|&i| !map.affectors(0, i).is_empty())
            .collect();
        let theta = 0.3;
        let reps = 2000;
        let mut r = rng::stream(4, &[]);
        let mut draws = Vec::with_capacity(reps);
        for _ in 0..reps {
            let w: Vec<u8> = (0..200).map(|_| u8::from(r.random_bool(theta))).collect();
            let x = map.compute(&w).unwrap();
            let m: f64 =
                with_parents.iter().map(|&i| x[(i, 0)]).sum::<f64>() / with_parents.len() as f64;
            draws.push(m);
        }
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - theta).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    fn random_network(n: usize, edges: &[(usize, usize)]) -> InteractionNetwork {
        InteractionNetwork::new(
            n,
            edges
                .iter()
                .filter(|(a, b)| a % n != b % n)
                .map(|&(a, b)| (a % n, b % n)),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn features_ignore_non_affectors(
            n in 2usize..10,
            edges in prop::collection::vec((0usize..10, 0usize..10), 0..30),
            w in prop::collection::vec(0u8..2, 10),
            flip in 0usize..10,
        ) {
            let net = random_network(n, &edges);
            let spec: FeatureSpec = "frac-parents,threshold-parents:0.5,frac-parents-of-parents".parse().unwrap();
            let map = FeatureMap::new(&net, &spec).unwrap();
            let w = &w[..n];
            let j = flip % n;
            let mut w2 = w.to_vec();
            w2[j] ^= 1;
            let (x1, x2) = (map.compute(w).unwrap(), map.compute(&w2).unwrap());
            for k in 0..spec.len() {
                for i in 0..n {
                    if !map.affectors(k, i).contains(&j) {
                        prop_assert_eq!(x1[(i, k)], x2[(i, k)]);
                    }
                }
            }
        }

        #[test]
        fn fractions_lie_in_unit_interval(
            n in 1usize..10,
            edges in prop::collection::vec((0usize..10, 0usize..10), 0..30),
            w in prop::collection::vec(0u8..2, 10),
        ) {
            let net = random_network(n, &edges);
            let spec: FeatureSpec = "frac-parents,frac-parents-of-parents".parse().unwrap();
            let x = compute_features(&net, &w[..n], &spec).unwrap();
            prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
