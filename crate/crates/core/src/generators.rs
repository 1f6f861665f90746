//! Random and deterministic interaction-network generators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::network::InteractionNetwork;

/// Edge probability, possibly depending on the number of units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeProb {
    Constant(f64),
    /// `c / N`
    Scaled(f64),
    /// `N^e`
    Power(f64),
}

impl EdgeProb {
    pub fn at(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            EdgeProb::Constant(p) => p,
            EdgeProb::Scaled(c) => c / n,
            EdgeProb::Power(e) => n.powf(e),
        }
        .clamp(0.0, 1.0)
    }
}

impl fmt::Display for EdgeProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeProb::Constant(p) => write!(f, "{p}"),
            EdgeProb::Scaled(c) => write!(f, "{c}/N"),
            EdgeProb::Power(e) => write!(f, "N^{e}"),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for EdgeProb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::Config(format!(
                "bad edge probability `{s}` (expected p, c/N or N^e)"
            ))
        };
        let p = if let Some(e) = s.strip_prefix("N^") {
            EdgeProb::Power(parse_number(e.trim_matches(|c| c == '(' || c == ')')).ok_or_else(bad)?)
        } else if let Some(c) = s.strip_suffix("/N") {
            EdgeProb::Scaled(c.trim().parse().map_err(|_| bad())?)
        } else {
            let p = parse_number(s).ok_or_else(bad)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "edge probability {p} outside [0, 1]"
                )));
            }
            EdgeProb::Constant(p)
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkGenerator {
    /// Each unordered pair is linked in both directions with probability `p`.
    ErdosRenyi { p: EdgeProb },
    /// Disjoint complete families with sizes uniform on `min_size..=max_size`.
    Family { min_size: usize, max_size: usize },
    /// Square grid with edges pointing right and down; `N` must be a square.
    Lattice2d,
}

impl NetworkGenerator {
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<InteractionNetwork> {
        match *self {
            NetworkGenerator::ErdosRenyi { p } => Ok(erdos_renyi(n, p.at(n), rng)),
            NetworkGenerator::Family { min_size, max_size } => {
                if min_size == 0 || min_size > max_size {
                    return Err(Error::Config(format!(
                        "bad family sizes {min_size}..={max_size}"
                    )));
                }
                Ok(family(n, min_size, max_size, rng))
            }
            NetworkGenerator::Lattice2d => {
                let side = n.isqrt();
                if side * side != n {
                    return Err(Error::Config(format!(
                        "lattice size {n} is not a perfect square"
                    )));
                }
                Ok(lattice2d(side))
            }
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, NetworkGenerator::Lattice2d)
    }
}

impl fmt::Display for NetworkGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkGenerator::ErdosRenyi { p } => write!(f, "er:{p}"),
            NetworkGenerator::Family { min_size, max_size } => {
                write!(f, "family:{min_size}-{max_size}")
            }
            NetworkGenerator::Lattice2d => f.write_str("lattice"),
        }
    }
}

impl FromStr for NetworkGenerator {
    type Err = Error;

    /// `er:<prob>`, `family`, `family:<min>-<max>` or `lattice`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("er:") {
            return Ok(NetworkGenerator::ErdosRenyi { p: p.parse()? });
        }
        if s == "family" {
            return Ok(NetworkGenerator::Family {
                min_size: 1,
                max_size: 6,
            });
        }
        if let Some(range) = s.strip_prefix("family:") {
            let parsed = range
                .split_once('-')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            return match parsed {
                Some((min_size, max_size)) if min_size >= 1 && min_size <= max_size => {
                    Ok(NetworkGenerator::Family { min_size, max_size })
                }
                _ => Err(Error::Config(format!("bad family range `{range}`"))),
            };
        }
        if s == "lattice" || s == "lattice2d" {
            return Ok(NetworkGenerator::Lattice2d);
        }
        Err(Error::Config(format!(
            "unknown generator `{s}` (expected er:<p>, family or lattice)"
        )))
    }
}

impl Serialize for NetworkGenerator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NetworkGenerator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> InteractionNetwork {
    let mut parents = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                parents[i].push(j);
                parents[j].push(i);
            }
        }
    }
    for ps in &mut parents {
        ps.sort_unstable();
    }
    InteractionNetwork::from_sorted_parents(parents)
}

pub fn family<R: Rng + ?Sized>(
    n: usize,
    min_size: usize,
    max_size: usize,
    rng: &mut R,
) -> InteractionNetwork {
    let mut parents = vec![Vec::new(); n];
    let mut start = 0;
    while start < n {
        let size = rng.random_range(min_size..=max_size).min(n - start);
        for i in start..start + size {
            parents[i] = (start..start + size).filter(|&j| j != i).collect();
        }
        start += size;
    }
    InteractionNetwork::from_sorted_parents(parents)
}

/// Unit `r * side + c` sits at row `r`, column `c`.
pub fn lattice2d(side: usize) -> InteractionNetwork {
    let n = side * side;
    let mut parents = vec![Vec::new(); n];
    for r in 0..side {
        for c in 0..side {
            let i = r * side + c;
            if r > 0 {
                parents[i].push(i - side);
            }
            if c > 0 {
                parents[i].push(i - 1);
            }
        }
    }
    InteractionNetwork::from_sorted_parents(parents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn erdos_renyi_extremes() {
        let mut r = rng::stream(1, &[]);
        assert_eq!(erdos_renyi(5, 0.0, &mut r).n_edges(), 0);
        let full = erdos_renyi(3, 1.0, &mut r);
        assert_eq!(full.n_edges(), 6);
    }

    #[test]
    fn erdos_renyi_is_symmetric() {
        let mut r = rng::stream(2, &[]);
        for _ in 0..20 {
            assert!(erdos_renyi(60, 0.1, &mut r).is_symmetric());
        }
    }

    #[test]
    fn erdos_renyi_mean_in_degree() {
        let n = 300;
        let p = EdgeProb::Scaled(10.0).at(n);
        let mut r = rng::stream(3, &[]);
        let means: Vec<f64> = (0..200)
            .map(|_| erdos_renyi(n, p, &mut r).n_edges() as f64 / n as f64)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let sd =
            (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt();
        let expect = 10.0 * (n - 1) as f64 / n as f64;
        assert!(
            (m - expect).abs() < 3.0 * sd / (means.len() as f64).sqrt(),
            "{m} vs {expect}"
        );
    }

    #[test]
    fn families_are_bounded_cliques() {
        let mut r = rng::stream(4, &[]);
        assert_eq!(family(1, 1, 6, &mut r).n_edges(), 0);
        for n in [7, 50, 333] {
            let net = family(n, 1, 6, &mut r);
            assert_eq!(net.n_units(), n);
            for i in 0..n {
                let ps = net.parents_set(i).unwrap();
                assert!(ps.len() <= 5);
                for &j in ps {
                    // the family of i is closed under the parent relation
                    let mut fam_j: Vec<usize> = net.parents_set(j).unwrap().to_vec();
                    fam_j.push(j);
                    fam_j.sort_unstable();
                    let mut fam_i: Vec<usize> = ps.to_vec();
                    fam_i.push(i);
                    fam_i.sort_unstable();
                    assert_eq!(fam_i, fam_j);
                }
            }
        }
    }

    #[test]
    fn lattice_edge_counts() {
        assert_eq!(lattice2d(1).n_edges(), 0);
        let two = lattice2d(2);
        assert_eq!(two.n_edges(), 4);
        assert!(
            two.has_edge(0, 1) && two.has_edge(0, 2) && two.has_edge(1, 3) && two.has_edge(2, 3)
        );
        for s in 1..12 {
            assert_eq!(lattice2d(s).n_edges(), 2 * s * (s - 1));
        }
        assert!(NetworkGenerator::Lattice2d
            .generate(10, &mut rng::stream(0, &[]))
            .is_err());
    }

    #[test]
    fn parse_generators() {
        let g: NetworkGenerator = "er:10/N".parse().unwrap();
        assert_eq!(
            g,
            NetworkGenerator::ErdosRenyi {
                p: EdgeProb::Scaled(10.0)
            }
        );
        let g: NetworkGenerator = "er:N^-2/3".parse().unwrap();
        match g {
            NetworkGenerator::ErdosRenyi {
                p: EdgeProb::Power(e),
            } => assert!((e + 2.0 / 3.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            "er:0.2".parse::<NetworkGenerator>().unwrap().to_string(),
            "er:0.2"
        );
        assert_eq!(
            "family".parse::<NetworkGenerator>().unwrap(),
            NetworkGenerator::Family {
                min_size: 1,
                max_size: 6
            }
        );
        assert_eq!(
            "lattice".parse::<NetworkGenerator>().unwrap(),
            NetworkGenerator::Lattice2d
        );
        for bad in ["er:1.5", "er:x", "family:3-2", "ring"] {
            assert!(bad.parse::<NetworkGenerator>().is_err(), "{bad}");
        }
        let back: NetworkGenerator = NetworkGenerator::ErdosRenyi {
            p: EdgeProb::Power(-0.5),
        }
        .to_string()
        .parse()
        .unwrap();
        assert_eq!(
            back,
            NetworkGenerator::ErdosRenyi {
                p: EdgeProb::Power(-0.5)
            }
        );
    }

    #[test]
    fn generation_is_reproducible() {
        let g: NetworkGenerator = "er:10/N".parse().unwrap();
        let a = g.generate(200, &mut rng::stream(9, &[1])).unwrap();
        let b = g.generate(200, &mut rng::stream(9, &[1])).unwrap();
        assert_eq!(a, b);
    }
}
