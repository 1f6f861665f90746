use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::rng::{self, tag};
use crate::sem::check_probability;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum WeightsProvenance {
    ClosedForm,
    /// Every unit is assumed to have at least one affector for every feature.
    AssumedExposure,
    MonteCarlo {
        reps: usize,
        seed: u64,
        common_random_numbers: bool,
        se_omega0: Vec<f64>,
        se_omega1: Vec<f64>,
    },
}

/// Weights turning `(alpha0, alpha1)` into the global effect; both have length `P + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights {
    pub pi: f64,
    pub eta: f64,
    pub omega0: Vec<f64>,
    pub omega1: Vec<f64>,
    pub provenance: WeightsProvenance,
}

impl Weights {
    pub fn n_features(&self) -> usize {
        self.omega0.len() - 1
    }

    /// Weights for fraction features when every unit has a nonempty affector
    /// set, so that each feature has mean `theta` under `Bern(theta)`.
    pub fn assumed_exposure(n_features: usize, pi: f64, eta: f64) -> Result<Weights> {
        check_probability(pi)?;
        check_probability(eta)?;
        let omega0 = std::iter::once((1.0 - pi) - (1.0 - eta))
            .chain(std::iter::repeat_n(
                (1.0 - pi) * pi - (1.0 - eta) * eta,
                n_features,
            ))
            .collect();
        let omega1 = std::iter::once(pi - eta)
            .chain(std::iter::repeat_n(pi * pi - eta * eta, n_features))
            .collect();
        Ok(Weights {
            pi,
            eta,
            omega0,
            omega1,
            provenance: WeightsProvenance::AssumedExposure,
        })
    }
}

/// Exact weights from per-unit feature expectations.
pub fn closed_form_weights(map: &FeatureMap, pi: f64, eta: f64) -> Result<Weights> {
    let all: Vec<usize> = (0..map.n_units()).collect();
    closed_form_weights_over(map, &all, pi, eta)
}

/// Closed-form weights averaged over a subset of units only.
pub fn closed_form_weights_over(
    map: &FeatureMap,
    units: &[usize],
    pi: f64,
    eta: f64,
) -> Result<Weights> {
    check_probability(pi)?;
    check_probability(eta)?;
    if units.is_empty() {
        return Err(Error::InvalidInput("no units to average over".into()));
    }
    let n = units.len() as f64;
    let p = map.n_features();
    let mut omega0 = vec![(1.0 - pi) - (1.0 - eta); p + 1];
    let mut omega1 = vec![pi - eta; p + 1];
    for k in 0..p {
        let (mut m_pi, mut m_eta) = (0.0, 0.0);
        for &i in units {
            m_pi += map.expectation(k, i, pi)?;
            m_eta += map.expectation(k, i, eta)?;
        }
        m_pi /= n;
        m_eta /= n;
        omega0[k + 1] = (1.0 - pi) * m_pi - (1.0 - eta) * m_eta;
        omega1[k + 1] = pi * m_pi - eta * m_eta;
    }
    Ok(Weights {
        pi,
        eta,
        omega0,
        omega1,
        provenance: WeightsProvenance::ClosedForm,
    })
}

const MC_CHUNK: usize = 256;

/// Monte Carlo weights: feature means averaged over `reps` treatment draws
/// per policy. With `common_random_numbers` both policies threshold the same
/// uniforms, so `pi == eta` gives exactly zero weights.
pub fn mc_weights(
    map: &FeatureMap,
    pi: f64,
    eta: f64,
    reps: usize,
    seed: u64,
    common_random_numbers: bool,
) -> Result<Weights> {
    check_probability(pi)?;
    check_probability(eta)?;
    if reps == 0 {
        return Err(Error::Config(
            "Monte Carlo weights need at least one replication".into(),
        ));
    }
    let n = map.n_units();
    let p = map.n_features();
    // Per replication: the P feature components of omega0 then omega1.
    let chunks: Vec<Vec<f64>> = (0..reps.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[tag::WEIGHTS, c as u64]);
            let (mut w_pi, mut w_eta) = (vec![0u8; n], vec![0u8; n]);
            let (mut s_pi, mut s_eta) = (vec![0.0; p], vec![0.0; p]);
            let mut scratch = Vec::new();
            let mut out = Vec::new();
            for _ in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(reps) {
                for j in 0..n {
                    if common_random_numbers {
                        let u: f64 = rng.random();
                        w_pi[j] = u8::from(u < pi);
                        w_eta[j] = u8::from(u < eta);
                    } else {
                        w_pi[j] = u8::from(rng.random_bool(pi));
                        w_eta[j] = u8::from(rng.random_bool(eta));
                    }
                }
                map.column_sums(&w_pi, &mut s_pi, &mut scratch);
                map.column_sums(&w_eta, &mut s_eta, &mut scratch);
                for k in 0..p {
                    let (a, b) = (s_pi[k] / n as f64, s_eta[k] / n as f64);
                    out.push((1.0 - pi) * a - (1.0 - eta) * b);
                    out.push(pi * a - eta * b);
                }
            }
            out
        })
        .collect();
    let values: Vec<f64> = chunks.concat();
    let mut omega0 = vec![(1.0 - pi) - (1.0 - eta); p + 1];
    let mut omega1 = vec![pi - eta; p + 1];
    let (mut se0, mut se1) = (vec![0.0; p + 1], vec![0.0; p + 1]);
    for k in 0..p {
        for (slot, omega, se) in [(0, &mut omega0, &mut se0), (1, &mut omega1, &mut se1)] {
            let draws: Vec<f64> = values
                .iter()
                .skip(2 * k + slot)
                .step_by(2 * p)
                .copied()
                .collect();
            let (m, v) = crate::sem::mean_var(&draws);
            omega[k + 1] = m;
            se[k + 1] = (v / reps as f64).sqrt();
        }
    }
    Ok(Weights {
        pi,
        eta,
        omega0,
        omega1,
        provenance: WeightsProvenance::MonteCarlo {
            reps,
            seed,
            common_random_numbers,
            se_omega0: se0,
            se_omega1: se1,
        },
    })
}

/// Closed form when every feature has one, Monte Carlo otherwise.
pub fn default_weights(
    map: &FeatureMap,
    pi: f64,
    eta: f64,
    mc_reps: usize,
    seed: u64,
) -> Result<Weights> {
    if map.spec().has_closed_form() {
        closed_form_weights(map, pi, eta)
    } else {
        mc_weights(map, pi, eta, mc_reps, seed, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CustomFeature, FeatureKind, FeatureSpec};
    use crate::generators::erdos_renyi;
    use crate::network::fixtures::small;
    use crate::network::InteractionNetwork;

    fn frac_map(net: &InteractionNetwork) -> FeatureMap {
        FeatureMap::new(net, &FeatureSpec::single(FeatureKind::FracTreatedParents)).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn closed_form_values() {
        let map = frac_map(&small());
        let w = closed_form_weights(&map, 1.0, 0.0).unwrap();
        assert!(close(&w.omega0, &[-1.0, 0.0], 1e-15));
        assert!(close(&w.omega1, &[1.0, 1.0], 1e-15));
        let w = closed_form_weights(&map, 0.7, 0.2).unwrap();
        assert!(close(&w.omega0, &[-0.5, 0.05], 1e-12));
        assert!(close(&w.omega1, &[0.5, 0.45], 1e-12));
        let w = closed_form_weights(&map, 0.4, 0.4).unwrap();
        assert!(w.omega0.iter().chain(&w.omega1).all(|&v| v == 0.0));
        let assumed = Weights::assumed_exposure(1, 0.7, 0.2).unwrap();
        assert!(close(&assumed.omega0, &[-0.5, 0.05], 1e-12));
        assert!(close(&assumed.omega1, &[0.5, 0.45], 1e-12));
    }

    #[test]
    fn isolated_units_use_fill_value() {
        // Unit 3 has no parents: its feature is always 0.
        let net = InteractionNetwork::new(3, [(0, 1), (1, 0)]).unwrap();
        let w = closed_form_weights(&frac_map(&net), 1.0, 0.0).unwrap();
        assert!(close(&w.omega1, &[1.0, 2.0 / 3.0], 1e-15));
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let spec: FeatureSpec = "frac-parents,threshold-parents:0.5,frac-parents-of-parents"
            .parse()
            .unwrap();
        let net = erdos_renyi(60, 0.08, &mut rng::stream(1, &[]));
        let map = FeatureMap::new(&net, &spec).unwrap();
        let exact = closed_form_weights(&map, 0.6, 0.3).unwrap();
        let mc = mc_weights(&map, 0.6, 0.3, 4000, 2, false).unwrap();
        let WeightsProvenance::MonteCarlo {
            se_omega0,
            se_omega1,
            ..
        } = &mc.provenance
        else {
            panic!()
        };
        for k in 0..=3 {
            assert!(
                (mc.omega0[k] - exact.omega0[k]).abs() <= 3.0 * se_omega0[k] + 1e-12,
                "omega0[{k}]"
            );
            assert!(
                (mc.omega1[k] - exact.omega1[k]).abs() <= 3.0 * se_omega1[k] + 1e-12,
                "omega1[{k}]"
            );
        }
    }

    #[test]
    fn common_random_numbers_zero_when_policies_coincide() {
        let map = frac_map(&small());
        let w = mc_weights(&map, 0.3, 0.3, 500, 4, true).unwrap();
        assert!(w.omega0.iter().chain(&w.omega1).all(|&v| v == 0.0));
        let w = mc_weights(&map, 0.3, 0.3, 500, 4, false).unwrap();
        assert!(w.omega1[1].abs() < 0.1);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let map = frac_map(&small());
        assert_eq!(
            mc_weights(&map, 0.7, 0.2, 300, 9, false).unwrap(),
            mc_weights(&map, 0.7, 0.2, 300, 9, false).unwrap()
        );
    }

    #[test]
    fn custom_without_expectation_falls_back_to_monte_carlo() {
        let f = CustomFeature::new(
            "any",
            |net, i| net.parents_of(i).to_vec(),
            |w| f64::from(u8::from(w.contains(&1))),
        );
        let map = FeatureMap::new(&small(), &FeatureSpec::single(FeatureKind::Custom(f))).unwrap();
        assert!(closed_form_weights(&map, 0.5, 0.1).is_err());
        let w = default_weights(&map, 0.5, 0.1, 200, 1).unwrap();
        assert!(matches!(
            w.provenance,
            WeightsProvenance::MonteCarlo { reps: 200, .. }
        ));
    }
}
