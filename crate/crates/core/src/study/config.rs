use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Variant;
use crate::features::{FeatureKind, FeatureSpec};
use crate::generators::{EdgeProb, NetworkGenerator};
use crate::sem::SemConfig;

fn default_name() -> String {
    "study".into()
}
fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}
fn default_adjustment() -> Vec<String> {
    vec!["C2".into()]
}
fn default_level() -> f64 {
    0.95
}
fn default_mc_reps() -> usize {
    1000
}
fn default_oracle_checks() -> usize {
    5
}
fn default_oracle_reps() -> usize {
    200
}

/// Everything needed to reproduce one simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub generator: NetworkGenerator,
    pub features: FeatureSpec,
    pub sizes: Vec<usize>,
    pub nrep_graph: usize,
    pub nrep_data: usize,
    pub pi: f64,
    pub eta: f64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Covariate columns used by the adjusting estimators.
    #[serde(default = "default_adjustment")]
    pub adjustment: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Replications for Monte Carlo weights, used only without a closed form.
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    /// Number of (size, graph) cells whose true effect is cross-checked by brute force.
    #[serde(default = "default_oracle_checks")]
    pub oracle_checks: usize,
    #[serde(default = "default_oracle_reps")]
    pub oracle_reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub sem: SemConfig,
}

pub const PRESETS: [&str; 5] = ["er", "er-power", "er-dense", "family", "lattice"];

const DOUBLING: [usize; 5] = [300, 600, 1200, 2400, 4800];

impl StudyConfig {
    /// Built-in designs. `er`, `er-power` and `er-dense` use edge probabilities
    /// `10/N`, `N^(-2/3)` and `0.2`.
    pub fn preset(name: &str) -> Result<StudyConfig> {
        let er = |p: EdgeProb, name: &str| StudyConfig {
            name: name.into(),
            generator: NetworkGenerator::ErdosRenyi { p },
            features: FeatureSpec::single(FeatureKind::FracTreatedParents),
            sizes: DOUBLING.to_vec(),
            nrep_graph: 50,
            nrep_data: 100,
            pi: 0.7,
            eta: 0.2,
            variants: default_variants(),
            adjustment: default_adjustment(),
            seed: 1,
            level: default_level(),
            mc_reps: default_mc_reps(),
            oracle_checks: default_oracle_checks(),
            oracle_reps: default_oracle_reps(),
            output_dir: None,
            sem: SemConfig::example(vec![2.0, 1.0], vec![0.4, 1.1]),
        };
        Ok(match name {
            "er" => er(EdgeProb::Scaled(10.0), name),
            "er-power" => er(EdgeProb::Power(-2.0 / 3.0), name),
            "er-dense" => er(EdgeProb::Constant(0.2), name),
            "family" => StudyConfig {
                generator: NetworkGenerator::Family {
                    min_size: 1,
                    max_size: 6,
                },
                pi: 1.0,
                eta: 0.0,
                ..er(EdgeProb::Constant(0.0), name)
            },
            "lattice" => StudyConfig {
                generator: NetworkGenerator::Lattice2d,
                features: FeatureSpec::new(vec![
                    FeatureKind::FracTreatedParents,
                    FeatureKind::FracTreatedParentsOfParents,
                ])?,
                sizes: vec![289, 576, 1225, 2401, 4761],
                pi: 0.5,
                eta: 0.1,
                sem: SemConfig::example(vec![2.0, 1.0, 0.5], vec![0.4, 1.1, 0.5]),
                ..er(EdgeProb::Constant(0.0), name)
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (available: {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    /// Parses TOML. A top-level `preset = "<name>"` key starts from that
    /// preset; the remaining keys override it, tables merging key by key.
    pub fn from_toml_str(src: &str) -> Result<StudyConfig> {
        let mut table: toml::Table = src
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let merged = match table.remove("preset") {
            Some(toml::Value::String(name)) => {
                let base = toml::Table::try_from(StudyConfig::preset(&name)?)
                    .map_err(|e| Error::Config(e.to_string()))?;
                merge(base, table)
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "`preset` must be a string, got {other}"
                )))
            }
            None => table,
        };
        let cfg: StudyConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Config("`sizes` must not be empty".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if self.nrep_graph == 0 || self.nrep_data == 0 {
            return Err(Error::Config(
                "`nrep_graph` and `nrep_data` must be at least 1".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("`variants` must not be empty".into()));
        }
        for (name, p) in [("pi", self.pi), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("`{name}` = {p} outside [0, 1]")));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "`level` = {} outside (0, 1)",
                self.level
            )));
        }
        if let NetworkGenerator::Lattice2d = self.generator {
            if let Some(n) = self.sizes.iter().find(|&&n| n.isqrt().pow(2) != n) {
                return Err(Error::Config(format!(
                    "lattice size {n} is not a perfect square"
                )));
            }
        }
        let names = self.sem.covariate_names();
        if let Some(z) = self.adjustment.iter().find(|z| !names.contains(z)) {
            return Err(Error::Config(format!(
                "adjustment column `{z}` is not a covariate of the model"
            )));
        }
        self.sem
            .validate(self.features.len())
            .map_err(|e| Error::Config(format!("model: {e}")))
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        let merged = match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => toml::Value::Table(merge(b, o)),
            (_, v) => v,
        };
        base.insert(k, merged);
    }
    base
}
