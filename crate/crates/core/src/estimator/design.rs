use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sem::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Naive,
    ConfoundingAdjusted,
    InterferenceAdjusted,
    FullyAdjusted,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Naive,
        Variant::ConfoundingAdjusted,
        Variant::InterferenceAdjusted,
        Variant::FullyAdjusted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::ConfoundingAdjusted => "confounding-adjusted",
            Variant::InterferenceAdjusted => "interference-adjusted",
            Variant::FullyAdjusted => "fully-adjusted",
        }
    }

    pub fn uses_features(self) -> bool {
        matches!(self, Variant::InterferenceAdjusted | Variant::FullyAdjusted)
    }

    pub fn uses_adjustment(self) -> bool {
        matches!(self, Variant::ConfoundingAdjusted | Variant::FullyAdjusted)
    }

    /// Pairs the variant with an adjustment set, dropped when the variant does not adjust.
    pub fn with_adjustment(self, z: &[String]) -> RegressorSpec {
        match self {
            Variant::Naive => RegressorSpec::Naive,
            Variant::ConfoundingAdjusted => RegressorSpec::ConfoundingAdjusted(z.to_vec()),
            Variant::InterferenceAdjusted => RegressorSpec::InterferenceAdjusted,
            Variant::FullyAdjusted => RegressorSpec::FullyAdjusted(z.to_vec()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "naive" => Variant::Naive,
            "confounding" | "confounding-adjusted" => Variant::ConfoundingAdjusted,
            "interference" | "interference-adjusted" => Variant::InterferenceAdjusted,
            "full" | "fully-adjusted" => Variant::FullyAdjusted,
            other => {
                return Err(Error::Config(format!(
                    "unknown variant `{other}` (expected naive, confounding, interference or full)"
                )))
            }
        })
    }
}

/// Regressors of one estimator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorSpec {
    Naive,
    ConfoundingAdjusted(Vec<String>),
    InterferenceAdjusted,
    FullyAdjusted(Vec<String>),
}

impl RegressorSpec {
    pub fn variant(&self) -> Variant {
        match self {
            RegressorSpec::Naive => Variant::Naive,
            RegressorSpec::ConfoundingAdjusted(_) => Variant::ConfoundingAdjusted,
            RegressorSpec::InterferenceAdjusted => Variant::InterferenceAdjusted,
            RegressorSpec::FullyAdjusted(_) => Variant::FullyAdjusted,
        }
    }

    pub fn adjustment(&self) -> &[String] {
        match self {
            RegressorSpec::ConfoundingAdjusted(z) | RegressorSpec::FullyAdjusted(z) => z,
            _ => &[],
        }
    }
}

/// Design matrix with columns `(1, X_1..X_P, W, O_1..O_P, Z...)`, where the
/// feature blocks are present only for variants that use them.
#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub response: DVector<f64>,
    pub columns: Vec<String>,
    pub variant: Variant,
    pub adjustment: Vec<String>,
    /// Number of features in the data, whether or not they are regressors.
    pub n_features: usize,
}

impl Design {
    fn has_features(&self) -> bool {
        self.variant.uses_features()
    }

    pub fn treatment_column(&self) -> usize {
        if self.has_features() {
            1 + self.n_features
        } else {
            1
        }
    }

    /// Columns holding `alpha0` (intercept, features); `None` where absent.
    pub fn alpha0_columns(&self) -> Vec<Option<usize>> {
        (0..=self.n_features)
            .map(|k| match k {
                0 => Some(0),
                _ if self.has_features() => Some(k),
                _ => None,
            })
            .collect()
    }

    /// Columns holding `alpha1` (treatment, interactions); `None` where absent.
    pub fn alpha1_columns(&self) -> Vec<Option<usize>> {
        let w = self.treatment_column();
        (0..=self.n_features)
            .map(|k| match k {
                0 => Some(w),
                _ if self.has_features() => Some(w + k),
                _ => None,
            })
            .collect()
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }
}

fn is_exposure_or_outcome(name: &str) -> bool {
    let numbered = |prefix: char| {
        name.strip_prefix(prefix)
            .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
    };
    name == "W" || name == "Y" || numbered('X') || numbered('O')
}

pub fn build_design(ds: &Dataset, spec: &RegressorSpec) -> Result<Design> {
    let n = ds.n_units();
    let p = ds.n_features();
    let variant = spec.variant();
    let z = spec.adjustment();
    let mut z_cols = Vec::with_capacity(z.len());
    for name in z {
        if is_exposure_or_outcome(name) {
            return Err(Error::InvalidInput(format!(
                "adjustment column `{name}` overlaps the exposure or outcome"
            )));
        }
        let col = ds.covariate(name).ok_or_else(|| {
            Error::InvalidInput(format!("adjustment column `{name}` not in the data"))
        })?;
        if z_cols.iter().any(|(c, _): &(String, Vec<f64>)| c == name) {
            return Err(Error::InvalidInput(format!(
                "adjustment column `{name}` listed twice"
            )));
        }
        z_cols.push((name.clone(), col));
    }
    if variant.uses_features() && p == 0 {
        return Err(Error::InvalidInput(format!(
            "{variant} estimator needs feature columns X1.."
        )));
    }
    let mut columns = vec!["intercept".to_string()];
    let mut data: Vec<Vec<f64>> = vec![vec![1.0; n]];
    if variant.uses_features() {
        for k in 0..p {
            columns.push(format!("X{}", k + 1));
            data.push(ds.x.column(k).iter().copied().collect());
        }
    }
    columns.push("W".into());
    data.push(ds.w.iter().map(|&w| f64::from(w)).collect());
    if variant.uses_features() {
        for k in 0..p {
            columns.push(format!("O{}", k + 1));
            data.push(ds.o.column(k).iter().copied().collect());
        }
    }
    for (name, col) in z_cols {
        columns.push(name);
        data.push(col);
    }
    let matrix = DMatrix::from_fn(n, data.len(), |i, j| data[j][i]);
    Ok(Design {
        matrix,
        response: DVector::from_column_slice(&ds.y),
        columns,
        variant,
        adjustment: z.to_vec(),
        n_features: p,
    })
}
