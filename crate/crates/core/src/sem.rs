//! Explicit structural equation models with interference features, data
//! simulation, and ground-truth effect oracles.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Weights;
use crate::features::{interactions, FeatureMap};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    /// Symmetric uniform with the configured variance, i.e. on `(-sqrt(3v), sqrt(3v))`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    pub kind: NoiseKind,
    pub variance: f64,
}

impl Noise {
    pub fn gaussian(variance: f64) -> Self {
        Noise {
            kind: NoiseKind::Gaussian,
            variance,
        }
    }

    pub fn uniform(variance: f64) -> Self {
        Noise {
            kind: NoiseKind::Uniform,
            variance,
        }
    }

    pub fn sampler(&self) -> Result<NoiseSampler> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance {} must be finite and >= 0",
                self.variance
            )));
        }
        let sd = self.variance.sqrt();
        Ok(match self.kind {
            _ if sd == 0.0 => NoiseSampler::Zero,
            NoiseKind::Gaussian => NoiseSampler::Gaussian(
                Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?,
            ),
            NoiseKind::Uniform => {
                let h = sd * 3f64.sqrt();
                NoiseSampler::Uniform(
                    Uniform::new(-h, h).map_err(|e| Error::Config(e.to_string()))?,
                )
            }
        })
    }
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::Gaussian => write!(f, "N(0, {})", self.variance),
            NoiseKind::Uniform => {
                let h = (3.0 * self.variance).sqrt();
                write!(f, "U(-{h:.6}, {h:.6})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NoiseSampler {
    Zero,
    Gaussian(Normal<f64>),
    Uniform(Uniform<f64>),
}

impl NoiseSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::Zero => 0.0,
            NoiseSampler::Gaussian(d) => d.sample(rng),
            NoiseSampler::Uniform(d) => d.sample(rng),
        }
    }
}

/// `C_k = intercept + sum_j coefs[j] * C_j + noise`, over earlier covariates `j < k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateEquation {
    pub name: String,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub coefs: Vec<f64>,
    pub noise: Noise,
}

/// `P(W = 1 | C) = 1 / (1 + exp(-(intercept + coefs . C)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentModel {
    #[serde(default)]
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemConfig {
    pub covariates: Vec<CovariateEquation>,
    pub treatment: TreatmentModel,
    /// Coefficients of `(1, X)`.
    pub alpha0: Vec<f64>,
    /// Coefficients of `(W, O)`.
    pub alpha1: Vec<f64>,
    /// Coefficients of the covariates in the outcome.
    pub gamma: Vec<f64>,
    pub outcome_noise: Noise,
}

impl SemConfig {
    /// Three covariates `C1 = -2 + e`, `C2 = 2 C1 + e`, `C3 = 0.5 + e`,
    /// logistic treatment on `C2 + 5 C3`, outcome loading `1.5` on `C1` and
    /// unit-variance uniform outcome noise.
    pub fn example(alpha0: Vec<f64>, alpha1: Vec<f64>) -> Self {
        let cov = |name: &str, intercept: f64, coefs: Vec<f64>| CovariateEquation {
            name: name.into(),
            intercept,
            coefs,
            noise: Noise::gaussian(1.0),
        };
        SemConfig {
            covariates: vec![
                cov("C1", -2.0, vec![]),
                cov("C2", 0.0, vec![2.0]),
                cov("C3", 0.5, vec![0.0, 0.0]),
            ],
            treatment: TreatmentModel {
                intercept: 0.0,
                coefs: vec![0.0, 1.0, 5.0],
            },
            alpha0,
            alpha1,
            gamma: vec![1.5, 0.0, 0.0],
            outcome_noise: Noise::uniform(1.0),
        }
    }

    /// Number of interference features implied by the coefficient vectors.
    pub fn n_features(&self) -> usize {
        self.alpha0.len().saturating_sub(1)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.alpha0.len() != self.alpha1.len() {
            return Err(Error::Dimension(format!(
                "alpha0 has {} entries, alpha1 has {}",
                self.alpha0.len(),
                self.alpha1.len()
            )));
        }
        if self.alpha0.len() != n_features + 1 {
            return Err(Error::Dimension(format!(
                "alpha vectors need {} entries for {n_features} feature(s), got {}",
                n_features + 1,
                self.alpha0.len()
            )));
        }
        let k = self.covariates.len();
        if self.gamma.len() != k || self.treatment.coefs.len() != k {
            return Err(Error::Dimension(format!(
                "{k} covariates but gamma has {} and the treatment model {} coefficients",
                self.gamma.len(),
                self.treatment.coefs.len()
            )));
        }
        for (j, c) in self.covariates.iter().enumerate() {
            if c.coefs.len() > j {
                return Err(Error::Config(format!(
                    "covariate `{}` may only depend on the {j} covariate(s) before it",
                    c.name
                )));
            }
            c.noise.sampler()?;
        }
        let mut names = self.covariate_names();
        names.sort();
        names.dedup();
        if names.len() != k {
            return Err(Error::Config("covariate names must be unique".into()));
        }
        self.outcome_noise.sampler()?;
        let all: Vec<f64> = self
            .alpha0
            .iter()
            .chain(&self.alpha1)
            .chain(&self.gamma)
            .chain(&self.treatment.coefs)
            .copied()
            .collect();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite model coefficient".into()));
        }
        Ok(())
    }
}

/// One row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    /// `N x k`
    pub covariates: DMatrix<f64>,
    pub w: Vec<u8>,
    /// `N x P`
    pub x: DMatrix<f64>,
    /// `N x P`, equal to `W_i X_i`.
    pub o: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn n_units(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn covariate(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.covariate_names.iter().position(|c| c == name)?;
        Some(self.covariates.column(k).iter().copied().collect())
    }

    /// Replaces `X` and `O` with features computed from the treatments.
    pub fn attach_features(&mut self, map: &FeatureMap) -> Result<()> {
        if map.n_units() != self.n_units() {
            return Err(Error::Dimension(format!(
                "network has {} units, data has {}",
                map.n_units(),
                self.n_units()
            )));
        }
        self.x = map.compute(&self.w)?;
        self.o = interactions(&self.x, &self.w);
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        let p = self.n_features();
        let mut header = vec!["unit".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        header.push("W".into());
        header.extend((1..=p).map(|k| format!("X{k}")));
        header.extend((1..=p).map(|k| format!("O{k}")));
        header.push("Y".into());
        wr.write_record(&header)?;
        for i in 0..self.n_units() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(self.covariates.row(i).iter().map(|v| v.to_string()));
            row.push(self.w[i].to_string());
            row.extend(self.x.row(i).iter().map(|v| v.to_string()));
            row.extend(self.o.row(i).iter().map(|v| v.to_string()));
            row.push(self.y[i].to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a dataset. `W` and `Y` are required; `X1..`, `O1..` are
    /// optional (missing `O` is rebuilt from `W` and `X`); every other column
    /// except `unit` is a covariate. Rows must be ordered by unit.
    pub fn read_csv<R: std::io::Read>(input: R, origin: &str) -> Result<Dataset> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let find = |name: &str| header.iter().position(|h| h == name);
        let w_col = find("W")
            .ok_or_else(|| Error::InvalidInput(format!("{origin}: missing column `W`")))?;
        let y_col = find("Y")
            .ok_or_else(|| Error::InvalidInput(format!("{origin}: missing column `Y`")))?;
        let unit_col = find("unit");
        let numbered = |prefix: char| -> Vec<usize> {
            let mut cols = Vec::new();
            for k in 1.. {
                match find(&format!("{prefix}{k}")) {
                    Some(c) => cols.push(c),
                    None => break,
                }
            }
            cols
        };
        let x_cols = numbered('X');
        let o_cols = numbered('O');
        if !o_cols.is_empty() && o_cols.len() != x_cols.len() {
            return Err(Error::InvalidInput(format!(
                "{origin}: {} X columns but {} O columns",
                x_cols.len(),
                o_cols.len()
            )));
        }
        let special: Vec<usize> = [Some(w_col), Some(y_col), unit_col]
            .into_iter()
            .flatten()
            .chain(x_cols.iter().copied())
            .chain(o_cols.iter().copied())
            .collect();
        let cov_cols: Vec<usize> = (0..header.len()).filter(|c| !special.contains(c)).collect();

        let mut cov = Vec::new();
        let (mut w, mut y, mut x, mut o) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = r + 2;
            let num = |c: usize| -> Result<f64> {
                let s = rec.get(c).unwrap_or("").trim();
                s.parse::<f64>().map_err(|_| {
                    Error::parse(
                        origin,
                        line,
                        format!("column `{}`: bad number `{s}`", header[c]),
                    )
                })
            };
            if let Some(c) = unit_col {
                let u = num(c)?;
                if u != (r + 1) as f64 {
                    return Err(Error::parse(
                        origin,
                        line,
                        format!("expected unit {}, found {u}", r + 1),
                    ));
                }
            }
            let wv = num(w_col)?;
            if wv != 0.0 && wv != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "{origin}:{line}: treatment must be 0 or 1, found {wv}"
                )));
            }
            w.push(wv as u8);
            y.push(num(y_col)?);
            for &c in &cov_cols {
                cov.push(num(c)?);
            }
            for &c in &x_cols {
                x.push(num(c)?);
            }
            for &c in &o_cols {
                o.push(num(c)?);
            }
        }
        let n = y.len();
        let p = x_cols.len();
        let x = DMatrix::from_row_slice(n, p, &x);
        let o = if o_cols.is_empty() {
            interactions(&x, &w)
        } else {
            let o = DMatrix::from_row_slice(n, p, &o);
            if (&o - interactions(&x, &w)).amax() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "{origin}: O columns differ from W * X"
                )));
            }
            o
        };
        Ok(Dataset {
            covariate_names: cov_cols.iter().map(|&c| header[c].clone()).collect(),
            covariates: DMatrix::from_row_slice(n, cov_cols.len(), &cov),
            w,
            x,
            o,
            y,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        Dataset::read_csv(std::fs::File::open(path)?, &path.display().to_string())
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Covariates and outcome noise for all units, drawn unit by unit.
struct Exogenous {
    covariates: DMatrix<f64>,
    propensity: Vec<f64>,
    outcome_noise: Vec<f64>,
}

fn draw_exogenous<R: Rng + ?Sized>(cfg: &SemConfig, n: usize, rng: &mut R) -> Result<Exogenous> {
    let k = cfg.covariates.len();
    let samplers: Vec<NoiseSampler> = cfg
        .covariates
        .iter()
        .map(|c| c.noise.sampler())
        .collect::<Result<_>>()?;
    let y_noise = cfg.outcome_noise.sampler()?;
    let mut covariates = DMatrix::zeros(n, k);
    let mut propensity = Vec::with_capacity(n);
    let mut outcome_noise = Vec::with_capacity(n);
    let mut c = vec![0.0; k];
    for i in 0..n {
        for (j, eq) in cfg.covariates.iter().enumerate() {
            let lin: f64 = eq.coefs.iter().zip(&c).map(|(a, b)| a * b).sum();
            c[j] = eq.intercept + lin + samplers[j].draw(rng);
            covariates[(i, j)] = c[j];
        }
        let t = cfg.treatment.intercept
            + cfg
                .treatment
                .coefs
                .iter()
                .zip(&c)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        propensity.push(logistic(t));
        outcome_noise.push(y_noise.draw(rng));
    }
    Ok(Exogenous {
        covariates,
        propensity,
        outcome_noise,
    })
}

fn outcomes(cfg: &SemConfig, ex: &Exogenous, w: &[u8], x: &DMatrix<f64>) -> Vec<f64> {
    let p = x.ncols();
    (0..w.len())
        .map(|i| {
            let wi = f64::from(w[i]);
            let mut y = cfg.alpha0[0] + cfg.alpha1[0] * wi;
            for k in 0..p {
                y += (cfg.alpha0[k + 1] + wi * cfg.alpha1[k + 1]) * x[(i, k)];
            }
            y + cfg
                .gamma
                .iter()
                .zip(ex.covariates.row(i).iter())
                .map(|(g, c)| g * c)
                .sum::<f64>()
                + ex.outcome_noise[i]
        })
        .collect()
}

/// Draws one dataset. Covariates and noise are drawn unit by unit first,
/// then treatments.
pub fn simulate<R: Rng + ?Sized>(
    cfg: &SemConfig,
    map: &FeatureMap,
    rng: &mut R,
) -> Result<Dataset> {
    cfg.validate(map.n_features())?;
    let ex = draw_exogenous(cfg, map.n_units(), rng)?;
    let w: Vec<u8> = ex
        .propensity
        .iter()
        .map(|&p| u8::from(rng.random_bool(p)))
        .collect();
    let x = map.compute(&w)?;
    let o = interactions(&x, &w);
    let y = outcomes(cfg, &ex, &w, &x);
    Ok(Dataset {
        covariate_names: cfg.covariate_names(),
        covariates: ex.covariates,
        w,
        x,
        o,
        y,
    })
}

/// `omega0 . alpha0 + omega1 . (alpha0 + alpha1)`.
pub fn true_tau(cfg: &SemConfig, weights: &Weights) -> Result<f64> {
    crate::estimator::estimate_tau(&cfg.alpha0, &cfg.alpha1, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub tau: f64,
    pub se: f64,
    pub reps: usize,
}

/// Brute-force effect: average outcome with treatments forced iid `Bern(pi)`
/// minus the same with `Bern(eta)`, over `reps` full draws of the model on a
/// fixed network. Both arms share covariates and noise within a draw.
pub fn mc_tau_oracle(
    cfg: &SemConfig,
    map: &FeatureMap,
    pi: f64,
    eta: f64,
    reps: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    cfg.validate(map.n_features())?;
    check_probability(pi)?;
    check_probability(eta)?;
    if reps == 0 {
        return Err(Error::Config(
            "oracle needs at least one replication".into(),
        ));
    }
    let n = map.n_units();
    let diffs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, &[tag::ORACLE, r as u64]);
            let ex = draw_exogenous(cfg, n, &mut rng)?;
            let mut arm = |theta: f64| -> Result<f64> {
                let w: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(theta))).collect();
                let x = map.compute(&w)?;
                Ok(outcomes(cfg, &ex, &w, &x).iter().sum::<f64>() / n as f64)
            };
            Ok(arm(pi)? - arm(eta)?)
        })
        .collect::<Result<_>>()?;
    let (mean, var) = mean_var(&diffs);
    Ok(OracleEstimate {
        tau: mean,
        se: (var / reps as f64).sqrt(),
        reps,
    })
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )))
    }
}

/// Mean and unbiased variance (0 for a single value).
pub(crate) fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    (
        mean,
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0),
    )
}
