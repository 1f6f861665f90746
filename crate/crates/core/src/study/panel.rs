//! Unit-by-period panels with a unit-level adjacency.
//!
//! Each `(unit, period)` pair becomes one unit of the estimator. Its features
//! are computed from the treatments of the neighbouring units in the same
//! period, so the panel network is block diagonal over periods.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    closed_form_weights_over, estimate, estimate_tau, select_adjustment, AdjustOptions,
    AdjustmentSelection, EstimateReport, Variant, Weights,
};
use crate::features::{interactions, FeatureKind, FeatureMap, FeatureSpec};
use crate::graph::Dag;
use crate::network::InteractionNetwork;
use crate::rng::{self, tag};
use crate::sem::Dataset;

/// Column `name` at period `t` takes the value of `source` at `t + shift`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftedColumn {
    pub name: String,
    pub source: String,
    pub shift: i64,
}

fn default_features() -> FeatureSpec {
    FeatureSpec::single(FeatureKind::FracTreatedParents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    /// Integer column with 1-based unit indices into the adjacency.
    pub unit: String,
    /// Integer period column.
    pub period: String,
    pub treatment: String,
    pub outcome: ShiftedColumn,
    #[serde(default)]
    pub derived: Vec<ShiftedColumn>,
    /// Columns passed through unchanged as covariates.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_features")]
    pub features: FeatureSpec,
}

impl PanelSchema {
    /// Weekly canton layout: outcome two periods ahead and the source series
    /// two periods back as an information covariate.
    pub fn weekly() -> Self {
        PanelSchema {
            unit: "canton".into(),
            period: "week".into(),
            treatment: "W".into(),
            outcome: ShiftedColumn {
                name: "Y".into(),
                source: "G".into(),
                shift: 2,
            },
            derived: vec![ShiftedColumn {
                name: "J".into(),
                source: "G".into(),
                shift: -2,
            }],
            covariates: ["D_1", "D_2", "H", "M_1", "P_1"].map(String::from).to_vec(),
            features: default_features(),
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn source_columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = vec![&self.treatment, &self.outcome.source];
        for d in &self.derived {
            cols.push(&d.source);
        }
        for c in &self.covariates {
            cols.push(c);
        }
        let mut seen = HashSet::new();
        cols.retain(|c| seen.insert(*c));
        cols
    }
}

#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub schema: PanelSchema,
    /// One row per retained `(unit, period)`.
    pub dataset: Dataset,
    /// Features over every observed row, including dropped ones.
    pub map: FeatureMap,
    /// Indices of the retained rows in `map`.
    pub kept: Vec<usize>,
    /// 0-based unit of each retained row.
    pub units: Vec<usize>,
    pub periods: Vec<i64>,
    pub n_units: usize,
    /// Rows dropped because a shifted column was undefined.
    pub dropped: usize,
}

impl PanelDataset {
    pub fn n_rows(&self) -> usize {
        self.kept.len()
    }
}

struct RawPanel {
    unit: Vec<usize>,
    period: Vec<i64>,
    values: Vec<Vec<f64>>,
}

fn read_raw(
    data: &str,
    origin: &str,
    schema: &PanelSchema,
    n_units: usize,
) -> Result<(RawPanel, Vec<String>)> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(data.as_bytes());
    let headers = rd.headers()?.clone();
    let find = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::InvalidInput(format!("{origin}: missing column `{c}`")))
    };
    let unit_col = find(&schema.unit)?;
    let period_col = find(&schema.period)?;
    let names: Vec<String> = schema
        .source_columns()
        .into_iter()
        .map(String::from)
        .collect();
    let cols: Vec<usize> = names.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut raw = RawPanel {
        unit: Vec::new(),
        period: Vec::new(),
        values: Vec::new(),
    };
    let mut seen = HashSet::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let u: usize = field(unit_col)
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad unit `{}`", field(unit_col))))?;
        if u == 0 || u > n_units {
            return Err(Error::parse(
                origin,
                line,
                format!("unit {u} is not in the adjacency (1..={n_units})"),
            ));
        }
        let t: i64 = field(period_col).parse().map_err(|_| {
            Error::parse(origin, line, format!("bad period `{}`", field(period_col)))
        })?;
        if !seen.insert((u - 1, t)) {
            return Err(Error::parse(
                origin,
                line,
                format!("duplicate row for unit {u}, period {t}"),
            ));
        }
        let vals: Vec<f64> = cols
            .iter()
            .zip(&names)
            .map(|(&c, name)| {
                field(c).parse::<f64>().map_err(|_| {
                    Error::parse(
                        origin,
                        line,
                        format!("bad value `{}` in column `{name}`", field(c)),
                    )
                })
            })
            .collect::<Result<_>>()?;
        raw.unit.push(u - 1);
        raw.period.push(t);
        raw.values.push(vals);
    }
    Ok((raw, names))
}

/// Builds the estimator rows of a panel.
pub fn ingest_panel(
    data_csv: &str,
    adjacency_tsv: &str,
    schema: &PanelSchema,
) -> Result<PanelDataset> {
    ingest_panel_named(data_csv, "panel data", adjacency_tsv, "adjacency", schema)
}

pub fn ingest_panel_files(
    data: &Path,
    adjacency: &Path,
    schema: &PanelSchema,
) -> Result<PanelDataset> {
    ingest_panel_named(
        &std::fs::read_to_string(data)?,
        &data.display().to_string(),
        &std::fs::read_to_string(adjacency)?,
        &adjacency.display().to_string(),
        schema,
    )
}

fn ingest_panel_named(
    data_csv: &str,
    data_origin: &str,
    adjacency_tsv: &str,
    adjacency_origin: &str,
    schema: &PanelSchema,
) -> Result<PanelDataset> {
    let net = InteractionNetwork::parse_tsv(adjacency_tsv, adjacency_origin)?;
    let n_units = net.n_units();
    let (raw, names) = read_raw(data_csv, data_origin, schema, n_units)?;
    if raw.unit.is_empty() {
        return Err(Error::InvalidInput(format!("{data_origin}: no rows")));
    }
    let present: HashSet<usize> = raw.unit.iter().copied().collect();
    if let Some(u) = (0..n_units).find(|u| !present.contains(u)) {
        return Err(Error::InvalidInput(format!(
            "{adjacency_origin}: unit {} has no rows in the panel",
            u + 1
        )));
    }

    // Rows ordered by (period, unit).
    let mut order: Vec<usize> = (0..raw.unit.len()).collect();
    order.sort_by_key(|&r| (raw.period[r], raw.unit[r]));
    let index: HashMap<(usize, i64), usize> = order
        .iter()
        .enumerate()
        .map(|(k, &r)| ((raw.unit[r], raw.period[r]), k))
        .collect();
    let col = |name: &str| names.iter().position(|c| c == name).unwrap();

    let w_col = col(&schema.treatment);
    let w: Vec<u8> = order
        .iter()
        .map(|&r| {
            let v = raw.values[r][w_col];
            if v == 0.0 || v == 1.0 {
                Ok(v as u8)
            } else {
                Err(Error::InvalidInput(format!(
                    "treatment of unit {} in period {} is {v}, expected 0 or 1",
                    raw.unit[r] + 1,
                    raw.period[r]
                )))
            }
        })
        .collect::<Result<_>>()?;

    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(order.len());
    for &r in &order {
        let (u, t) = (raw.unit[r], raw.period[r]);
        let mut ps = Vec::new();
        for &j in net.parents_of(u) {
            let k = index.get(&(j, t)).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unit {} neighbours unit {} but has no row for period {t}",
                    j + 1,
                    u + 1
                ))
            })?;
            ps.push(*k);
        }
        ps.sort_unstable();
        parents.push(ps);
    }
    let block = InteractionNetwork::from_sorted_parents(parents);
    let map = FeatureMap::new(&block, &schema.features)?;
    let x_all = map.compute(&w)?;

    let shifted = |k: usize, s: &ShiftedColumn| -> Option<f64> {
        let r = order[k];
        index
            .get(&(raw.unit[r], raw.period[r] + s.shift))
            .map(|&k2| raw.values[order[k2]][col(&s.source)])
    };
    let mut kept = Vec::new();
    let mut y = Vec::new();
    let mut derived: Vec<Vec<f64>> = Vec::new();
    for k in 0..order.len() {
        let Some(yk) = shifted(k, &schema.outcome) else {
            continue;
        };
        let d: Option<Vec<f64>> = schema.derived.iter().map(|s| shifted(k, s)).collect();
        let Some(d) = d else { continue };
        kept.push(k);
        y.push(yk);
        derived.push(d);
    }
    if kept.is_empty() {
        return Err(Error::InvalidInput(
            "no rows left after constructing shifted columns".into(),
        ));
    }

    let mut covariate_names = schema.covariates.clone();
    covariate_names.extend(schema.derived.iter().map(|d| d.name.clone()));
    let nc = covariate_names.len();
    let covariates = DMatrix::from_fn(kept.len(), nc, |i, c| {
        if c < schema.covariates.len() {
            raw.values[order[kept[i]]][col(&schema.covariates[c])]
        } else {
            derived[i][c - schema.covariates.len()]
        }
    });
    let wk: Vec<u8> = kept.iter().map(|&k| w[k]).collect();
    let x = DMatrix::from_fn(kept.len(), x_all.ncols(), |i, c| x_all[(kept[i], c)]);
    let o = interactions(&x, &wk);
    let dataset = Dataset {
        covariate_names,
        covariates,
        w: wk,
        x,
        o,
        y,
    };
    Ok(PanelDataset {
        schema: schema.clone(),
        dropped: order.len() - kept.len(),
        units: kept.iter().map(|&k| raw.unit[order[k]]).collect(),
        periods: kept.iter().map(|&k| raw.period[order[k]]).collect(),
        dataset,
        map,
        kept,
        n_units,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservationalReport {
    pub selection: AdjustmentSelection,
    pub weights: Weights,
    pub n_rows: usize,
    pub dropped: usize,
    pub estimates: Vec<EstimateReport>,
}

/// Runs each estimator on the panel. The adjustment set is the smallest valid
/// one among the graph nodes that have data columns.
pub fn run_observational(
    pd: &PanelDataset,
    g: &Dag,
    variants: &[Variant],
    pi: f64,
    eta: f64,
    level: f64,
) -> Result<ObservationalReport> {
    let opts = AdjustOptions {
        level,
        ..AdjustOptions::default()
    };
    let selection = select_adjustment(&pd.dataset, g, &opts)?;
    let z = selection.columns(&pd.dataset);
    let weights = closed_form_weights_over(&pd.map, &pd.kept, pi, eta)?;
    let estimates = variants
        .iter()
        .map(|v| estimate(&pd.dataset, &v.with_adjustment(&z), &weights, level))
        .collect::<Result<_>>()?;
    Ok(ObservationalReport {
        selection,
        weights,
        n_rows: pd.n_rows(),
        dropped: pd.dropped,
        estimates,
    })
}

/// Generic graph of the weekly panel. `E` has no data column.
pub const PANEL_GRAPH: &str = "\
node D role=covariate
node H role=covariate
node E role=covariate
node J role=covariate
node M role=covariate
node P role=covariate
node W role=treatment
node X role=feature
node O role=interaction
node Y role=outcome
D -> W
D -> P
D -> J
D -> Y
H -> Y
H -> W
H -> P
E -> W
E -> P
J -> W
J -> P
J -> Y
M -> Y
P -> Y
W -> O
X -> O
X -> Y
W -> Y
O -> Y
";

pub fn panel_graph() -> Dag {
    Dag::parse_text(PANEL_GRAPH, "panel graph").expect("built-in panel graph parses")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureOptions {
    pub units: usize,
    pub periods: usize,
    /// Each unit is linked to its `neighbours` nearest units, symmetrised.
    pub neighbours: usize,
    /// Scales the effects of the confounders `H` and `E`.
    pub confounding: f64,
    pub alpha0: [f64; 2],
    pub alpha1: [f64; 2],
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            units: 26,
            periods: 24,
            neighbours: 3,
            confounding: 1.0,
            alpha0: [1.0, -0.5],
            alpha1: [-0.8, -0.4],
        }
    }
}

/// A synthetic panel generated from a known linear model on the panel graph.
#[derive(Debug, Clone)]
pub struct PanelFixture {
    pub data_csv: String,
    pub adjacency_tsv: String,
    pub schema: PanelSchema,
    pub graph: Dag,
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn knn_network(n: usize, k: usize, rng: &mut impl Rng) -> Result<InteractionNetwork> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut by_dist: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let d = |j: usize| (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
        by_dist.sort_by(|&a, &b| d(a).total_cmp(&d(b)));
        for &j in by_dist.iter().take(k) {
            edges.insert((i, j));
            edges.insert((j, i));
        }
    }
    InteractionNetwork::new(n, edges)
}

impl PanelFixture {
    pub fn generate(opts: &FixtureOptions, seed: u64) -> Result<PanelFixture> {
        if opts.units < 2
            || opts.neighbours == 0
            || opts.neighbours >= opts.units
            || opts.periods < 5
        {
            return Err(Error::InvalidInput(
                "fixture needs >= 2 units, 1 <= neighbours < units and >= 5 periods".into(),
            ));
        }
        let mut r = rng::stream(seed, &[tag::FIXTURE]);
        let net = knn_network(opts.units, opts.neighbours, &mut r)?;
        let (n, tn) = (opts.units, opts.periods);
        let c = opts.confounding;
        let z = |r: &mut rng::SimRng| -> f64 { r.sample(StandardNormal) };
        let h: Vec<f64> = (0..n).map(|_| z(&mut r)).collect();
        // g[t][i], periods 1..=tn stored at index t - 1.
        let mut g = vec![vec![0.0; n]; tn];
        for row in g.iter_mut().take(2) {
            for v in row.iter_mut() {
                *v = z(&mut r);
            }
        }
        let mut csv = String::from("canton,week,W,G,H,D_1,D_2,M_1,P_1\n");
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for t in 0..tn {
            let d1: Vec<f64> = (0..n).map(|_| z(&mut r)).collect();
            let d2: Vec<f64> = (0..n).map(|_| z(&mut r)).collect();
            let m1: Vec<f64> = (0..n).map(|_| z(&mut r)).collect();
            let e: Vec<f64> = (0..n).map(|_| z(&mut r)).collect();
            let j: Vec<f64> = (0..n)
                .map(|i| if t >= 2 { g[t - 2][i] } else { z(&mut r) })
                .collect();
            let mut w = vec![0u8; n];
            for i in 0..n {
                let lin = 0.5 * d1[i] - 0.3 * d2[i] + c * (0.8 * h[i] + 0.6 * e[i]) + 0.2 * j[i];
                w[i] = u8::from(r.random::<f64>() < logistic(lin));
            }
            let mut p1 = vec![0.0; n];
            for i in 0..n {
                let ps = net.parents_of(i);
                let x = ps.iter().filter(|&&q| w[q] == 1).count() as f64 / ps.len() as f64;
                p1[i] = 0.5 * d1[i] + 0.4 * h[i] + c * 0.8 * e[i] + 0.3 * j[i] + z(&mut r);
                let y = opts.alpha0[0]
                    + opts.alpha0[1] * x
                    + f64::from(w[i]) * (opts.alpha1[0] + opts.alpha1[1] * x)
                    + 0.5 * d1[i]
                    - 0.5 * d2[i]
                    + c * 1.5 * h[i]
                    + 0.4 * m1[i]
                    + 0.6 * p1[i]
                    + 0.3 * j[i]
                    + z(&mut r);
                if t + 2 < tn {
                    g[t + 2][i] = y;
                }
            }
            for i in 0..n {
                rows.push(vec![
                    (i + 1) as f64,
                    (t + 1) as f64,
                    f64::from(w[i]),
                    g[t][i],
                    h[i],
                    d1[i],
                    d2[i],
                    m1[i],
                    p1[i],
                ]);
            }
        }
        for row in rows {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                row[0],
                row[1],
                row[2],
                row[3..]
                    .iter()
                    .map(|v| format!("{v:.10}"))
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
        Ok(PanelFixture {
            data_csv: csv,
            adjacency_tsv: net.write_tsv(),
            schema: PanelSchema::weekly(),
            graph: panel_graph(),
            alpha0: opts.alpha0.to_vec(),
            alpha1: opts.alpha1.to_vec(),
        })
    }

    /// True effect of the policy pair on the retained rows.
    pub fn true_tau(&self, pd: &PanelDataset, pi: f64, eta: f64) -> Result<f64> {
        let w = closed_form_weights_over(&pd.map, &pd.kept, pi, eta)?;
        estimate_tau(&self.alpha0, &self.alpha1, &w)
    }

    pub fn ingest(&self) -> Result<PanelDataset> {
        ingest_panel(&self.data_csv, &self.adjacency_tsv, &self.schema)
    }

    /// Writes `panel.csv`, `adjacency.tsv`, `schema.toml` and `panel.dag`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("panel.csv"), &self.data_csv)?;
        std::fs::write(dir.join("adjacency.tsv"), &self.adjacency_tsv)?;
        std::fs::write(dir.join("schema.toml"), self.schema.to_toml_string()?)?;
        std::fs::write(dir.join("panel.dag"), self.graph.to_text())?;
        let truth: BTreeMap<&str, &Vec<f64>> =
            [("alpha0", &self.alpha0), ("alpha1", &self.alpha1)].into();
        std::fs::write(
            dir.join("truth.json"),
            serde_json::to_string_pretty(&truth)?,
        )?;
        Ok(())
    }
}
