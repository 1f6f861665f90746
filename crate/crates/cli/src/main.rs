use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use netfx::depgraph::{degree_scaling_slope, dependency_graph};
use netfx::error::{Error, ErrorClass, Result};
use netfx::estimator::{
    adjust_and_estimate, default_weights, estimate, AdjustChoice, AdjustOptions, EstimateReport,
    Variant, Weights,
};
use netfx::features::{FeatureMap, FeatureSpec};
use netfx::generators::NetworkGenerator;
use netfx::graph::{Dag, NodeSet};
use netfx::network::InteractionNetwork;
use netfx::rng;
use netfx::sem::{simulate, Dataset};
use netfx::study::panel::{
    ingest_panel_files, run_observational, FixtureOptions, PanelFixture, PanelSchema,
};
use netfx::study::{normality_diagnostic, run_study, write_outputs, StudyConfig, PRESETS};

mod table;

use table::Table;

#[derive(Parser)]
#[command(
    name = "netfx",
    version,
    about = "Global treatment effects under network interference"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study and write metric tables, plots and a manifest.
    Study(StudyArgs),
    /// Estimate the effect of a policy pair from a data file.
    Estimate(EstimateArgs),
    /// Dependency graph of a network under a feature specification.
    Depgraph(DepgraphArgs),
    /// Valid adjustment sets in a generic graph.
    Adjsets(AdjsetsArgs),
    /// Test a d-separation statement.
    Dsep(DsepArgs),
    /// Log-log slope of the maximal dependency degree against N.
    Slopes(SlopesArgs),
    /// Draw a network and one data set from a study preset.
    Simulate(SimulateArgs),
    /// Run the estimators on a unit-by-period panel.
    Panel(PanelArgs),
    /// Write a synthetic weekly panel with known coefficients.
    FixturePanel(FixtureArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// TOML configuration. May name a `preset` and override its keys.
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Start from a built-in preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the normality diagnostic at each size.
    #[arg(long)]
    normality: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV with columns unit, covariates, W, X1.., O1.., Y.
    #[arg(long)]
    data: PathBuf,
    /// Interaction network; without it every unit is assumed to have affectors.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Features, comma separated (e.g. `frac-parents,frac-parents-of-parents`).
    #[arg(long, default_value = "frac-parents")]
    features: FeatureSpec,
    /// Generic graph; selects the adjustment set and runs the fully adjusted estimator.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Estimator when no graph is given.
    #[arg(long, default_value = "fully-adjusted")]
    variant: Variant,
    /// Adjustment: comma-separated columns (or graph nodes with --graph), or `auto`.
    #[arg(long, default_value = "auto")]
    adjust: String,
    /// Graph nodes to treat as unobserved.
    #[arg(long, value_delimiter = ',')]
    unobserved: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pi: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1000)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DepgraphArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long = "feature", default_value = "frac-parents")]
    features: FeatureSpec,
    /// List the edges (1-based).
    #[arg(long)]
    edges: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AdjsetsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "X,W,O")]
    exposure: Vec<String>,
    #[arg(long, default_value = "Y")]
    outcome: String,
    /// Candidate nodes; defaults to every other node.
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<String>,
}

#[derive(Args)]
struct DsepArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    a: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    b: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    given: Vec<String>,
}

#[derive(Args)]
struct SlopesArgs {
    /// e.g. `er:10/N`, `er:N^-2/3`, `er:0.2`, `family`, `lattice`.
    #[arg(long)]
    generator: NetworkGenerator,
    #[arg(long, value_delimiter = ',', default_value = "300,600,1200,2400,4800")]
    sizes: Vec<usize>,
    #[arg(long = "feature", default_value = "frac-parents")]
    features: FeatureSpec,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "er")]
    preset: String,
    /// Configuration file instead of a preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Data CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Network TSV to write.
    #[arg(long)]
    network_out: Option<PathBuf>,
}

#[derive(Args)]
struct PanelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    adjacency: PathBuf,
    /// TOML schema; defaults to the weekly layout.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Generic graph; defaults to the built-in weekly panel graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "naive,confounding,interference,full"
    )]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 1.0)]
    pi: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 26)]
    units: usize,
    #[arg(long, default_value_t = 24)]
    periods: usize,
    #[arg(long, default_value_t = 1.0)]
    confounding: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Identifiability => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Study(a) => study(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Depgraph(a) => depgraph(a),
        Command::Adjsets(a) => adjsets(a),
        Command::Dsep(a) => dsep(a),
        Command::Slopes(a) => slopes(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Panel(a) => panel(a),
        Command::FixturePanel(a) => fixture(a),
    }
}

fn load_config(config: Option<&Path>, preset: Option<&str>) -> Result<StudyConfig> {
    match (config, preset) {
        (Some(p), _) => StudyConfig::from_toml_str(&std::fs::read_to_string(p)?),
        (None, Some(name)) => StudyConfig::preset(name),
        (None, None) => Err(Error::Config(format!(
            "give --config or --preset ({})",
            PRESETS.join(", ")
        ))),
    }
}

fn study(a: StudyArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref(), a.preset.as_deref())?;
    if let Some(out) = a.out {
        cfg.output_dir = Some(out);
    }
    if a.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-out", cfg.name)));
    let result = run_study(&cfg)?;
    let files = write_outputs(&result, &dir)?;

    let mut t = Table::new([
        "variant", "N", "bias", "rmse", "log var", "coverage", "failed",
    ]);
    for c in &result.metrics.cells {
        t.row([
            c.variant.to_string(),
            c.n.to_string(),
            format!("{:.4}", c.bias),
            format!("{:.4}", c.rmse),
            format!("{:.3}", c.log_variance),
            format!("{:.3}", c.coverage),
            c.failures.to_string(),
        ]);
    }
    print!("{t}");
    for o in &result.oracle_checks {
        if !o.agrees {
            eprintln!(
                "warning: true effect {:.5} of network {} at N={} disagrees with brute force {:.5} (se {:.5})",
                o.tau, o.graph, o.n, o.oracle, o.se
            );
        }
    }
    if a.normality {
        let v = if cfg.variants.contains(&Variant::FullyAdjusted) {
            Variant::FullyAdjusted
        } else {
            cfg.variants[0]
        };
        let mut body = String::from("n,ks_uniform,band_half_width,within_band\n");
        for &n in &cfg.sizes {
            let rep = normality_diagnostic(&result, v, n, cfg.seed)?;
            body.push_str(&format!(
                "{n},{},{},{}\n",
                rep.ks_uniform, rep.band.half_width, rep.within_band
            ));
            let mut pv = String::from("graph,p_value\n");
            for (g, p) in rep.p_values.iter().enumerate() {
                pv.push_str(&format!("{g},{p}\n"));
            }
            std::fs::write(dir.join(format!("normality_p_{n}.csv")), pv)?;
        }
        std::fs::write(dir.join("normality.csv"), body)?;
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect()
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let ds = Dataset::load_csv(&a.data)?;
    let map = match &a.network {
        Some(p) => {
            let map = FeatureMap::new(&InteractionNetwork::read_tsv(p)?, &a.features)?;
            if map.n_units() != ds.n_units() || map.n_features() != ds.n_features() {
                return Err(Error::Dimension(format!(
                    "network/features ({} units, {} features) do not match the data ({} units, {} features)",
                    map.n_units(),
                    map.n_features(),
                    ds.n_units(),
                    ds.n_features()
                )));
            }
            Some(map)
        }
        None => None,
    };
    let report = match &a.graph {
        Some(gp) => {
            let g = Dag::read_text(gp)?;
            let adjust = if a.adjust == "auto" {
                AdjustChoice::Auto
            } else {
                AdjustChoice::Explicit(parse_list(&a.adjust).iter().map(String::as_str).collect())
            };
            let opts = AdjustOptions {
                adjust,
                unobserved: a.unobserved.iter().map(String::as_str).collect(),
                level: a.level,
                mc_reps: a.mc_reps,
                seed: a.seed,
            };
            adjust_and_estimate(&ds, &g, map.as_ref(), a.pi, a.eta, &opts)?
        }
        None => {
            let z = if a.adjust == "auto" {
                if a.variant.uses_adjustment() {
                    return Err(Error::InvalidInput(
                        "automatic adjustment needs --graph; otherwise list the columns with --adjust".into(),
                    ));
                }
                Vec::new()
            } else {
                parse_list(&a.adjust)
            };
            let w = match &map {
                Some(m) => default_weights(m, a.pi, a.eta, a.mc_reps, a.seed)?,
                None => Weights::assumed_exposure(ds.n_features(), a.pi, a.eta)?,
            };
            estimate(&ds, &a.variant.with_adjustment(&z), &w, a.level)?
        }
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    Ok(())
}

fn print_report(r: &EstimateReport) {
    println!("estimator   {}", r.variant);
    if let Some(s) = &r.selection {
        println!(
            "adjustment  {} ({} valid sets{})",
            s.chosen,
            s.valid_sets.len(),
            if s.automatic {
                ", chosen automatically"
            } else {
                ""
            }
        );
    } else if !r.adjustment.is_empty() {
        println!("adjustment  {}", r.adjustment.join(", "));
    }
    println!("units       {}", r.n_units);
    println!("policies    pi={} eta={}", r.weights.pi, r.weights.eta);
    println!("tau         {:.6}", r.tau_hat);
    println!("std error   {:.6}", r.std_error);
    println!(
        "{:.0}% CI     ({:.6}, {:.6})",
        100.0 * r.level,
        r.ci.0,
        r.ci.1
    );
    println!("condition   {:.3e}", r.diagnostics.condition_number);
    if let Some(d) = r.diagnostics.max_degree {
        println!("max degree  {d}");
    }
    let mut t = Table::new(["column", "coefficient"]);
    for (c, v) in r.columns.iter().zip(&r.alpha_full_hat) {
        t.row([c.clone(), format!("{v:.6}")]);
    }
    print!("{t}");
}

#[derive(Serialize)]
struct DepgraphSummary {
    n_units: usize,
    n_edges: usize,
    max_degree: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize)>>,
}

fn depgraph(a: DepgraphArgs) -> Result<()> {
    let net = InteractionNetwork::read_tsv(&a.network)?;
    let d = dependency_graph(&net, &a.features)?;
    if a.json {
        let summary = DepgraphSummary {
            n_units: d.n_units(),
            n_edges: d.n_edges(),
            max_degree: d.max_degree(),
            edges: a
                .edges
                .then(|| d.edges().into_iter().map(|(i, j)| (i + 1, j + 1)).collect()),
        };
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    println!("units       {}", d.n_units());
    println!("edges       {}", d.n_edges());
    println!("max degree  {}", d.max_degree());
    if a.edges {
        for (i, j) in d.edges() {
            println!("{}\t{}", i + 1, j + 1);
        }
    }
    Ok(())
}

fn node_set(v: &[String]) -> NodeSet {
    v.iter().map(String::as_str).collect()
}

fn adjsets(a: AdjsetsArgs) -> Result<()> {
    let g = Dag::read_text(&a.graph)?;
    let exposure = node_set(&a.exposure);
    let candidates: NodeSet = if a.candidates.is_empty() {
        g.nodes()
            .iter()
            .map(|n| n.id.as_str())
            .filter(|v| !exposure.contains(v) && *v != a.outcome)
            .collect()
    } else {
        node_set(&a.candidates)
    };
    let sets = g.enumerate_valid_adjustment_sets(&exposure, &a.outcome, &candidates)?;
    if sets.is_empty() {
        return Err(Error::Identifiability(format!(
            "no valid adjustment set for {exposure} -> {} among {candidates}",
            a.outcome
        )));
    }
    for s in sets {
        println!("{s}");
    }
    Ok(())
}

fn dsep(a: DsepArgs) -> Result<()> {
    let g = Dag::read_text(&a.graph)?;
    let sep = g.d_separated(&node_set(&a.a), &node_set(&a.b), &node_set(&a.given))?;
    println!("{}", if sep { "d-separated" } else { "d-connected" });
    Ok(())
}

fn slopes(a: SlopesArgs) -> Result<()> {
    let s = degree_scaling_slope(&a.generator, &a.features, &a.sizes, a.reps, a.seed)?;
    let mut t = Table::new(["N", "mean max degree"]);
    for (n, d) in s.sizes.iter().zip(&s.mean_max_degree) {
        t.row([n.to_string(), format!("{d:.2}")]);
    }
    print!("{t}");
    println!("slope {:.4} (intercept {:.4})", s.slope, s.intercept);
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), Some(&a.preset))?;
    let net = cfg.generator.generate(
        a.n,
        &mut rng::stream(a.seed, &[rng::tag::NETWORK, a.n as u64]),
    )?;
    let map = FeatureMap::new(&net, &cfg.features)?;
    let ds = simulate(
        &cfg.sem,
        &map,
        &mut rng::stream(a.seed, &[rng::tag::DATA, a.n as u64]),
    )?;
    ds.save_csv(&a.out)?;
    if let Some(p) = &a.network_out {
        std::fs::write(p, net.write_tsv())?;
    }
    let w = default_weights(&map, cfg.pi, cfg.eta, cfg.mc_reps, a.seed)?;
    println!(
        "wrote {} units; true effect for pi={} eta={}: {:.6}",
        ds.n_units(),
        cfg.pi,
        cfg.eta,
        netfx::sem::true_tau(&cfg.sem, &w)?
    );
    Ok(())
}

fn panel(a: PanelArgs) -> Result<()> {
    let schema = match &a.schema {
        Some(p) => PanelSchema::from_toml_str(&std::fs::read_to_string(p)?)?,
        None => PanelSchema::weekly(),
    };
    let g = match &a.graph {
        Some(p) => Dag::read_text(p)?,
        None => netfx::study::panel::panel_graph(),
    };
    let pd = ingest_panel_files(&a.data, &a.adjacency, &schema)?;
    let rep = run_observational(&pd, &g, &a.variants, a.pi, a.eta, a.level)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
        return Ok(());
    }
    println!(
        "rows {} (dropped {}), adjustment {} -> columns {}",
        rep.n_rows,
        rep.dropped,
        rep.selection.chosen,
        rep.selection.columns(&pd.dataset).join(", ")
    );
    let mut t = Table::new(["estimator", "tau", "std error", "ci low", "ci high"]);
    for e in &rep.estimates {
        t.row([
            e.variant.to_string(),
            format!("{:.4}", e.tau_hat),
            format!("{:.4}", e.std_error),
            format!("{:.4}", e.ci.0),
            format!("{:.4}", e.ci.1),
        ]);
    }
    print!("{t}");
    Ok(())
}

fn fixture(a: FixtureArgs) -> Result<()> {
    let opts = FixtureOptions {
        units: a.units,
        periods: a.periods,
        confounding: a.confounding,
        ..FixtureOptions::default()
    };
    let f = PanelFixture::generate(&opts, a.seed)?;
    f.write(&a.out)?;
    println!("wrote synthetic panel to {}", a.out.display());
    Ok(())
}
