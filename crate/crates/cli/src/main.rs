mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use rpchoice::data::{load_csv, write_csv, CsvSchema, ShareSource};
use rpchoice::estimate::{convergence_diagnostic, AngleGrid, EstimatorConfig, GridConfig, SubgradientConfig};
use rpchoice::projection::sparsity_label;
use rpchoice::seed::{self, stream};
use rpchoice::simulate::{ErrorSpec, PRESETS};
use rpchoice::{
    jl_diagnostic, registry, run_replications, simulate_dataset, CycleSet, Dataset, Orientation, ProjectionSpec,
    ReplicationConfig, SimConfig, SparseProjection, Sparsity,
};

use manifest::{resolve_out, write_json, Clock, RunManifest, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(name = "rpchoice", version, about = "Random projection estimation of discrete-choice models")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate a dataset from a named design.
    Simulate(SimulateArgs),
    /// Generate a projection matrix and write it to projection.bin.
    Project(ProjectArgs),
    /// Project, estimate and summarize over replications.
    Estimate(EstimateArgs),
    /// Monte Carlo check of the projected-distance mean and variance.
    VerifyJl(VerifyJlArgs),
    /// Sup-grid gap between projected and unprojected criteria as k grows.
    Converge(ConvergeArgs),
    /// Re-run the job recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS.map(|p| p.0)))]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the number of markets.
    #[arg(long)]
    n: Option<usize>,
    /// Override the Monte Carlo draws per market.
    #[arg(long)]
    mc_draws: Option<usize>,
    #[arg(long, default_value = "iid")]
    covariates: String,
    #[arg(long, default_value = "ma-window")]
    errors: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Share column name.
    #[arg(long, default_value = "share")]
    share_column: String,
    /// Quantity column; requires --custcount and builds an outside option.
    #[arg(long, requires = "custcount")]
    quantity: Option<String>,
    /// CSV with columns market,custcount.
    #[arg(long)]
    custcount: Option<PathBuf>,
    /// Fill absent (market, choice) rows with zeros.
    #[arg(long)]
    fill_missing: bool,
    /// Allow share totals below one.
    #[arg(long)]
    outside_option: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let shares = match (&self.quantity, &self.custcount) {
            (Some(column), Some(custcount)) => ShareSource::Quantity {
                column: column.clone(),
                custcount: custcount.clone(),
            },
            _ => ShareSource::Column(self.share_column.clone()),
        };
        let schema = CsvSchema {
            shares,
            fill_missing: self.fill_missing,
            outside_option: self.outside_option,
            ..CsvSchema::default()
        };
        load_csv(&self.data, &schema).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[arg(long, value_parser = positive)]
    k: usize,
    /// 1, 3, sqrt, or a real s >= 1.
    #[arg(long, default_value = "1", value_parser = parse_sparsity)]
    s: Sparsity,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset whose row count fixes d.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = positive)]
    k: usize,
    #[arg(long, default_value = "1", value_parser = parse_sparsity)]
    s: Sparsity,
    /// Cycle lengths, comma separated.
    #[arg(long, default_value = "2,3", value_delimiter = ',', value_parser = positive)]
    cycles: Vec<usize>,
    #[arg(long, default_value = "both", value_parser = parse_orientation)]
    orientation: Orientation,
    #[arg(long, default_value_t = 100, value_parser = positive)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "polar-grid")]
    estimator: String,
    #[arg(long, default_value = "dot")]
    form: String,
    /// Coarse polar grid size.
    #[arg(long, default_value_t = GridConfig::default().points)]
    grid: usize,
    /// Fine points per coarse step when refining the level set.
    #[arg(long, default_value_t = GridConfig::default().refine)]
    refine: usize,
    #[arg(long, default_value_t = SubgradientConfig::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = SubgradientConfig::default().steps)]
    steps: usize,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyJlArgs {
    #[arg(long, value_parser = positive)]
    d: usize,
    #[arg(long, value_parser = positive)]
    k: usize,
    #[arg(long, default_value = "1", value_parser = parse_sparsity)]
    s: Sparsity,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write manifest.json and summary.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Projection dimensions, comma separated.
    #[arg(long, default_value = "10,20,40,80", value_delimiter = ',', value_parser = positive)]
    k: Vec<usize>,
    #[arg(long, default_value = "1", value_parser = parse_sparsity)]
    s: Sparsity,
    #[arg(long, default_value = "2,3", value_delimiter = ',', value_parser = positive)]
    cycles: Vec<usize>,
    /// Projection draws per k.
    #[arg(long, default_value_t = 5, value_parser = positive)]
    draws: usize,
    #[arg(long, default_value_t = 360)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the replay (default: the recorded one).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_sparsity(s: &str) -> Result<Sparsity, String> {
    s.parse().map_err(|e: rpchoice::Error| e.to_string())
}

fn parse_orientation(s: &str) -> Result<Orientation, String> {
    match s {
        "both" => Ok(Orientation::Both),
        "single" => Ok(Orientation::Single),
        other => Err(format!("`{other}` is not both or single")),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Project(_) => "project",
            Command::Estimate(_) => "estimate",
            Command::VerifyJl(_) => "verify-jl",
            Command::Converge(_) => "converge",
            Command::Rerun(_) => "rerun",
        }
    }

    fn seed(&self) -> u64 {
        match self {
            Command::Simulate(a) => a.seed,
            Command::Project(a) => a.seed,
            Command::Estimate(a) => a.seed,
            Command::VerifyJl(a) => a.seed,
            Command::Converge(a) => a.seed,
            Command::Rerun(_) => 0,
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            Command::Simulate(a) => Some(&a.out),
            Command::Project(a) => Some(&a.out),
            Command::Estimate(a) => Some(&a.out),
            Command::VerifyJl(a) => a.out.as_deref(),
            Command::Converge(a) => a.out.as_deref(),
            Command::Rerun(a) => a.out.as_deref(),
        }
    }

    fn with_out(mut self, out: PathBuf) -> Self {
        match &mut self {
            Command::Simulate(a) => a.out = out,
            Command::Project(a) => a.out = out,
            Command::Estimate(a) => a.out = out,
            Command::VerifyJl(a) => a.out = Some(out),
            Command::Converge(a) => a.out = Some(out),
            Command::Rerun(a) => a.out = Some(out),
        }
        self
    }
}

/// Files written by a command, keyed by role.
type Artifacts = BTreeMap<String, PathBuf>;

fn run(command: Command, argv: Vec<String>) -> Result<()> {
    let command = match command {
        Command::Rerun(r) => {
            let recorded = RunManifest::read(&r.manifest)?;
            match r.out {
                Some(out) => recorded.params.with_out(out),
                None => recorded.params,
            }
        }
        other => other,
    };
    let out_dir = command.out().map(resolve_out);
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut clock = Clock::start();
    let artifacts = match &command {
        Command::Simulate(a) => simulate(a, out_dir.as_deref().unwrap(), &mut clock)?,
        Command::Project(a) => project(a, out_dir.as_deref().unwrap(), &mut clock)?,
        Command::Estimate(a) => estimate(a, out_dir.as_deref().unwrap(), &mut clock)?,
        Command::VerifyJl(a) => verify_jl(a, out_dir.as_deref(), &mut clock)?,
        Command::Converge(a) => converge(a, out_dir.as_deref(), &mut clock)?,
        Command::Rerun(_) => bail!("a manifest cannot record a rerun"),
    };
    if let Some(dir) = out_dir {
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.name().to_string(),
            seed: command.seed(),
            params: command,
            argv,
            artifacts,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timings: clock.finish(),
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, dir: &Path, clock: &mut Clock) -> Result<Artifacts> {
    let (mut config, k) = SimConfig::preset(&a.preset, a.seed)?;
    if let Some(n) = a.n {
        config.n = n;
    }
    if let Some(m) = a.mc_draws {
        config.mc_draws = m;
    }
    config.covariate_mode = a.covariates.clone();
    config.error = ErrorSpec { kind: a.errors.clone() };
    let data = simulate_dataset(&config)?;
    clock.phase("simulate");
    let data_path = dir.join("data.csv");
    write_csv(&data, &data_path)?;
    #[derive(Serialize)]
    struct SimSummary<'a> {
        config: &'a SimConfig,
        suggested_k: usize,
        n: usize,
        d: usize,
        b: usize,
        beta0: Vec<f64>,
    }
    let summary = SimSummary {
        config: &config,
        suggested_k: k,
        n: data.n(),
        d: data.d(),
        b: data.b(),
        beta0: config.beta0().iter().copied().collect(),
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    clock.phase("write");
    println!("wrote {} (n={}, d={}, b={})", data_path.display(), data.n(), data.d(), data.b());
    Ok(BTreeMap::from([("data".into(), data_path), ("summary".into(), summary_path)]))
}

fn project(a: &ProjectArgs, dir: &Path, clock: &mut Clock) -> Result<Artifacts> {
    let data = a.data.load()?;
    clock.phase("load");
    let spec = ProjectionSpec::new(a.k, data.d(), a.s, a.seed)?;
    let projection = SparseProjection::generate(&spec)?;
    clock.phase("generate");
    let path = dir.join("projection.bin");
    projection.write_cache(&path)?;
    clock.phase("write");
    println!(
        "wrote {} (k={}, d={}, s={}, nnz={}, density={:.4})",
        path.display(),
        spec.k,
        spec.d,
        spec.s,
        projection.nnz(),
        projection.density()
    );
    Ok(BTreeMap::from([("projection".into(), path)]))
}

fn estimate(a: &EstimateArgs, dir: &Path, clock: &mut Clock) -> Result<Artifacts> {
    let data = a.data.load()?;
    clock.phase("load");
    let estimator_config = EstimatorConfig {
        grid: GridConfig {
            points: a.grid,
            refine: a.refine,
        },
        subgradient: SubgradientConfig {
            restarts: a.restarts,
            steps: a.steps,
            ..SubgradientConfig::default()
        },
    };
    let config = ReplicationConfig {
        label: a.label.clone().unwrap_or_else(|| format!("k={} s={}", a.k, a.s)),
        k: a.k,
        sparsity: a.s,
        replications: a.replications,
        master_seed: a.seed,
        cycle_lengths: a.cycles.clone(),
        orientation: a.orientation,
        form: a.form.clone(),
        estimator: a.estimator.clone(),
        estimator_config,
    };
    let summary = run_replications(&data, &config)?;
    clock.phase("replications");
    let mut artifacts = Artifacts::new();
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    artifacts.insert("summary".into(), summary_path);
    if data.b() == 2 {
        let form = registry::criterion_forms().create(&a.form, &())?;
        let cycles = CycleSet::enumerate(data.n(), &a.cycles, a.orientation)?;
        let criterion = form.bind(&data, &cycles)?;
        let grid = AngleGrid::evaluate(criterion.as_ref(), a.grid)?;
        let grid_path = dir.join("grid.csv");
        grid.write_csv(&grid_path)?;
        artifacts.insert("grid".into(), grid_path);
        clock.phase("grid");
    }
    match &summary.angles {
        Some(s) => println!(
            "{}: {}/{} ok, lb {:.4} ({:.4}), ub {:.4} ({:.4}), point {:.4} ({:.4}), nested {}/{}",
            summary.label,
            summary.succeeded,
            summary.replications.len(),
            s.mean_lb,
            s.sd_lb,
            s.mean_ub,
            s.sd_ub,
            s.mean_point,
            s.sd_point,
            s.nested,
            summary.succeeded
        ),
        None => println!("{}: {}/{} ok", summary.label, summary.succeeded, summary.replications.len()),
    }
    Ok(artifacts)
}

#[derive(Serialize)]
struct JlSummary {
    #[serde(flatten)]
    report: rpchoice::projection::JlReport,
    mean_rel_error: f64,
    var_rel_error: f64,
}

fn verify_jl(a: &VerifyJlArgs, dir: Option<&Path>, clock: &mut Clock) -> Result<Artifacts> {
    let spec = ProjectionSpec::new(a.k, a.d, a.s, seed::split(a.seed, stream::PROJECTION))?;
    let mut rng = seed::rng(seed::split(a.seed, stream::DIAGNOSTIC));
    let mut normal = || -> Vec<f64> { (0..a.d).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let (u, v) = (normal(), normal());
    let report = jl_diagnostic(&u, &v, &spec, a.draws)?;
    clock.phase("diagnostic");
    let summary = JlSummary {
        mean_rel_error: report.mean_rel_error(),
        var_rel_error: report.var_rel_error(),
        report,
    };
    println!(
        "s={} ({}): |u-v|^2 {:.4}, mean {:.4} (rel err {:.4}), var {:.4} vs predicted {:.4} (rel err {:.4})",
        summary.report.s,
        sparsity_label(summary.report.s, a.d),
        summary.report.true_sq_dist,
        summary.report.mean_sq_dist,
        summary.mean_rel_error,
        summary.report.var_sq_dist,
        summary.report.predicted_var,
        summary.var_rel_error
    );
    let mut artifacts = Artifacts::new();
    if let Some(dir) = dir {
        let path = dir.join("summary.json");
        write_json(&path, &summary)?;
        artifacts.insert("summary".into(), path);
    }
    Ok(artifacts)
}

fn converge(a: &ConvergeArgs, dir: Option<&Path>, clock: &mut Clock) -> Result<Artifacts> {
    let data = a.data.load()?;
    let cycles = CycleSet::enumerate(data.n(), &a.cycles, Orientation::Both)?;
    clock.phase("load");
    let table = convergence_diagnostic(&data, &cycles, &a.k, a.s, a.draws, a.grid, a.seed)?;
    clock.phase("diagnostic");
    for row in &table.rows {
        println!("k={:>6}  mean gap {:.6e}  sd {:.3e}", row.k, row.mean_gap, row.sd_gap);
    }
    println!("decreasing pairs: {}/{}", table.decreasing_pairs, table.total_pairs);
    let mut artifacts = Artifacts::new();
    if let Some(dir) = dir {
        let path = dir.join("summary.json");
        write_json(&path, &table)?;
        artifacts.insert("summary".into(), path);
    }
    Ok(artifacts)
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !line.contains(&text) {
            if !line.is_empty() {
                line.push_str(": ");
            }
            line.push_str(&text);
        }
    }
    line.replace('\n', " ")
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
