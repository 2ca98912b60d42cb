//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::KeyValues;
use crate::cpe::{default_q_floor, estimate_prior_with_floor, ScoreSet};
use crate::dataset::{load_dataset, save_dataset};
use crate::error::GplError;
use crate::gnn::save_checkpoint;
use crate::graph::SparseGraph;
use crate::synth::{generate_planted, make_pu_split, PlantedConfig};
use crate::trainer::{run_baseline, run_gpl, Summary, TrainConfig, TrainTrace};
use crate::validation::{run_suite, suite_passed, Fault, SuiteOptions};

#[derive(Debug, Parser)]
#[command(
    name = "gpl",
    version,
    about = "Positive-unlabeled node classification on heterophilic graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate planted two-block graphs.
    Synth(SynthArgs),
    /// Rewire a dataset to a target heterophily ratio.
    Rewire(RewireArgs),
    /// Train GPL or the baseline on one dataset.
    Train(TrainArgs),
    /// Estimate the class prior from two score files.
    EstimatePrior(EstimateArgs),
    /// Repeat training over a parameter grid and seeds.
    Sweep(SweepArgs),
    /// Run the numerical oracle suite.
    Validate(ValidateArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long = "pi", default_value_t = 0.2)]
    pub pi_p: f64,
    /// One value, or a comma list to write one subdirectory per value.
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    pub h: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub avg_degree: f64,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct RewireArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub h: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Gpl,
    Baseline,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// `key = value` file; keys are the training options plus `data` and `r_p`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set lr_mask=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Dataset directory; same as the `data` key.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Gpl)]
    pub method: Method,
    /// Fraction of positives observed; same as the `r_p` key.
    #[arg(long)]
    pub rp: Option<f64>,
    /// Directory for `trace.csv` and `summary.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct EstimateArgs {
    /// Scores of labeled positives, one per line.
    #[arg(long)]
    pub positive: PathBuf,
    /// Scores of unlabeled samples, one per line.
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub q_floor: Option<f64>,
    /// Write the ratio curve here instead of stdout.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    H,
    Rp,
    KProp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMethod {
    Gpl,
    Baseline,
    Both,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub var: SweepVar,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Runs seeds `0..seeds`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = SweepMethod::Both)]
    pub method: SweepMethod,
    /// Training keys, `r_p`, an optional `data` directory, and planted
    /// graph keys (`n`, `pi_p`, `h`, `avg_degree`, `feature_dim`,
    /// `feature_separation`) used when no dataset is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Multiplies the number of random instances per check.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Deliberately break the propagation operator.
    #[arg(long, hide = true)]
    pub inject_skip_row_normalization: bool,
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a)?,
        Command::Rewire(a) => cmd_rewire(&a)?,
        Command::Train(a) => cmd_train(&a)?,
        Command::EstimatePrior(a) => cmd_estimate(&a)?,
        Command::Sweep(a) => cmd_sweep(&a)?,
        Command::Validate(a) => return cmd_validate(&a),
    }
    Ok(ExitCode::SUCCESS)
}

fn describe(g: &SparseGraph) -> String {
    let h = g
        .heterophily_ratio()
        .map(|h| format!("{h:.4}"))
        .unwrap_or_else(|_| "n/a".into());
    format!(
        "{} nodes, {} edges, {} positives, heterophily {h}",
        g.num_nodes(),
        g.num_edges(),
        g.positive_nodes().len()
    )
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    for &h in &a.h {
        let cfg = PlantedConfig {
            n: a.n,
            pi_p: a.pi_p,
            h,
            avg_degree: a.avg_degree,
            feature_dim: a.dim,
            feature_separation: a.mu,
            seed: a.seed,
        };
        let dir = if a.h.len() == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("h{h}"))
        };
        let g = generate_planted(&cfg)?;
        save_dataset(&g, &dir)?;
        println!("{}: {}", dir.display(), describe(&g));
    }
    Ok(())
}

fn cmd_rewire(a: &RewireArgs) -> anyhow::Result<()> {
    let g = load_dataset(&a.data)?;
    let r = g.rewire_to_heterophily(a.h, a.seed)?;
    save_dataset(&r, &a.out)?;
    println!("{}: {}", a.out.display(), describe(&r));
    Ok(())
}

fn key_values(config: Option<&Path>, overrides: &[String]) -> anyhow::Result<KeyValues> {
    let mut kv = match config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("override '{o}' is not KEY=VALUE");
        };
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut kv = key_values(a.config.as_deref(), &a.overrides)?;
    if let Some(d) = &a.data {
        kv.set("data", d.display().to_string());
    }
    if let Some(rp) = a.rp {
        kv.set("r_p", rp.to_string());
    }
    let data: PathBuf = kv.require("data")?;
    let r_p: f64 = kv.take("r_p")?.unwrap_or(0.5);
    let mut cfg = TrainConfig::default();
    cfg.apply(&mut kv)?;
    kv.finish()?;

    let g = load_dataset(&data)?;
    let split = make_pu_split(&g, r_p, cfg.seed)?;
    let (summary, trace, params) = match a.method {
        Method::Gpl => {
            let out = run_gpl(&g, &split, &cfg)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            (out.summary(&split, &cfg), out.trace, out.classifier.params)
        }
        Method::Baseline => {
            let out = run_baseline(&g, &split, &cfg)?;
            (out.summary(&split, &cfg), out.trace, out.classifier.params)
        }
    };
    write_outputs(&a.out, &trace, &summary)?;
    if let Some(path) = &a.checkpoint {
        save_checkpoint(&params, path)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn write_outputs(dir: &Path, trace: &TrainTrace, summary: &Summary) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace_path = dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(|e| GplError::io(&trace_path, e))?;
    trace.write_csv(file)?;
    let json_path = dir.join("summary.json");
    fs::write(&json_path, serde_json::to_string_pretty(summary)? + "\n")
        .map_err(|e| GplError::io(&json_path, e))?;
    Ok(())
}

fn read_scores(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| GplError::io(path, e))?;
    let name = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| GplError::parse(&name, i + 1, format!("'{}': {e}", l.trim())).into())
        })
        .collect()
}

fn cmd_estimate(a: &EstimateArgs) -> anyhow::Result<()> {
    let p = ScoreSet::new(read_scores(&a.positive)?)?;
    let u = ScoreSet::new(read_scores(&a.unlabeled)?)?;
    let floor = a.q_floor.unwrap_or_else(|| default_q_floor(p.len()));
    let est = estimate_prior_with_floor(&p, &u, floor)?;
    println!("pi_hat,c_star,q_floor");
    println!("{},{},{}", est.pi_hat, est.c_star, est.q_floor);
    let mut curve = csv::Writer::from_writer(Vec::new());
    for point in &est.curve {
        curve.serialize(point)?;
    }
    let curve = curve.into_inner()?;
    match &a.curve {
        Some(path) => fs::write(path, curve).map_err(|e| GplError::io(path, e))?,
        None => {
            println!();
            std::io::stdout().write_all(&curve)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    kind: &'static str,
    var: &'static str,
    value: f64,
    method: &'static str,
    seed: Option<u64>,
    f1: f64,
    f1_std: Option<f64>,
    pi_hat: f64,
    pi_true: f64,
    prior_error: f64,
    prior_error_std: Option<f64>,
    mean_weight_homo: f64,
    mean_weight_hetero: f64,
}

/// Base inputs shared by every run of a sweep.
struct SweepBase {
    dataset: Option<SparseGraph>,
    planted: PlantedConfig,
    cfg: TrainConfig,
    r_p: f64,
}

impl SweepBase {
    fn from_kv(mut kv: KeyValues) -> anyhow::Result<Self> {
        let dataset = match kv.take::<PathBuf>("data")? {
            Some(dir) => Some(load_dataset(&dir)?),
            None => None,
        };
        let mut planted = PlantedConfig::default();
        kv.take_into("n", &mut planted.n)?;
        kv.take_into("pi_p", &mut planted.pi_p)?;
        kv.take_into("h", &mut planted.h)?;
        kv.take_into("avg_degree", &mut planted.avg_degree)?;
        kv.take_into("feature_dim", &mut planted.feature_dim)?;
        kv.take_into("feature_separation", &mut planted.feature_separation)?;
        let r_p = kv.take("r_p")?.unwrap_or(0.5);
        let mut cfg = TrainConfig::default();
        cfg.apply(&mut kv)?;
        kv.finish()?;
        Ok(Self {
            dataset,
            planted,
            cfg,
            r_p,
        })
    }

    fn run(
        &self,
        var: SweepVar,
        value: f64,
        seed: u64,
        methods: &[Method],
    ) -> anyhow::Result<Vec<SweepRow>> {
        let mut cfg = self.cfg.clone();
        cfg.seed = seed;
        let mut r_p = self.r_p;
        let mut h = None;
        match var {
            SweepVar::H => h = Some(value),
            SweepVar::Rp => r_p = value,
            SweepVar::KProp => {
                if value < 1.0 || value.fract() != 0.0 {
                    bail!("k_prop values must be positive integers, got {value}");
                }
                cfg.k_prop = value as usize;
            }
        }
        let g = match (&self.dataset, h) {
            (Some(g), Some(h)) => g.rewire_to_heterophily(h, seed)?,
            (Some(g), None) => g.clone(),
            (None, h) => generate_planted(&PlantedConfig {
                h: h.unwrap_or(self.planted.h),
                seed,
                ..self.planted.clone()
            })?,
        };
        let split = make_pu_split(&g, r_p, seed)?;
        methods
            .iter()
            .map(|&m| {
                let (name, s) = match m {
                    Method::Gpl => ("gpl", run_gpl(&g, &split, &cfg)?.summary(&split, &cfg)),
                    Method::Baseline => (
                        "baseline",
                        run_baseline(&g, &split, &cfg)?.summary(&split, &cfg),
                    ),
                };
                Ok(SweepRow {
                    kind: "run",
                    var: var_name(var),
                    value,
                    method: name,
                    seed: Some(seed),
                    f1: s.f1,
                    f1_std: None,
                    pi_hat: s.pi_hat,
                    pi_true: s.pi_true,
                    prior_error: s.prior_error,
                    prior_error_std: None,
                    mean_weight_homo: s.mean_weight_homo,
                    mean_weight_hetero: s.mean_weight_hetero,
                })
            })
            .collect()
    }
}

fn var_name(v: SweepVar) -> &'static str {
    match v {
        SweepVar::H => "h",
        SweepVar::Rp => "r_p",
        SweepVar::KProp => "k_prop",
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn aggregate(runs: &[SweepRow]) -> SweepRow {
    let col = |f: fn(&SweepRow) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let (f1, f1_std) = mean_std(&col(|r| r.f1));
    let (prior_error, pe_std) = mean_std(&col(|r| r.prior_error));
    SweepRow {
        kind: "aggregate",
        seed: None,
        f1,
        f1_std: Some(f1_std),
        pi_hat: mean_std(&col(|r| r.pi_hat)).0,
        pi_true: mean_std(&col(|r| r.pi_true)).0,
        prior_error,
        prior_error_std: Some(pe_std),
        mean_weight_homo: mean_std(&col(|r| r.mean_weight_homo)).0,
        mean_weight_hetero: mean_std(&col(|r| r.mean_weight_hetero)).0,
        ..runs[0].clone()
    }
}

/// Worker count from `GPL_THREADS`, default 1.
pub fn thread_count() -> anyhow::Result<usize> {
    match std::env::var("GPL_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!("GPL_THREADS must be a positive integer, got '{v}'"),
        },
    }
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    if a.values.len() < 2 {
        bail!("a sweep needs at least two values");
    }
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let base = SweepBase::from_kv(key_values(a.config.as_deref(), &a.overrides)?)?;
    let methods: &[Method] = match a.method {
        SweepMethod::Gpl => &[Method::Gpl],
        SweepMethod::Baseline => &[Method::Baseline],
        SweepMethod::Both => &[Method::Gpl, Method::Baseline],
    };
    let jobs: Vec<(f64, u64)> = a
        .values
        .iter()
        .flat_map(|&v| (0..a.seeds).map(move |s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()?;
    let results: Vec<Vec<SweepRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, s)| base.run(a.var, v, s, methods))
            .collect::<anyhow::Result<_>>()
    })?;

    let mut rows: Vec<SweepRow> = results.into_iter().flatten().collect();
    let mut aggregates = Vec::new();
    for &v in &a.values {
        for &m in methods {
            let name = if m == Method::Gpl { "gpl" } else { "baseline" };
            let group: Vec<SweepRow> = rows
                .iter()
                .filter(|r| r.value == v && r.method == name)
                .cloned()
                .collect();
            aggregates.push(aggregate(&group));
        }
    }
    rows.extend(aggregates);

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| GplError::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> anyhow::Result<ExitCode> {
    let opts = SuiteOptions {
        fault: a
            .inject_skip_row_normalization
            .then_some(Fault::SkipRowNormalization),
        scale: a.scale,
    };
    let rows = run_suite(&opts)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let table = w.into_inner()?;
    std::io::stdout().write_all(&table)?;
    if let Some(p) = &a.out {
        fs::write(p, &table).map_err(|e| GplError::io(p, e))?;
    }
    if suite_passed(&rows) {
        return Ok(ExitCode::SUCCESS);
    }
    for r in rows.iter().filter(|r| r.asserted && !r.passed) {
        eprintln!(
            "FAILED {}: max residual {:e} > tolerance {:e}",
            r.check, r.max_residual, r.tolerance
        );
    }
    Ok(ExitCode::FAILURE)
}
