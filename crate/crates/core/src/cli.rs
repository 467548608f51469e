//! Command-line interface.
//!
//! Every command writes a `manifest.json` into its output directory listing
//! the command, inputs, seed and the files it produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{run_benchmark, score_fit, write_study, BenchmarkOptions};
use crate::config::{ModelConfig, SamplerConfig};
use crate::data::{LongitudinalDataset, SurvivalDataset};
use crate::error::{Error, Result};
use crate::model::JointModel;
use crate::posterior::{summarize, write_metrics_csv, GRID_SIZE, LEVEL};
use crate::sampler::{pool_chains, run_chains, write_traces_csv, ChainOutput, ChainSidecar};
use crate::simulate::{simulate_study, Setting, SimulatedStudy, SimulationConfig, TruthRecord};

/// Exit code of a benchmark in which some replications failed.
pub const EXIT_PARTIAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "jointpam", version, about = "Bayesian joint models with piecewise-exponential hazards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a study with known truth.
    Simulate(SimulateArgs),
    /// Write the piecewise-exponential (augmented) form of survival data.
    Augment(AugmentArgs),
    /// Fit a joint model by MCMC.
    Fit(FitArgs),
    /// Summarize the draws of a fit.
    Summarize(SummarizeArgs),
    /// Repeated simulate-fit-score runs.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation settings (TOML); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where the spatial effect enters: 1 shared, 2 survival, 3 longitudinal.
    #[arg(long)]
    pub setting: Option<u8>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding `long.csv` and `surv.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub long: Option<PathBuf>,
    #[arg(long)]
    pub surv: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<(PathBuf, PathBuf)> {
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            match (explicit, &self.data) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(d)) => Ok(d.join(name)),
                (None, None) => Err(Error::Config(format!("give --data or the path of {name}"))),
            }
        };
        Ok((pick(&self.long, "long.csv")?, pick(&self.surv, "surv.csv")?))
    }
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct SamplerArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
}

impl SamplerArgs {
    fn apply(&self, mut s: SamplerConfig) -> SamplerConfig {
        s.seed = self.seed.unwrap_or(s.seed);
        s.iterations = self.iterations.unwrap_or(s.iterations);
        s.burn_in = self.burnin.unwrap_or(s.burn_in);
        s.thinning = self.thin.unwrap_or(s.thinning);
        s.chains = self.chains.unwrap_or(s.chains);
        s
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Defaults to the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `truth.json` of a simulated study; adds `metrics.csv`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = LEVEL)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Simulation settings (TOML); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub setting: u8,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the draws of every replication.
    #[arg(long)]
    pub keep_draws: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

/// Record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Named input paths.
    pub inputs: BTreeMap<String, String>,
    /// Resolved settings.
    pub settings: BTreeMap<String, String>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub elapsed_seconds: f64,
}

impl Manifest {
    fn new(command: &str, seed: Option<u64>) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs: BTreeMap::new(),
            settings: BTreeMap::new(),
            outputs: Vec::new(),
            elapsed_seconds: 0.0,
        }
    }

    fn input(&mut self, name: &str, path: &Path) {
        let abs = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        self.inputs.insert(name.into(), abs.display().to_string());
    }

    fn setting(&mut self, name: &str, value: impl ToString) {
        self.settings.insert(name.into(), value.to_string());
    }

    fn finish(mut self, out: &Path, start: Instant) -> Result<()> {
        self.outputs.push("manifest.json".into());
        self.outputs.sort();
        self.elapsed_seconds = start.elapsed().as_secs_f64();
        let path = out.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_data(data: &DataArgs) -> Result<(PathBuf, PathBuf, LongitudinalDataset, SurvivalDataset)> {
    let (lp, sp) = data.paths()?;
    let long = LongitudinalDataset::read_csv(&lp)?;
    let surv = SurvivalDataset::read_csv(&sp)?;
    long.check_against(&surv)?;
    Ok((lp, sp, long, surv))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = match &args.config {
        Some(p) => SimulationConfig::read(p)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.setting {
        cfg.setting = Setting::from_number(s)?;
    }
    cfg.check()?;
    let study = simulate_study(&cfg)?;
    write_study(&study, &args.out)?;
    let mut m = Manifest::new("simulate", Some(cfg.seed));
    if let Some(p) = &args.config {
        m.input("config", p);
    }
    m.setting("setting", cfg.setting.number());
    m.setting("n", cfg.n);
    m.setting("redraws", study.truth.redraws);
    m.outputs = ["long.csv", "surv.csv", crate::bench::MAP_FILE, "truth.json"].map(String::from).to_vec();
    m.finish(&args.out, start)
}

pub fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = ModelConfig::read(&args.config)?;
    let (lp, sp, long, surv) = read_data(&args.data)?;
    let extra: &[f64] = if cfg.augment.merge_obs_times { &long.time } else { &[] };
    let cuts = crate::ped::make_cuts(&surv, cfg.augment.cuts, extra)?;
    let options = crate::ped::AugmentOptions {
        eval_point: cfg.augment.eval_point,
        ..Default::default()
    };
    let aug = crate::ped::augment(&surv, &long, &cuts, options)?;
    create_dir(&args.out)?;
    aug.write_csv(args.out.join("ped.csv"))?;
    let mut m = Manifest::new("augment", None);
    m.input("config", &args.config);
    m.input("long", &lp);
    m.input("surv", &sp);
    m.setting("rows", aug.len());
    m.setting("intervals", cuts.len() - 1);
    m.setting("backfilled", aug.backfilled.len());
    m.outputs.push("ped.csv".into());
    m.finish(&args.out, start)
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = ModelConfig::read(&args.config)?;
    cfg.sampler = args.sampler.apply(cfg.sampler);
    cfg.check()?;
    let (lp, sp, long, surv) = read_data(&args.data)?;
    let (model, _) = JointModel::from_config(&cfg, &long, &surv, &base_dir(&args.config))?;
    let chains = run_chains(&model, &cfg.sampler)?;
    create_dir(&args.out)?;
    let mut m = Manifest::new("fit", Some(cfg.sampler.seed));
    m.input("config", &args.config);
    m.input("long", &lp);
    m.input("surv", &sp);
    m.setting("iterations", cfg.sampler.iterations);
    m.setting("burn_in", cfg.sampler.burn_in);
    m.setting("thinning", cfg.sampler.thinning);
    m.setting("chains", cfg.sampler.chains);
    if chains.len() > 1 {
        for c in &chains {
            let name = format!("draws_chain{}.csv", c.chain);
            c.write_draws_csv(args.out.join(&name))?;
            m.outputs.push(name);
        }
    }
    pool_chains(&chains)?.write_draws_csv(args.out.join("draws.csv"))?;
    let sidecars: Vec<ChainSidecar> = chains.iter().map(ChainOutput::sidecar).collect();
    write_json(&args.out.join("acceptance.json"), &sidecars)?;
    write_traces_csv(args.out.join("trace.csv"), &chains)?;
    std::fs::write(args.out.join("model.cfg"), cfg.serialize()).map_err(|e| Error::io(args.out.join("model.cfg"), e))?;
    m.outputs.extend(["draws.csv", "acceptance.json", "trace.csv", "model.cfg"].map(String::from));
    m.finish(&args.out, start)
}

pub fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let start = Instant::now();
    let fit = Manifest::read(args.fit.join("manifest.json"))?;
    let input = |name: &str| -> Result<PathBuf> {
        fit.inputs
            .get(name)
            .map(PathBuf::from)
            .ok_or_else(|| Error::InvalidInput(format!("fit manifest has no {name} input")))
    };
    let config_path = input("config")?;
    let cfg = ModelConfig::read(args.fit.join("model.cfg"))?;
    let long = LongitudinalDataset::read_csv(input("long")?)?;
    let surv = SurvivalDataset::read_csv(input("surv")?)?;
    let (model, aug) = JointModel::from_config(&cfg, &long, &surv, &base_dir(&config_path))?;
    let chain = ChainOutput::read_draws_csv(args.fit.join("draws.csv"))?;
    let expected = crate::sampler::parameter_names(&model);
    if chain.names != expected {
        return Err(Error::InvalidInput("draws do not match the model of the fit".into()));
    }
    let summary = summarize(&model, &chain, args.level, GRID_SIZE)?;
    let out = args.out.clone().unwrap_or_else(|| args.fit.clone());
    create_dir(&out)?;
    summary.write_summary_csv(out.join("summary.csv"))?;
    summary.write_functions_csv(out.join("functions.csv"))?;
    let mut m = Manifest::new("summarize", None);
    m.input("fit", &args.fit);
    m.setting("level", args.level);
    m.outputs.extend(["summary.csv", "functions.csv"].map(String::from));
    if let Some(tp) = &args.truth {
        let truth = TruthRecord::read(tp)?;
        let map = truth.config.map();
        let study = SimulatedStudy { long, surv, truth, map };
        let metrics = score_fit(&model, &aug.id, &study, &chain, &summary)?;
        write_metrics_csv(out.join("metrics.csv"), &metrics)?;
        m.input("truth", tp);
        m.outputs.push("metrics.csv".into());
    }
    m.finish(&out, start)
}

/// Returns the number of failed replications.
pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<usize> {
    let start = Instant::now();
    let mut sim = match &args.config {
        Some(p) => SimulationConfig::read(p)?,
        None => SimulationConfig::default(),
    };
    sim.setting = Setting::from_number(args.setting)?;
    if let Some(s) = args.sampler.seed {
        sim.seed = s;
    }
    let opts = BenchmarkOptions {
        simulation: sim,
        sampler: args.sampler.apply(SamplerConfig::default()),
        replications: args.replications,
        workers: args.workers,
        keep_draws: args.keep_draws,
    };
    create_dir(&args.out)?;
    let report = run_benchmark(&opts, &args.out)?;
    report.write_metrics_csv(args.out.join("metrics.csv"))?;
    report.write_boxplot_csv(args.out.join("boxplot.csv"))?;
    let failures = report.failures().count();
    let mut m = Manifest::new("benchmark", Some(opts.simulation.seed));
    if let Some(p) = &args.config {
        m.input("config", p);
    }
    m.setting("setting", args.setting);
    m.setting("replications", args.replications);
    m.setting("iterations", opts.sampler.iterations);
    m.setting("burn_in", opts.sampler.burn_in);
    m.setting("thinning", opts.sampler.thinning);
    m.setting("failures", failures);
    m.outputs.extend(["metrics.csv", "boxplot.csv"].map(String::from));
    if failures > 0 {
        report.write_failures_csv(args.out.join("failures.csv"))?;
        m.outputs.push("failures.csv".into());
    }
    for r in 0..args.replications {
        m.outputs.push(format!("rep{r:03}/"));
    }
    m.finish(&args.out, start)?;
    Ok(failures)
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| 0),
        Command::Augment(a) => cmd_augment(a).map(|_| 0),
        Command::Fit(a) => cmd_fit(a).map(|_| 0),
        Command::Summarize(a) => cmd_summarize(a).map(|_| 0),
        Command::Benchmark(a) => cmd_benchmark(a).map(|f| if f > 0 { EXIT_PARTIAL } else { 0 }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parse `args` (program name first) and run. Argument errors exit with
/// code 2 after printing the usage message.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
