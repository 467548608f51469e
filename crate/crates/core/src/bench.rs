//! Simulation benchmark: simulate a study, fit the matching joint model and
//! score the fit against the generating values, over many replications.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ModelConfig, Predictor, PredictorSpec, SamplerConfig, TermKind, TermSpec};
use crate::data::{format_number, write_table};
use crate::error::{Error, Result};
use crate::model::{BlockKind, JointModel};
use crate::ped::CutStrategy;
use crate::posterior::{
    centered, predictor_draws, score_scalar, score_vector, summarize, write_metrics_csv,
    Metric, PosteriorSummary, VectorSummary, GRID_SIZE, LEVEL,
};
use crate::sampler::{run_chain, ChainOutput};
use crate::simulate::{f1, f2, simulate_study, Setting, SimulatedStudy, SimulationConfig};

/// File name of the lattice map written next to simulated data.
pub const MAP_FILE: &str = "grid.gra";

/// Intervals used by the benchmark fits.
pub const BENCH_CUTS: usize = 30;

/// The joint model matching the data-generating process of `setting`.
pub fn model_config(setting: Setting, sampler: SamplerConfig) -> ModelConfig {
    let mut predictors = PredictorSpec {
        eta_l: vec![TermSpec::linear("x_l1"), TermSpec::new(TermKind::PSpline, Some("x_l2"))],
        eta_ls: vec![
            TermSpec::linear("x_ls1"),
            TermSpec::new(TermKind::PSpline, Some("x_ls2")),
            TermSpec::linear("x_ls3"),
            TermSpec::linear("time"),
            TermSpec::new(TermKind::RandomIntercept, None),
            TermSpec::new(TermKind::RandomSlope, Some("time")),
        ],
        eta_s: vec![
            TermSpec::new(TermKind::BaselinePSpline, None),
            TermSpec::linear("x_s1"),
            TermSpec::new(TermKind::PSpline, Some("x_s2")),
        ],
        ..Default::default()
    };
    let geo = TermSpec::mrf("region", MAP_FILE);
    match setting {
        Setting::GeoInShared => predictors.eta_ls.push(geo),
        Setting::GeoInSurvival => predictors.eta_s.push(geo),
        Setting::GeoInLongitudinal => predictors.eta_l.push(geo),
    }
    let mut cfg = ModelConfig {
        predictors,
        sampler,
        ..Default::default()
    };
    cfg.augment.cuts = CutStrategy::Quantiles(BENCH_CUTS);
    cfg.augment.merge_obs_times = false;
    cfg
}

/// Write the data, map and truth of a simulated study into `dir`.
pub fn write_study(study: &SimulatedStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    study.long.write_csv(dir.join("long.csv"))?;
    study.surv.write_csv(dir.join("surv.csv"))?;
    study.map.graph.write(dir.join(MAP_FILE))?;
    study.truth.write(dir.join("truth.json"))
}

/// True function of a smooth term in the generating model, by covariate.
fn true_smooth(covariate: &str) -> Option<fn(f64) -> f64> {
    match covariate {
        "x_l2" => Some(f1),
        "x_ls2" => Some(|x| -0.5 * f2(x)),
        "x_s2" => Some(|x| 0.5 * f2(x)),
        _ => None,
    }
}

/// True value of a scalar output column, if the generating model has one.
fn true_scalar(model: &JointModel, study: &SimulatedStudy, name: &str) -> Option<f64> {
    let c = &study.truth.coefficients;
    match name {
        "alpha" => return Some(study.truth.config.alpha),
        "sigma2_eps" => return Some(study.truth.config.sigma2_eps),
        _ => {}
    }
    let (label, rest) = name.rsplit_once('.')?;
    let block = model.block(label)?;
    match (block.kind, rest) {
        (BlockKind::Linear, "0") => c.get(block.covariate.as_deref()?).copied(),
        (BlockKind::RandomIntercept, "sigma2") => Some(study.truth.config.sigma2_b0),
        (BlockKind::RandomSlope, "sigma2") => Some(study.truth.config.sigma2_b1),
        _ => None,
    }
}

/// Score one fit against the truth of its study. Targets are the scalar
/// parameters, the smooth and spatial functions (centered, on the summary
/// grid), the random effects and the three predictors (centered).
pub fn score_fit(
    model: &JointModel,
    aug_ids: &[i64],
    study: &SimulatedStudy,
    chain: &ChainOutput,
    summary: &PosteriorSummary,
) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    for s in &summary.scalars {
        if let Some(t) = true_scalar(model, study, &s.name) {
            out.push(score_scalar(s, t));
        }
    }
    let truth = &study.truth;
    for block in &model.blocks {
        let target: Option<Vec<f64>> = match block.kind {
            BlockKind::PSpline => {
                let f = block.covariate.as_deref().and_then(true_smooth);
                let f = match f {
                    Some(f) => f,
                    None => continue,
                };
                let s = summary.function(block.label()).unwrap();
                Some(centered(&s.x.iter().map(|&x| f(x)).collect::<Vec<_>>()))
            }
            BlockKind::Mrf => {
                let regions = block.regions.as_ref().unwrap();
                let geo: Vec<f64> = regions
                    .iter()
                    .map(|r| {
                        let i = truth.region_labels.iter().position(|l| l == r).unwrap();
                        truth.f_geo[i]
                    })
                    .collect();
                Some(centered(&geo))
            }
            _ => None,
        };
        if let Some(t) = target {
            out.push(score_vector(summary.function(block.label()).unwrap(), &t)?);
        }
        let effects: Option<Vec<f64>> = match block.kind {
            BlockKind::RandomIntercept => Some(truth.subjects.iter().map(|s| s.b0).collect()),
            BlockKind::RandomSlope => Some(truth.subjects.iter().map(|s| s.b1).collect()),
            _ => None,
        };
        if let Some(t) = effects {
            let s = VectorSummary::from_draws(block.label(), &chain.block_draws(block.label()), false, LEVEL)?;
            out.push(score_vector(&s, &t)?);
        }
    }

    // predictors
    let eta_l = predictor_draws(model, chain, Predictor::Longitudinal);
    let s = VectorSummary::from_draws("eta_l", &eta_l, true, LEVEL)?;
    out.push(score_vector(&s, &centered(&truth.eta_l))?);
    let eta_ls = predictor_draws(model, chain, Predictor::Shared);
    let s = VectorSummary::from_draws("eta_ls", &eta_ls, true, LEVEL)?;
    out.push(score_vector(&s, &centered(&truth.eta_ls))?);
    let eta_s = subject_survival_predictor(model, aug_ids, study, chain)?;
    let s = VectorSummary::from_draws("eta_s", &eta_s, true, LEVEL)?;
    out.push(score_vector(&s, &centered(&truth.eta_s))?);
    Ok(out)
}

/// Draws of the survival predictor without the baseline, one value per
/// subject (the covariates of `η_s` are constant within subjects).
fn subject_survival_predictor(
    model: &JointModel,
    aug_ids: &[i64],
    study: &SimulatedStudy,
    chain: &ChainOutput,
) -> Result<Vec<Vec<f64>>> {
    let blocks: Vec<_> = model
        .blocks
        .iter()
        .filter(|b| b.predictor == Predictor::Survival && b.kind != BlockKind::Baseline)
        .map(|b| (b, chain.block_draws(b.label())))
        .collect();
    let first_rows = first_aug_rows(aug_ids, study)?;
    Ok((0..chain.len())
        .map(|d| {
            let mut eta = DVector::zeros(model.n_aug());
            for (b, draws) in &blocks {
                eta += b.effect.design.mul(&DVector::from_column_slice(&draws[d]));
            }
            first_rows.iter().map(|&r| eta[r]).collect()
        })
        .collect())
}

fn first_aug_rows(ids: &[i64], study: &SimulatedStudy) -> Result<Vec<usize>> {
    study
        .surv
        .id
        .iter()
        .map(|id| {
            ids.iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::InvalidInput(format!("subject {id} has no augmented rows")))
        })
        .collect()
}

/// Outcome of one replication.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub metrics: Vec<Metric>,
    pub acceptance: std::collections::BTreeMap<String, f64>,
    pub events: usize,
    pub elapsed_seconds: f64,
}

impl ReplicationResult {
    pub fn metric(&self, target: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.target == target)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub simulation: SimulationConfig,
    pub sampler: SamplerConfig,
    pub replications: usize,
    /// Threads used for replications; `0` lets the thread pool decide.
    pub workers: usize,
    /// Keep the draws of every replication on disk.
    pub keep_draws: bool,
}

/// Simulate and fit replication `r`: the study is drawn with seed
/// `simulation.seed + r` and the chain is run with the same seed.
pub fn run_replication(opts: &BenchmarkOptions, r: usize, dir: &Path) -> Result<ReplicationResult> {
    let start = Instant::now();
    let seed = opts.simulation.seed.wrapping_add(r as u64);
    let sim = SimulationConfig {
        seed,
        ..opts.simulation.clone()
    };
    let study = simulate_study(&sim)?;
    write_study(&study, dir)?;
    let sampler = SamplerConfig {
        seed,
        chains: 1,
        ..opts.sampler
    };
    let cfg = model_config(sim.setting, sampler);
    std::fs::write(dir.join("model.cfg"), cfg.serialize()).map_err(|e| Error::io(dir.join("model.cfg"), e))?;
    let (model, aug) = JointModel::from_config(&cfg, &study.long, &study.surv, dir)?;
    let chain = run_chain(&model, &sampler, 0)?;
    if opts.keep_draws {
        chain.write_draws_csv(dir.join("draws.csv"))?;
    }
    let summary = summarize(&model, &chain, LEVEL, GRID_SIZE)?;
    summary.write_summary_csv(dir.join("summary.csv"))?;
    summary.write_functions_csv(dir.join("functions.csv"))?;
    let metrics = score_fit(&model, &aug.id, &study, &chain, &summary)?;
    write_metrics_csv(dir.join("metrics.csv"), &metrics)?;
    Ok(ReplicationResult {
        replication: r,
        seed,
        metrics,
        acceptance: chain.acceptance,
        events: study.surv.events(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Results of all replications; failed replications keep their error.
#[derive(Debug)]
pub struct BenchmarkReport {
    pub setting: Setting,
    pub results: Vec<(usize, Result<ReplicationResult>)>,
}

impl BenchmarkReport {
    pub fn succeeded(&self) -> impl Iterator<Item = &ReplicationResult> {
        self.results.iter().filter_map(|(_, r)| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &Error)> {
        self.results.iter().filter_map(|(i, r)| r.as_ref().err().map(|e| (*i, e)))
    }

    /// `setting,replication,target,mse,bias,covered`.
    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["setting", "replication", "target", "mse", "bias", "covered"]
            .map(String::from)
            .to_vec();
        let setting = self.setting.number().to_string();
        let mut rows = Vec::new();
        for r in self.succeeded() {
            for m in &r.metrics {
                rows.push(vec![
                    setting.clone(),
                    r.replication.to_string(),
                    m.target.clone(),
                    format_number(m.mse),
                    format_number(m.bias),
                    format_number(m.covered),
                ]);
            }
        }
        write_table(path, &header, rows.into_iter())
    }

    /// Long format for box plots: `setting,replication,statistic,target,value`
    /// with one row per statistic (`mse`, `bias`, `abs_bias`, `coverage`).
    pub fn write_boxplot_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["setting", "replication", "statistic", "target", "value"]
            .map(String::from)
            .to_vec();
        let setting = self.setting.number().to_string();
        let mut rows = Vec::new();
        for r in self.succeeded() {
            for m in &r.metrics {
                for (stat, v) in [
                    ("mse", m.mse),
                    ("bias", m.bias),
                    ("abs_bias", m.abs_bias),
                    ("coverage", m.covered),
                ] {
                    rows.push(vec![
                        setting.clone(),
                        r.replication.to_string(),
                        stat.to_string(),
                        m.target.clone(),
                        format_number(v),
                    ]);
                }
            }
        }
        write_table(path, &header, rows.into_iter())
    }

    /// `replication,error` for every failed replication.
    pub fn write_failures_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["replication", "error"].map(String::from).to_vec();
        let rows = self.failures().map(|(i, e)| vec![i.to_string(), e.to_string()]);
        write_table(path, &header, rows)
    }
}

/// Directory of replication `r` below `out`.
pub fn replication_dir(out: &Path, r: usize) -> PathBuf {
    out.join(format!("rep{r:03}"))
}

/// Run every replication, in parallel over `workers` threads. Failures of
/// single replications are collected, not propagated.
pub fn run_benchmark(opts: &BenchmarkOptions, out: &Path) -> Result<BenchmarkReport> {
    opts.simulation.check()?;
    opts.sampler.check()?;
    if opts.replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results = pool.install(|| {
        (0..opts.replications)
            .into_par_iter()
            .map(|r| (r, run_replication(opts, r, &replication_dir(out, r))))
            .collect()
    });
    Ok(BenchmarkReport {
        setting: opts.simulation.setting,
        results,
    })
}
