//! Posterior summaries: means, highest-density intervals, Monte Carlo
//! errors, fitted functions on grids, and scores against known truth.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::Predictor;
use crate::data::{format_number, write_table};
use crate::error::{Error, Result};
use crate::model::{BlockKind, JointModel, ModelBlock};
use crate::sampler::ChainOutput;

/// Fewest draws accepted by [`hdi`].
pub const MIN_DRAWS: usize = 100;

/// Default interval level.
pub const LEVEL: f64 = 0.95;

/// Number of grid points for smooth functions.
pub const GRID_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// All draws inside the interval are equal.
    pub degenerate: bool,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Shortest interval containing `ceil(level · m)` of the `m` draws. Ties
/// go to the leftmost window.
pub fn hdi(draws: &[f64], level: f64) -> Result<Interval> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidInput(format!("interval level {level} is not in (0, 1]")));
    }
    if draws.len() < MIN_DRAWS {
        return Err(Error::InvalidInput(format!(
            "{} draws are too few for an interval (need {MIN_DRAWS})",
            draws.len()
        )));
    }
    if draws.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("draws contain non-finite values".into()));
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    // guard against level · m landing a hair above an integer
    let k = ((level * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=m - k {
        let w = s[i + k - 1] - s[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    Ok(Interval {
        lo: s[best],
        hi: s[best + k - 1],
        degenerate: width == 0.0,
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Monte Carlo standard error of the mean by non-overlapping batch means,
/// `floor(√m)` batches of equal size (trailing draws dropped).
pub fn batch_means_mcse(x: &[f64]) -> f64 {
    let m = x.len();
    let nb = (m as f64).sqrt().floor() as usize;
    if nb < 2 {
        return f64::NAN;
    }
    let size = m / nb;
    let means: Vec<f64> = x.chunks_exact(size).take(nb).map(mean).collect();
    let grand = mean(&means);
    let var = means.iter().map(|b| (b - grand).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (var / nb as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub hdi_lo: f64,
    pub hdi_hi: f64,
}

/// Pointwise summary of a vector-valued quantity (a function on a grid, a
/// set of regions, a predictor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSummary {
    pub label: String,
    /// Grid points; empty for region-indexed or row-indexed quantities.
    pub x: Vec<f64>,
    /// Region labels for MRF effects.
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl VectorSummary {
    /// Summarize draws (one vector per draw). With `center`, every draw is
    /// shifted to mean zero first.
    pub fn from_draws(label: impl Into<String>, draws: &[Vec<f64>], center: bool, level: f64) -> Result<Self> {
        let p = draws.first().map_or(0, Vec::len);
        let draws: Vec<Vec<f64>> = if center {
            draws
                .iter()
                .map(|d| {
                    let m = mean(d);
                    d.iter().map(|v| v - m).collect()
                })
                .collect()
        } else {
            draws.to_vec()
        };
        let mut out = VectorSummary {
            label: label.into(),
            x: Vec::new(),
            names: Vec::new(),
            mean: Vec::with_capacity(p),
            lo: Vec::with_capacity(p),
            hi: Vec::with_capacity(p),
        };
        let mut col = vec![0.0; draws.len()];
        for j in 0..p {
            for (c, d) in col.iter_mut().zip(&draws) {
                *c = d[j];
            }
            let iv = hdi(&col, level)?;
            out.mean.push(mean(&col));
            out.lo.push(iv.lo);
            out.hi.push(iv.hi);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub scalars: Vec<ScalarSummary>,
    pub functions: Vec<VectorSummary>,
}

impl PosteriorSummary {
    pub fn scalar(&self, name: &str) -> Option<&ScalarSummary> {
        self.scalars.iter().find(|s| s.name == name)
    }

    pub fn function(&self, label: &str) -> Option<&VectorSummary> {
        self.functions.iter().find(|f| f.label == label)
    }

    /// `parameter,mean,hdi_lo,hdi_hi`.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["parameter", "mean", "hdi_lo", "hdi_hi"].map(String::from).to_vec();
        let rows = self.scalars.iter().map(|s| {
            vec![
                s.name.clone(),
                format_number(s.mean),
                format_number(s.hdi_lo),
                format_number(s.hdi_hi),
            ]
        });
        write_table(path, &header, rows)
    }

    /// `function,x,mean,hdi_lo,hdi_hi`; `x` is the grid point or region.
    pub fn write_functions_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = ["function", "x", "mean", "hdi_lo", "hdi_hi"].map(String::from).to_vec();
        let mut rows = Vec::new();
        for f in &self.functions {
            for j in 0..f.len() {
                let x = match (f.x.get(j), f.names.get(j)) {
                    (Some(x), _) => format_number(*x),
                    (None, Some(n)) => n.clone(),
                    _ => j.to_string(),
                };
                rows.push(vec![
                    f.label.clone(),
                    x,
                    format_number(f.mean[j]),
                    format_number(f.lo[j]),
                    format_number(f.hi[j]),
                ]);
            }
        }
        write_table(path, &header, rows.into_iter())
    }
}

/// Equally spaced grid of `n` points over `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Draws of a block's function: on a grid for spline blocks, per region for
/// MRF blocks. Returns the evaluation points (grid or region labels) and
/// the draws.
pub fn function_draws(block: &ModelBlock, chain: &ChainOutput, grid_size: usize) -> Result<(Vec<f64>, Vec<String>, Vec<Vec<f64>>)> {
    let coefs = chain.block_draws(block.label());
    match (&block.basis, &block.regions) {
        (Some(basis), _) => {
            let (lo, hi) = basis.range();
            let xs = grid(lo, hi, grid_size);
            let b = basis.evaluate(&xs)?;
            let draws = coefs
                .iter()
                .map(|c| (&b * DVector::from_column_slice(c)).as_slice().to_vec())
                .collect();
            Ok((xs, Vec::new(), draws))
        }
        (None, Some(regions)) => Ok((Vec::new(), regions.clone(), coefs)),
        _ => Err(Error::InvalidInput(format!("{} is not a function block", block.label()))),
    }
}

/// Whether a block's function is only identified up to a constant (and so
/// is centered before summaries and comparisons).
pub fn is_centered(block: &ModelBlock) -> bool {
    matches!(block.kind, BlockKind::PSpline | BlockKind::Mrf)
}

/// Scalar summaries of every output column, plus function summaries of the
/// spline and MRF blocks.
pub fn summarize(model: &JointModel, chain: &ChainOutput, level: f64, grid_size: usize) -> Result<PosteriorSummary> {
    if chain.is_empty() {
        return Err(Error::InvalidInput("no draws to summarize".into()));
    }
    let mut out = PosteriorSummary::default();
    for name in &chain.names {
        let x = chain.column(name).unwrap();
        let iv = hdi(&x, level)?;
        out.scalars.push(ScalarSummary {
            name: name.clone(),
            mean: mean(&x),
            hdi_lo: iv.lo,
            hdi_hi: iv.hi,
        });
    }
    for block in &model.blocks {
        if !matches!(block.kind, BlockKind::PSpline | BlockKind::Mrf | BlockKind::Baseline) {
            continue;
        }
        let (xs, names, draws) = function_draws(block, chain, grid_size)?;
        let mut s = VectorSummary::from_draws(block.label(), &draws, is_centered(block), level)?;
        s.x = xs;
        s.names = names;
        out.functions.push(s);
    }
    Ok(out)
}

/// Draws of a whole predictor on its rows: `η_l` and `η_ls` on the
/// longitudinal rows, `η_s` on the augmented rows.
pub fn predictor_draws(model: &JointModel, chain: &ChainOutput, predictor: Predictor) -> Vec<Vec<f64>> {
    let blocks: Vec<(&ModelBlock, Vec<Vec<f64>>)> = model
        .blocks
        .iter()
        .filter(|b| b.predictor == predictor)
        .map(|b| (b, chain.block_draws(b.label())))
        .collect();
    let n = match predictor {
        Predictor::Survival => model.n_aug(),
        _ => model.n_long(),
    };
    (0..chain.len())
        .map(|d| {
            let mut eta = DVector::zeros(n);
            for (b, draws) in &blocks {
                eta += b.effect.design.mul(&DVector::from_column_slice(&draws[d]));
            }
            eta.as_slice().to_vec()
        })
        .collect()
}

/// Error statistics of one target: mean squared error, mean error and mean
/// absolute error of the posterior mean over the target's components, and
/// the share of components whose interval covers the truth (0 or 1 for
/// scalars).
///
/// For centered functions the mean error is zero by construction, so
/// `abs_bias` is the informative bias summary there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub target: String,
    pub mse: f64,
    pub bias: f64,
    #[serde(default)]
    pub abs_bias: f64,
    pub covered: f64,
}

/// Score posterior means and intervals against true values, component by
/// component.
pub fn score(target: impl Into<String>, mean: &[f64], lo: &[f64], hi: &[f64], truth: &[f64]) -> Result<Metric> {
    let n = truth.len();
    if n == 0 || mean.len() != n || lo.len() != n || hi.len() != n {
        return Err(Error::InvalidInput("score: estimate and truth shapes differ".into()));
    }
    let mut mse = 0.0;
    let mut bias = 0.0;
    let mut abs_bias = 0.0;
    let mut covered = 0.0;
    for j in 0..n {
        let e = mean[j] - truth[j];
        mse += e * e;
        bias += e;
        abs_bias += e.abs();
        if lo[j] <= truth[j] && truth[j] <= hi[j] {
            covered += 1.0;
        }
    }
    let n = n as f64;
    Ok(Metric {
        target: target.into(),
        mse: mse / n,
        bias: bias / n,
        abs_bias: abs_bias / n,
        covered: covered / n,
    })
}

pub fn score_scalar(s: &ScalarSummary, truth: f64) -> Metric {
    score(&s.name, &[s.mean], &[s.hdi_lo], &[s.hdi_hi], &[truth]).unwrap()
}

pub fn score_vector(s: &VectorSummary, truth: &[f64]) -> Result<Metric> {
    score(&s.label, &s.mean, &s.lo, &s.hi, truth)
}

/// Subtract the mean.
pub fn centered(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// `target,mse,bias,covered`.
pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[Metric]) -> Result<()> {
    let header: Vec<String> = ["target", "mse", "bias", "covered"].map(String::from).to_vec();
    let rows = metrics.iter().map(|m| {
        vec![
            m.target.clone(),
            format_number(m.mse),
            format_number(m.bias),
            format_number(m.covered),
        ]
    });
    write_table(path, &header, rows)
}
