//! MCMC for the joint model.
//!
//! One sweep updates, in order: the longitudinal blocks by Gibbs draws from
//! their Gaussian full conditionals; the survival blocks (baseline included)
//! and then the shared blocks by Metropolis-Hastings with IWLS proposals; the
//! association `α` the same way; and finally every sampled variance by its
//! inverse-gamma full conditional.
//!
//! An IWLS proposal for a block with coefficients `γ` is
//! `N(P⁻¹ (Z'WZγ + Z'v), P⁻¹)` with `P = Z'WZ + K/σ²`, where `v` and `W`
//! are the score and expected information of the log-likelihood with respect
//! to the block's linear predictor, all evaluated at the current state. The
//! reverse proposal density is rebuilt at the proposed value.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;
use serde::{Deserialize, Serialize};

use crate::config::{Predictor, SamplerConfig};
use crate::data::{format_number, read_table, write_table};
use crate::error::{Error, Result};
use crate::linalg::{standard_normal_vector, Precision};
use crate::model::JointModel;

/// Log-means are clipped to `[-MU_CLIP, MU_CLIP]` before exponentiating.
pub const MU_CLIP: f64 = 30.0;

/// Survival working weights are floored here.
pub const WEIGHT_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Sum of normal log-densities of `y` with mean `eta_l + eta_ls`.
pub fn gaussian_loglik(y: &[f64], eta_l: &[f64], eta_ls: &[f64], sigma2_eps: f64) -> Result<f64> {
    if !(sigma2_eps > 0.0) {
        return Err(Error::Numeric(format!("model variance {sigma2_eps} is not positive")));
    }
    if y.len() != eta_l.len() || y.len() != eta_ls.len() {
        return Err(Error::InvalidInput("gaussian_loglik: lengths differ".into()));
    }
    let rss: f64 = y
        .iter()
        .zip(eta_l)
        .zip(eta_ls)
        .map(|((y, a), b)| (y - a - b).powi(2))
        .sum();
    let n = y.len() as f64;
    Ok(-0.5 * n * (LN_2PI + sigma2_eps.ln()) - 0.5 * rss / sigma2_eps)
}

/// Clip a log-mean; the flag reports whether clipping happened.
#[inline]
fn clip(mu: f64) -> (f64, bool) {
    if mu > MU_CLIP {
        (MU_CLIP, true)
    } else if mu < -MU_CLIP {
        (-MU_CLIP, true)
    } else {
        (mu, false)
    }
}

/// Poisson log-likelihood `Σ δ μ − exp(μ)` for log-means `mu`, dropping
/// `log δ!`. Returns the value and the number of clipped rows.
pub fn poisson_loglik_mu(delta: &[f64], mu: &[f64]) -> (f64, usize) {
    let mut clipped = 0;
    let ll = delta
        .iter()
        .zip(mu)
        .map(|(&d, &m)| {
            let (m, c) = clip(m);
            clipped += c as usize;
            d * m - m.exp()
        })
        .sum();
    (ll, clipped)
}

/// Poisson log-likelihood of augmented rows with log-mean
/// `f0 + offset + eta_s + alpha * eta_ls`.
pub fn poisson_loglik(delta: &[f64], f0: &[f64], offset: &[f64], eta_s: &[f64], alpha: f64, eta_ls: &[f64]) -> f64 {
    let mu: Vec<f64> = (0..delta.len())
        .map(|i| f0[i] + offset[i] + eta_s[i] + alpha * eta_ls[i])
        .collect();
    poisson_loglik_mu(delta, &mu).0
}

/// Working weights and observations for the survival predictor: per row,
/// `w = exp(μ)` (floored at [`WEIGHT_FLOOR`]), score `v = δ − exp(μ)`, and
/// `ỹ = η + v / w`. Also returns the number of floored weights.
pub fn iwls_weights_survival(delta: &[f64], mu: &[f64], eta: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    let mut floored = 0;
    let mut w = Vec::with_capacity(mu.len());
    let mut yt = Vec::with_capacity(mu.len());
    for i in 0..mu.len() {
        let e = clip(mu[i]).0.exp();
        let wi = if e < WEIGHT_FLOOR {
            floored += 1;
            WEIGHT_FLOOR
        } else {
            e
        };
        w.push(wi);
        yt.push(eta[i] + (delta[i] - e) / wi);
    }
    (w, yt, floored)
}

/// Working weights and observations for the shared predictor on the
/// longitudinal rows followed by the augmented rows. Longitudinal rows get
/// weight `1/σ²` and score `(y − η_l − η_ls)/σ²`; augmented rows get weight
/// `α² exp(μ)` and score `α (δ − exp(μ))`.
#[allow(clippy::too_many_arguments)]
pub fn iwls_weights_shared(
    y: &[f64],
    eta_l: &[f64],
    eta_ls_long: &[f64],
    sigma2_eps: f64,
    delta: &[f64],
    mu: &[f64],
    eta_ls_aug: &[f64],
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut w = Vec::with_capacity(y.len() + mu.len());
    let mut yt = Vec::with_capacity(y.len() + mu.len());
    for i in 0..y.len() {
        let v = (y[i] - eta_l[i] - eta_ls_long[i]) / sigma2_eps;
        w.push(1.0 / sigma2_eps);
        yt.push(eta_ls_long[i] + v * sigma2_eps);
    }
    for i in 0..mu.len() {
        let e = clip(mu[i]).0.exp().max(WEIGHT_FLOOR);
        let wi = alpha * alpha * e;
        let v = alpha * (delta[i] - e);
        w.push(wi);
        yt.push(if wi > 0.0 { eta_ls_aug[i] + v / wi } else { eta_ls_aug[i] });
    }
    (w, yt)
}

/// Draw from `IG(shape, scale)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    (scale / g).max(f64::MIN_POSITIVE)
}

fn inverse_gamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Full parameter vector plus cached predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub gamma: Vec<DVector<f64>>,
    pub sigma2: Vec<f64>,
    pub alpha: f64,
    pub sigma2_alpha: f64,
    pub sigma2_eps: f64,
    /// Per-block fitted values on the longitudinal rows (`l`, `ls` blocks).
    pub contrib_long: Vec<Option<DVector<f64>>>,
    /// Per-block fitted values on the augmented rows (`ls`, `s` blocks).
    pub contrib_aug: Vec<Option<DVector<f64>>>,
    pub eta_l: DVector<f64>,
    pub eta_ls_long: DVector<f64>,
    pub eta_ls_aug: DVector<f64>,
    /// Survival predictor on the augmented rows, baseline included.
    pub eta_s: DVector<f64>,
}

impl ChainState {
    /// Starting values: block coefficients and variances as stored in the
    /// model (zeros and the configured initial variances by default).
    pub fn initial(model: &JointModel) -> Self {
        let gamma = model.blocks.iter().map(|b| b.effect.gamma.clone()).collect();
        let sigma2 = model.blocks.iter().map(|b| b.variance.init).collect();
        let mut s = ChainState {
            gamma,
            sigma2,
            alpha: model.alpha.init,
            sigma2_alpha: model.alpha.variance.init,
            sigma2_eps: model.sigma2_eps.init,
            contrib_long: vec![None; model.blocks.len()],
            contrib_aug: vec![None; model.blocks.len()],
            eta_l: DVector::zeros(model.n_long()),
            eta_ls_long: DVector::zeros(model.n_long()),
            eta_ls_aug: DVector::zeros(model.n_aug()),
            eta_s: DVector::zeros(model.n_aug()),
        };
        s.refresh(model);
        s
    }

    /// Recompute every block contribution from the coefficients, then the
    /// predictor totals.
    pub fn refresh(&mut self, model: &JointModel) {
        for (k, b) in model.blocks.iter().enumerate() {
            let beta = b.effect.to_original(&self.gamma[k]);
            self.contrib_long[k] = b.long_design().map(|d| d.mul(&beta));
            self.contrib_aug[k] = b.surv_design().map(|d| d.mul(&beta));
        }
        self.recompute_totals(model);
    }

    /// Rebuild the predictor totals from the cached contributions.
    pub fn recompute_totals(&mut self, model: &JointModel) {
        self.eta_l.fill(0.0);
        self.eta_ls_long.fill(0.0);
        self.eta_ls_aug.fill(0.0);
        self.eta_s.fill(0.0);
        for (k, b) in model.blocks.iter().enumerate() {
            match b.predictor {
                Predictor::Longitudinal => self.eta_l += self.contrib_long[k].as_ref().unwrap(),
                Predictor::Shared => {
                    self.eta_ls_long += self.contrib_long[k].as_ref().unwrap();
                    self.eta_ls_aug += self.contrib_aug[k].as_ref().unwrap();
                }
                Predictor::Survival => self.eta_s += self.contrib_aug[k].as_ref().unwrap(),
            }
        }
    }

    /// Largest absolute difference between the cached predictors and a fresh
    /// evaluation of `Σ Z_k γ_k`.
    pub fn cache_error(&self, model: &JointModel) -> f64 {
        let mut fresh = self.clone();
        fresh.refresh(model);
        [
            (&self.eta_l, &fresh.eta_l),
            (&self.eta_ls_long, &fresh.eta_ls_long),
            (&self.eta_ls_aug, &fresh.eta_ls_aug),
            (&self.eta_s, &fresh.eta_s),
        ]
        .iter()
        .map(|(a, b)| (*a - *b).amax())
        .fold(0.0, f64::max)
    }

    /// Log-mean of every augmented row.
    pub fn mu(&self, model: &JointModel) -> DVector<f64> {
        let mut mu = DVector::from_column_slice(&model.offset);
        mu += &self.eta_s;
        mu.axpy(self.alpha, &self.eta_ls_aug, 1.0);
        mu
    }

    /// `y − η_l − η_ls` on the longitudinal rows.
    pub fn residual(&self, model: &JointModel) -> DVector<f64> {
        DVector::from_column_slice(&model.y) - &self.eta_l - &self.eta_ls_long
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Log-means clipped at ±[`MU_CLIP`] in likelihood evaluations.
    pub clipped: u64,
    /// Survival weights floored at [`WEIGHT_FLOOR`].
    pub floored: u64,
}

/// Proposal density `N(mean, P⁻¹)`.
struct Proposal {
    mean: DVector<f64>,
    precision: Precision,
}

/// Single-chain sampler. The public update methods are the individual steps
/// of a sweep and can be driven one by one.
pub struct Sampler<'a> {
    model: &'a JointModel,
    pub state: ChainState,
    rng: ChaCha8Rng,
    pub diagnostics: Diagnostics,
    proposed: Vec<u64>,
    accepted: Vec<u64>,
    alpha_proposed: u64,
    alpha_accepted: u64,
}

impl<'a> Sampler<'a> {
    /// Sampler for chain number `chain` of a run seeded with `seed`; chains
    /// use independent streams of the same generator.
    pub fn new(model: &'a JointModel, seed: u64, chain: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain as u64);
        Sampler {
            model,
            state: ChainState::initial(model),
            rng,
            diagnostics: Diagnostics::default(),
            proposed: vec![0; model.blocks.len()],
            accepted: vec![0; model.blocks.len()],
            alpha_proposed: 0,
            alpha_accepted: 0,
        }
    }

    pub fn model(&self) -> &JointModel {
        self.model
    }

    /// Replace the coefficients of block `k` and refresh the caches.
    pub fn set_gamma(&mut self, k: usize, gamma: DVector<f64>) {
        self.state.gamma[k] = gamma;
        self.state.refresh(self.model);
    }

    /// `exp(μ)` per row (after clipping) and the Poisson log-likelihood.
    fn evaluate(&mut self, mu: &DVector<f64>) -> (Vec<f64>, f64) {
        let mut e = Vec::with_capacity(mu.len());
        let mut ll = 0.0;
        for (&m, &d) in mu.iter().zip(&self.model.delta) {
            let (m, c) = clip(m);
            self.diagnostics.clipped += c as u64;
            let em = m.exp();
            ll += d * m - em;
            e.push(em);
        }
        (e, ll)
    }

    /// Gibbs draw of a longitudinal block from `N(P⁻¹ Z'r/σ², P⁻¹)`,
    /// `P = Z'Z/σ² + K/σ²_k`, `r` the partial residual.
    pub fn gibbs_update_longitudinal_block(&mut self, k: usize) -> Result<()> {
        let b = &self.model.blocks[k];
        if b.predictor != Predictor::Longitudinal {
            return Err(Error::InvalidInput(format!("{} is not a longitudinal block", b.label())));
        }
        let (mean, precision) = self.longitudinal_conditional(k)?;
        let z = standard_normal_vector(mean.len(), &mut self.rng);
        let gamma = &mean + precision.whiten_inverse(&z);
        let c_new = b.effect.effect_on(&b.effect.design, &gamma);
        let s = &mut self.state;
        s.eta_l += &c_new - s.contrib_long[k].as_ref().unwrap();
        s.contrib_long[k] = Some(c_new);
        s.gamma[k] = gamma;
        Ok(())
    }

    /// Mean and precision of the Gaussian full conditional of longitudinal
    /// block `k`.
    pub fn longitudinal_conditional(&self, k: usize) -> Result<(DVector<f64>, Precision)> {
        let b = &self.model.blocks[k];
        let s = &self.state;
        let mut partial = s.residual(self.model);
        partial += s.contrib_long[k].as_ref().unwrap();
        let rhs = b.effect.reduce_vector(b.effect.design.tr_mul(partial.as_slice())) / s.sigma2_eps;
        let precision = self.block_precision(k, None, true)?;
        Ok((precision.solve(&rhs), precision))
    }

    /// Precision `T'Z'WZT + T'Z_l'Z_lT/σ²_ε + K/σ²_k` of block `k`, with the
    /// augmented-row part present when `aug_weights` is given and the
    /// longitudinal part when `long` is set. Stays diagonal when every part is.
    fn block_precision(&self, k: usize, aug_weights: Option<&[f64]>, long: bool) -> Result<Precision> {
        let b = &self.model.blocks[k];
        let s = &self.state;
        let prior = b.effect.rank > 0;
        let aug_diag = aug_weights.and_then(|w| b.surv_design().unwrap().weighted_gram_diagonal(w));
        let diagonal = b.effect.constraint.is_none()
            && (aug_weights.is_none() || aug_diag.is_some())
            && (!long || b.long_gram_diagonal.is_some())
            && (!prior || b.penalty_diagonal.is_some());
        if diagonal {
            let mut d = aug_diag.unwrap_or_else(|| DVector::zeros(b.dim()));
            if long {
                d.axpy(1.0 / s.sigma2_eps, b.long_gram_diagonal.as_ref().unwrap(), 1.0);
            }
            if prior {
                d.axpy(1.0 / s.sigma2[k], b.penalty_diagonal.as_ref().unwrap(), 1.0);
            }
            return Precision::from_diagonal(d);
        }
        let mut p = match (aug_weights, aug_diag) {
            (_, Some(d)) => b.effect.reduce_diagonal(&d),
            (Some(w), None) => b.effect.reduce_matrix(b.surv_design().unwrap().weighted_gram(w)),
            (None, None) => DMatrix::zeros(b.dim(), b.dim()),
        };
        if long {
            p += b.long_gram.as_ref().unwrap() / s.sigma2_eps;
        }
        if prior {
            p += &b.effect.penalty / s.sigma2[k];
        }
        Precision::factor(p)
    }

    /// IWLS proposal for block `k` at coefficients `gamma`, given that
    /// block's augmented-row contribution and `exp(μ)` at `gamma`.
    fn iwls_proposal(
        &mut self,
        k: usize,
        gamma: &DVector<f64>,
        c_aug: &DVector<f64>,
        exp_mu: &[f64],
        long_partial: Option<&DVector<f64>>,
    ) -> Result<Proposal> {
        let b = &self.model.blocks[k];
        let s = &self.state;
        // the block enters the log-hazard scaled by α when shared
        let scale = if b.predictor == Predictor::Shared { s.alpha } else { 1.0 };
        let m = exp_mu.len();
        let mut w = vec![0.0; m];
        let mut work = vec![0.0; m];
        let mut floored = 0;
        for i in 0..m {
            let mut e = exp_mu[i];
            if e < WEIGHT_FLOOR {
                e = WEIGHT_FLOOR;
                floored += 1;
            }
            w[i] = scale * scale * e;
            work[i] = w[i] * c_aug[i] + scale * (self.model.delta[i] - e);
        }
        if b.predictor == Predictor::Survival {
            self.diagnostics.floored += floored;
        }
        let d = b.surv_design().unwrap();
        let mut rhs = d.tr_mul(&work);
        if let Some(partial) = long_partial {
            rhs += b.effect.design.tr_mul(partial.as_slice()) / s.sigma2_eps;
        }
        let rhs = b.effect.reduce_vector(rhs);
        debug_assert_eq!(gamma.len(), rhs.len());
        let precision = self.block_precision(k, Some(&w), long_partial.is_some())?;
        Ok(Proposal {
            mean: precision.solve(&rhs),
            precision,
        })
    }

    /// Mean of the IWLS proposal for an `s` or `ls` block at the current state.
    pub fn proposal_mean(&mut self, k: usize) -> Result<DVector<f64>> {
        let gamma = self.state.gamma[k].clone();
        let c_aug = self.state.contrib_aug[k].clone().unwrap();
        let mu = self.state.mu(self.model);
        let (e, _) = self.evaluate(&mu);
        let partial = self.long_partial(k);
        Ok(self.iwls_proposal(k, &gamma, &c_aug, &e, partial.as_ref())?.mean)
    }

    /// `y − η_l − η_ls + Z_k γ_k` for a shared block.
    fn long_partial(&self, k: usize) -> Option<DVector<f64>> {
        let s = &self.state;
        self.model.blocks[k].long_design()?;
        let mut r = s.residual(self.model);
        r += s.contrib_long[k].as_ref().unwrap();
        Some(r)
    }

    fn log_prior(&self, k: usize, gamma: &DVector<f64>) -> f64 {
        let b = &self.model.blocks[k];
        if b.effect.rank == 0 {
            0.0
        } else {
            -0.5 * b.effect.penalty_quad(gamma) / self.state.sigma2[k]
        }
    }

    /// IWLS-MH update of a survival block. Returns whether the proposal was
    /// accepted.
    pub fn iwls_mh_update_survival_block(&mut self, k: usize) -> Result<bool> {
        if self.model.blocks[k].predictor != Predictor::Survival {
            return Err(Error::InvalidInput(format!(
                "{} is not a survival block",
                self.model.blocks[k].label()
            )));
        }
        self.iwls_mh_update(k)
    }

    /// IWLS-MH update of a shared block against the joint likelihood.
    pub fn iwls_mh_update_shared_block(&mut self, k: usize) -> Result<bool> {
        if self.model.blocks[k].predictor != Predictor::Shared {
            return Err(Error::InvalidInput(format!(
                "{} is not a shared block",
                self.model.blocks[k].label()
            )));
        }
        self.iwls_mh_update(k)
    }

    fn iwls_mh_update(&mut self, k: usize) -> Result<bool> {
        let model = self.model;
        let b = &model.blocks[k];
        let shared = b.predictor == Predictor::Shared;
        let scale = if shared { self.state.alpha } else { 1.0 };

        let g0 = self.state.gamma[k].clone();
        let c_aug0 = self.state.contrib_aug[k].clone().unwrap();
        let mu0 = self.state.mu(model);
        let partial = self.long_partial(k);

        let (e0, ll0) = self.evaluate(&mu0);
        let fwd = self.iwls_proposal(k, &g0, &c_aug0, &e0, partial.as_ref())?;
        let z = standard_normal_vector(g0.len(), &mut self.rng);
        let g1 = &fwd.mean + fwd.precision.whiten_inverse(&z);

        let beta1 = b.effect.to_original(&g1);
        let c_aug1 = b.surv_design().unwrap().mul(&beta1);
        let mut mu1 = mu0.clone();
        mu1.axpy(scale, &(&c_aug1 - &c_aug0), 1.0);
        let (e1, ll1) = self.evaluate(&mu1);
        let rev = self.iwls_proposal(k, &g1, &c_aug1, &e1, partial.as_ref())?;

        let mut log_ratio = ll1 - ll0;
        let mut c_long1 = None;
        if let Some(partial) = &partial {
            let c_long0 = self.state.contrib_long[k].as_ref().unwrap();
            let c1 = b.effect.design.mul(&beta1);
            let rss0 = (partial - c_long0).norm_squared();
            let rss1 = (partial - &c1).norm_squared();
            log_ratio += -0.5 * (rss1 - rss0) / self.state.sigma2_eps;
            c_long1 = Some(c1);
        }
        log_ratio += self.log_prior(k, &g1) - self.log_prior(k, &g0);
        log_ratio += rev.precision.log_density(&g0, &rev.mean) - fwd.precision.log_density(&g1, &fwd.mean);

        self.proposed[k] += 1;
        let u: f64 = self.rng.random();
        if log_ratio.is_nan() || u.ln() >= log_ratio {
            return Ok(false);
        }
        self.accepted[k] += 1;
        let s = &mut self.state;
        match b.predictor {
            Predictor::Shared => {
                let c1 = c_long1.unwrap();
                s.eta_ls_long += &c1 - s.contrib_long[k].as_ref().unwrap();
                s.contrib_long[k] = Some(c1);
                s.eta_ls_aug += &c_aug1 - &c_aug0;
            }
            _ => s.eta_s += &c_aug1 - &c_aug0,
        }
        s.contrib_aug[k] = Some(c_aug1);
        s.gamma[k] = g1;
        Ok(true)
    }

    /// IWLS proposal for `α` with design column `η_ls` on the augmented rows
    /// and prior `N(0, σ²_α)`.
    fn alpha_proposal(&self, alpha: f64, exp_mu: &[f64]) -> (f64, f64) {
        let x = &self.state.eta_ls_aug;
        let mut p = 1.0 / self.state.sigma2_alpha;
        let mut rhs = 0.0;
        for (i, &e) in exp_mu.iter().enumerate() {
            p += x[i] * x[i] * e;
            rhs += x[i] * x[i] * e * alpha + x[i] * (self.model.delta[i] - e);
        }
        (rhs / p, p)
    }

    /// IWLS-MH update of the association parameter.
    pub fn update_alpha(&mut self) -> Result<bool> {
        if self.model.alpha.fixed {
            return Ok(false);
        }
        let a0 = self.state.alpha;
        let mu0 = self.state.mu(self.model);
        let (e0, ll0) = self.evaluate(&mu0);
        let (m0, p0) = self.alpha_proposal(a0, &e0);
        let z: f64 = self.rng.sample(rand_distr::StandardNormal);
        let a1 = m0 + z / p0.sqrt();
        let mut mu1 = mu0.clone();
        mu1.axpy(a1 - a0, &self.state.eta_ls_aug, 1.0);
        let (e1, ll1) = self.evaluate(&mu1);
        let (m1, p1) = self.alpha_proposal(a1, &e1);
        let log_q = |x: f64, m: f64, p: f64| 0.5 * p.ln() - 0.5 * p * (x - m) * (x - m);
        let s2 = self.state.sigma2_alpha;
        let log_ratio = ll1 - ll0 - 0.5 * (a1 * a1 - a0 * a0) / s2
            + log_q(a0, m1, p1)
            - log_q(a1, m0, p0);
        self.alpha_proposed += 1;
        let u: f64 = self.rng.random();
        if log_ratio.is_nan() || u.ln() >= log_ratio {
            return Ok(false);
        }
        self.alpha_accepted += 1;
        self.state.alpha = a1;
        Ok(true)
    }

    /// Gibbs draws of all sampled variances:
    /// `σ²_ε ~ IG(a0 + N/2, b0 + RSS/2)`,
    /// `σ²_k ~ IG(a_k + rk(K_k)/2, b_k + γ'K_kγ/2)`,
    /// `σ²_α ~ IG(a_α + 1/2, b_α + α²/2)`.
    pub fn gibbs_update_variances(&mut self) {
        let model = self.model;
        if let (Some((a0, b0)), true) = (model.sigma2_eps.prior, model.n_long() > 0) {
            let rss = self.state.residual(model).norm_squared();
            self.state.sigma2_eps =
                sample_inverse_gamma(a0 + 0.5 * model.n_long() as f64, b0 + 0.5 * rss, &mut self.rng);
        }
        for (k, b) in model.blocks.iter().enumerate() {
            if let Some((a, bb)) = b.variance.prior {
                let q = b.effect.penalty_quad(&self.state.gamma[k]).max(0.0);
                self.state.sigma2[k] =
                    sample_inverse_gamma(a + 0.5 * b.effect.rank as f64, bb + 0.5 * q, &mut self.rng);
            }
        }
        if let (Some((a, b)), false) = (model.alpha.variance.prior, model.alpha.fixed) {
            let al = self.state.alpha;
            self.state.sigma2_alpha = sample_inverse_gamma(a + 0.5, b + 0.5 * al * al, &mut self.rng);
        }
    }

    /// One full sweep; totals are rebuilt from the block contributions at
    /// the end so rounding drift cannot accumulate.
    pub fn sweep(&mut self) -> Result<()> {
        let model = self.model;
        for (k, b) in model.blocks.iter().enumerate() {
            if b.predictor == Predictor::Longitudinal {
                self.gibbs_update_longitudinal_block(k)?;
            }
        }
        for (k, b) in model.blocks.iter().enumerate() {
            if b.predictor == Predictor::Survival {
                self.iwls_mh_update_survival_block(k)?;
            }
        }
        for (k, b) in model.blocks.iter().enumerate() {
            if b.predictor == Predictor::Shared {
                self.iwls_mh_update_shared_block(k)?;
            }
        }
        self.update_alpha()?;
        self.gibbs_update_variances();
        self.state.recompute_totals(model);
        Ok(())
    }

    /// Unnormalized joint log-posterior of the current state.
    pub fn log_posterior(&self) -> f64 {
        let model = self.model;
        let s = &self.state;
        let mut lp = 0.0;
        if model.n_long() > 0 {
            lp += gaussian_loglik(&model.y, s.eta_l.as_slice(), s.eta_ls_long.as_slice(), s.sigma2_eps)
                .unwrap_or(f64::NEG_INFINITY);
            if let Some((a, b)) = model.sigma2_eps.prior {
                lp += inverse_gamma_logpdf(s.sigma2_eps, a, b);
            }
        }
        lp += poisson_loglik_mu(&model.delta, s.mu(model).as_slice()).0;
        for (k, b) in model.blocks.iter().enumerate() {
            if b.effect.rank > 0 {
                lp += -0.5 * b.effect.rank as f64 * s.sigma2[k].ln() + self.log_prior(k, &s.gamma[k]);
            }
            if let Some((a, bb)) = b.variance.prior {
                lp += inverse_gamma_logpdf(s.sigma2[k], a, bb);
            }
        }
        if !model.alpha.fixed {
            lp += -0.5 * s.sigma2_alpha.ln() - 0.5 * s.alpha * s.alpha / s.sigma2_alpha;
            if let Some((a, b)) = model.alpha.variance.prior {
                lp += inverse_gamma_logpdf(s.sigma2_alpha, a, b);
            }
        }
        lp
    }

    /// Acceptance rate per Metropolis-Hastings block (and `alpha`).
    pub fn acceptance(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (k, b) in self.model.blocks.iter().enumerate() {
            if self.proposed[k] > 0 {
                out.insert(b.label().to_string(), self.accepted[k] as f64 / self.proposed[k] as f64);
            }
        }
        if self.alpha_proposed > 0 {
            out.insert("alpha".into(), self.alpha_accepted as f64 / self.alpha_proposed as f64);
        }
        out
    }

    /// Current values of every output parameter, in [`parameter_names`] order.
    pub fn current_draw(&self) -> Vec<f64> {
        let model = self.model;
        let s = &self.state;
        let mut out = Vec::new();
        for (k, b) in model.blocks.iter().enumerate() {
            out.extend(b.effect.to_original(&s.gamma[k]).iter());
            if b.variance.is_sampled() {
                out.push(s.sigma2[k]);
            }
        }
        out.push(s.alpha);
        if alpha_variance_reported(model) {
            out.push(s.sigma2_alpha);
        }
        if model.n_long() > 0 {
            out.push(s.sigma2_eps);
        }
        out
    }
}

fn alpha_variance_reported(model: &JointModel) -> bool {
    !model.alpha.fixed && model.alpha.variance.is_sampled()
}

/// Output column names: `label.i` for coefficient `i` of a block in original
/// coordinates, `label.sigma2` for sampled block variances, then `alpha`,
/// `sigma2_alpha` and `sigma2_eps`.
pub fn parameter_names(model: &JointModel) -> Vec<String> {
    let mut names = Vec::new();
    for b in &model.blocks {
        for i in 0..b.effect.original_dim() {
            names.push(format!("{}.{}", b.label(), i));
        }
        if b.variance.is_sampled() {
            names.push(format!("{}.sigma2", b.label()));
        }
    }
    names.push("alpha".into());
    if alpha_variance_reported(model) {
        names.push("sigma2_alpha".into());
    }
    if model.n_long() > 0 {
        names.push("sigma2_eps".into());
    }
    names
}

/// Retained draws and run statistics of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub names: Vec<String>,
    /// One row per retained draw.
    pub draws: Vec<Vec<f64>>,
    pub acceptance: BTreeMap<String, f64>,
    /// Joint log-posterior after every iteration, burn-in included.
    pub log_posterior: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub elapsed_seconds: f64,
}

/// Contents of the JSON sidecar written next to the draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub chain: usize,
    pub seed: u64,
    pub draws: usize,
    pub acceptance: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
    pub elapsed_seconds: f64,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index_of(name)?;
        Some(self.draws.iter().map(|d| d[i]).collect())
    }

    /// Draws of all coefficients of a block, one vector per draw.
    pub fn block_draws(&self, label: &str) -> Vec<Vec<f64>> {
        let prefix = format!("{label}.");
        let idx: Vec<usize> = self
            .names
            .iter()
            .enumerate()
            .filter(|(_, n)| {
                n.strip_prefix(&prefix)
                    .is_some_and(|rest| rest.parse::<usize>().is_ok())
            })
            .map(|(i, _)| i)
            .collect();
        self.draws.iter().map(|d| idx.iter().map(|&i| d[i]).collect()).collect()
    }

    pub fn write_draws_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.draws.iter().map(|d| d.iter().map(|&x| format_number(x)).collect());
        write_table(path, &self.names, rows)
    }

    /// Read a draws file back; run statistics are left empty.
    pub fn read_draws_csv(path: impl AsRef<Path>) -> Result<ChainOutput> {
        let table = read_table(&path)?;
        let cols = table
            .headers
            .iter()
            .map(|h| table.numeric_col(&path, h))
            .collect::<Result<Vec<_>>>()?;
        let n = cols.first().map_or(0, Vec::len);
        let draws = (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        Ok(ChainOutput {
            chain: 0,
            seed: 0,
            names: table.headers,
            draws,
            acceptance: BTreeMap::new(),
            log_posterior: Vec::new(),
            diagnostics: Diagnostics::default(),
            elapsed_seconds: 0.0,
        })
    }

    pub fn sidecar(&self) -> ChainSidecar {
        ChainSidecar {
            chain: self.chain,
            seed: self.seed,
            draws: self.draws.len(),
            acceptance: self.acceptance.clone(),
            diagnostics: self.diagnostics,
            elapsed_seconds: self.elapsed_seconds,
        }
    }
}

/// `chain,iteration,log_posterior` for every iteration of every chain,
/// burn-in included.
pub fn write_traces_csv(path: impl AsRef<Path>, chains: &[ChainOutput]) -> Result<()> {
    let header: Vec<String> = ["chain", "iteration", "log_posterior"].map(String::from).to_vec();
    let rows = chains.iter().flat_map(|c| {
        c.log_posterior
            .iter()
            .enumerate()
            .map(move |(i, lp)| vec![c.chain.to_string(), (i + 1).to_string(), format_number(*lp)])
    });
    write_table(path, &header, rows)
}

/// Run one chain: `iterations` sweeps, keeping every `thinning`-th state
/// after `burn_in`.
pub fn run_chain(model: &JointModel, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    cfg.check()?;
    let start = Instant::now();
    let mut sampler = Sampler::new(model, cfg.seed, chain);
    let mut draws = Vec::with_capacity(cfg.retained());
    let mut log_posterior = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        sampler.sweep().map_err(|e| Error::Sampler {
            iteration: it,
            source: Box::new(e),
        })?;
        log_posterior.push(sampler.log_posterior());
        if it > cfg.burn_in && (it - cfg.burn_in) % cfg.thinning == 0 {
            draws.push(sampler.current_draw());
        }
    }
    Ok(ChainOutput {
        chain,
        seed: cfg.seed,
        names: parameter_names(model),
        draws,
        acceptance: sampler.acceptance(),
        log_posterior,
        diagnostics: sampler.diagnostics,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run `cfg.chains` chains in parallel; results are in chain order.
pub fn run_chains(model: &JointModel, cfg: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(model, cfg, c))
        .collect()
}

/// Pool the draws of several chains (all chains must share names).
pub fn pool_chains(chains: &[ChainOutput]) -> Result<ChainOutput> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidInput("no chains to pool".into()))?;
    let mut pooled = first.clone();
    for c in &chains[1..] {
        if c.names != first.names {
            return Err(Error::InvalidInput("chains have different parameters".into()));
        }
        pooled.draws.extend(c.draws.iter().cloned());
        pooled.log_posterior.extend(&c.log_posterior);
    }
    Ok(pooled)
}
