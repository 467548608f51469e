#![allow(dead_code)]

pub mod props;

use jointpam::basis::EffectBlock;
use jointpam::config::Predictor;
use jointpam::design::Design;
use jointpam::model::{AlphaSpec, BlockKind, JointModel, ModelBlock, VarianceSpec};
use nalgebra::DMatrix;

pub fn ones(n: usize) -> Design {
    Design::Dense(DMatrix::from_element(n, 1, 1.0))
}

/// Scalar block with a `N(0, prior_var)` prior.
pub fn scalar_block(p: Predictor, label: &str, nrows: usize, aug_rows: Option<usize>, prior_var: f64) -> ModelBlock {
    let effect = EffectBlock::new(label, ones(nrows), DMatrix::identity(1, 1)).unwrap();
    ModelBlock::new(p, BlockKind::Custom, effect, aug_rows.map(ones), VarianceSpec::fixed(prior_var)).unwrap()
}

pub fn fixed_alpha(value: f64) -> AlphaSpec {
    AlphaSpec {
        init: value,
        fixed: true,
        variance: VarianceSpec::fixed(1.0),
    }
}

pub struct GaussianToy {
    pub model: JointModel,
    pub post_mean: f64,
    pub post_var: f64,
}

/// `y_i ~ N(β, σ²)`, `β ~ N(0, τ²)`, both variances known.
pub fn gaussian_toy() -> GaussianToy {
    let y = vec![1.3, 0.2, 2.1, 1.7, 0.9, 1.1, 2.6, 0.4, 1.5, 1.8, 0.7, 1.2];
    let (s2, t2) = (1.5, 4.0);
    let n = y.len() as f64;
    let prec = n / s2 + 1.0 / t2;
    let post_mean = y.iter().sum::<f64>() / s2 / prec;
    let block = scalar_block(Predictor::Longitudinal, "l.beta", y.len(), None, t2);
    let model = JointModel::new(y, vec![], vec![], vec![block], fixed_alpha(0.0), VarianceSpec::fixed(s2)).unwrap();
    GaussianToy {
        model,
        post_mean,
        post_var: 1.0 / prec,
    }
}

/// Posterior mean and variance of a density on a 1-D grid, from log
/// density values.
pub fn grid_moments(xs: &[f64], logp: &[f64]) -> (f64, f64) {
    let top = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let m = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
    let v = xs.iter().zip(&w).map(|(x, w)| (x - m).powi(2) * w).sum::<f64>() / z;
    (m, v)
}

pub struct PoissonToy {
    pub model: JointModel,
    pub offset: Vec<f64>,
    pub delta: Vec<f64>,
    pub prior_var: f64,
}

/// Piecewise-exponential rows sharing one log-rate `β ~ N(0, 4)`.
pub fn poisson_toy() -> PoissonToy {
    let exposure = [0.4, 0.25, 0.6, 0.1, 0.9, 0.35, 0.5, 0.2];
    let offset: Vec<f64> = exposure.iter().map(|e: &f64| e.ln()).collect();
    let delta = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
    let prior_var = 4.0;
    let block = scalar_block(Predictor::Survival, "s.beta0", offset.len(), None, prior_var);
    let model = JointModel::new(
        vec![],
        offset.clone(),
        delta.clone(),
        vec![block],
        fixed_alpha(0.0),
        VarianceSpec::fixed(1.0),
    )
    .unwrap();
    PoissonToy {
        model,
        offset,
        delta,
        prior_var,
    }
}

impl PoissonToy {
    pub fn log_posterior(&self, beta: f64) -> f64 {
        let ll: f64 = self
            .offset
            .iter()
            .zip(&self.delta)
            .map(|(o, d)| d * (o + beta) - (o + beta).exp())
            .sum();
        ll - 0.5 * beta * beta / self.prior_var
    }

    /// Moments on the grid `[-10, 10]` with step `1e-3`.
    pub fn grid_moments(&self) -> (f64, f64) {
        let xs: Vec<f64> = (0..=20_000).map(|i| -10.0 + i as f64 * 1e-3).collect();
        let lp: Vec<f64> = xs.iter().map(|&b| self.log_posterior(b)).collect();
        grid_moments(&xs, &lp)
    }
}

pub struct JointToy {
    pub model: JointModel,
    pub y: Vec<f64>,
    pub offset: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma2_eps: f64,
    pub var_b: f64,
    pub var_beta0: f64,
    pub var_alpha: f64,
}

/// One scalar shared effect `b` seen by both outcomes:
/// `y_i ~ N(b, σ²)`, log-hazard `β0 + α b` on piecewise-exponential rows,
/// with `b ~ N(0, 1)`, `β0 ~ N(0, 4)`, `α ~ N(0, 1)` and all variances fixed.
pub fn joint_toy() -> JointToy {
    let y = vec![1.4, 0.6, 1.1, 1.9, 0.8, 1.3];
    let exposure = [0.3, 0.3, 0.2, 0.5, 0.4, 0.15, 0.6, 0.25, 0.45, 0.35];
    let offset: Vec<f64> = exposure.iter().map(|e: &f64| e.ln()).collect();
    let delta = vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
    let (sigma2_eps, var_b, var_beta0, var_alpha) = (1.0, 1.0, 4.0, 1.0);
    let b = scalar_block(Predictor::Shared, "ls.b", y.len(), Some(offset.len()), var_b);
    let beta0 = scalar_block(Predictor::Survival, "s.beta0", offset.len(), None, var_beta0);
    let alpha = AlphaSpec {
        init: -0.1,
        fixed: false,
        variance: VarianceSpec::fixed(var_alpha),
    };
    let model = JointModel::new(
        y.clone(),
        offset.clone(),
        delta.clone(),
        vec![b, beta0],
        alpha,
        VarianceSpec::fixed(sigma2_eps),
    )
    .unwrap();
    JointToy {
        model,
        y,
        offset,
        delta,
        sigma2_eps,
        var_b,
        var_beta0,
        var_alpha,
    }
}

impl JointToy {
    pub fn log_posterior(&self, b: f64, alpha: f64, beta0: f64) -> f64 {
        let mut lp = -0.5 * self.y.iter().map(|y| (y - b).powi(2)).sum::<f64>() / self.sigma2_eps;
        for (o, d) in self.offset.iter().zip(&self.delta) {
            let mu = o + beta0 + alpha * b;
            lp += d * mu - mu.exp();
        }
        lp - 0.5 * b * b / self.var_b - 0.5 * beta0 * beta0 / self.var_beta0 - 0.5 * alpha * alpha / self.var_alpha
    }

    /// Posterior means of `(b, α, β0)` on a regular 3-D grid.
    pub fn grid_means(&self, n: usize) -> [f64; 3] {
        let axis = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() };
        let bs = axis(-1.5, 3.5);
        let als = axis(-6.0, 6.0);
        let b0s = axis(-12.0, 10.0);
        let mut top = f64::NEG_INFINITY;
        let mut lps = Vec::with_capacity(n * n * n);
        for &b in &bs {
            for &a in &als {
                for &c in &b0s {
                    let lp = self.log_posterior(b, a, c);
                    top = top.max(lp);
                    lps.push(lp);
                }
            }
        }
        let mut z = 0.0;
        let mut m = [0.0; 3];
        let mut idx = 0;
        for &b in &bs {
            for &a in &als {
                for &c in &b0s {
                    let w = (lps[idx] - top).exp();
                    idx += 1;
                    z += w;
                    m[0] += w * b;
                    m[1] += w * a;
                    m[2] += w * c;
                }
            }
        }
        m.map(|v| v / z)
    }
}
