mod common;

use common::{fixed_alpha, scalar_block};
use jointpam::bench::{model_config, write_study};
use jointpam::config::{Predictor, SamplerConfig};
use jointpam::model::{AlphaSpec, JointModel, VarianceSpec};
use jointpam::posterior::{batch_means_mcse, mean};
use jointpam::sampler::{
    gaussian_loglik, iwls_weights_shared, iwls_weights_survival, poisson_loglik, poisson_loglik_mu, run_chain,
    sample_inverse_gamma, Sampler, MU_CLIP,
};
use jointpam::simulate::{simulate_study, Setting, SimulationConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN_2PI: f64 = 1.8378770664093453;

#[test]
fn gaussian_loglik_examples() {
    let ll = gaussian_loglik(&[0.7], &[0.3], &[0.4], 1.0).unwrap();
    assert!((ll + 0.5 * LN_2PI).abs() < 1e-14);

    let y = [1.0, -2.0, 0.5];
    let zeros = [0.0; 3];
    let ll = gaussian_loglik(&y, &zeros, &zeros, 1.0).unwrap();
    let rr: f64 = y.iter().map(|r| r * r).sum();
    assert!((ll - (-1.5 * LN_2PI - 0.5 * rr)).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 7;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s2 = 0.7;
    let product: f64 = (0..n)
        .map(|i| (-(y[i] - a[i] - b[i]).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt())
        .product();
    let ll = gaussian_loglik(&y, &a, &b, s2).unwrap();
    assert!((ll - product.ln()).abs() < 1e-10);

    assert!(gaussian_loglik(&y, &a, &b, 0.0).is_err());
    assert!(gaussian_loglik(&y, &a[..3], &b, 1.0).is_err());
}

#[test]
fn poisson_loglik_examples() {
    assert_eq!(poisson_loglik_mu(&[1.0], &[0.0]), (-1.0, 0));
    assert_eq!(poisson_loglik_mu(&[0.0], &[0.0]), (-1.0, 0));

    // the seven rows of the two-subject example with all predictors zero
    let exposure = [0.3, 0.1, 0.2, 0.25, 0.3, 0.1, 0.18];
    let offset: Vec<f64> = exposure.iter().map(|e: &f64| e.ln()).collect();
    let delta = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let zeros = [0.0; 7];
    let ll = poisson_loglik(&delta, &zeros, &offset, &zeros, -0.3, &zeros);
    let hand = 0.25f64.ln() - (0.85 + 0.58);
    assert!((ll - hand).abs() < 1e-12);

    let (ll, clipped) = poisson_loglik_mu(&[1.0, 0.0], &[100.0, -100.0]);
    assert_eq!(clipped, 2);
    assert!((ll - (MU_CLIP - MU_CLIP.exp() - (-MU_CLIP).exp())).abs() < 1e-6);
}

/// Central first and second differences of `f` at `x`.
fn derivatives(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
    let h = 1e-4;
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    (d1, d2)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn survival_weights_examples() {
    let (w, yt, floored) = iwls_weights_survival(&[1.0, 0.0], &[0.0, 0.0], &[0.4, 0.4]);
    assert_eq!(w, vec![1.0, 1.0]);
    assert_eq!(yt, vec![0.4, 0.4 - 1.0]);
    assert_eq!(floored, 0);
    let (w, _, floored) = iwls_weights_survival(&[0.0], &[-29.5], &[0.0]);
    assert_eq!(floored, 1);
    assert_eq!(w[0], 1e-12);
}

#[test]
fn survival_scores_and_weights_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let delta = rng.random_range(0..2) as f64;
        let eta = rng.random_range(-2.0..2.0);
        let rest = rng.random_range(-2.0..1.0);
        let row = |e: f64| delta * (e + rest) - (e + rest).exp();
        let (w, yt, _) = iwls_weights_survival(&[delta], &[eta + rest], &[eta]);
        let (d1, d2) = derivatives(row, eta);
        assert!(rel_err(w[0] * (yt[0] - eta), d1) < 1e-6);
        assert!(rel_err(w[0], -d2) < 1e-6);
    }
}

#[test]
fn shared_weights_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let s2 = rng.random_range(0.2..2.0);
        let alpha = rng.random_range(-1.5..1.5);
        let (y, eta_l, eta) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let delta = rng.random_range(0..2) as f64;
        let rest = rng.random_range(-2.0..1.0);
        let (w, yt) = iwls_weights_shared(&[y], &[eta_l], &[eta], s2, &[delta], &[rest + alpha * eta], &[eta], alpha);

        let long_row = |e: f64| -(y - eta_l - e).powi(2) / (2.0 * s2);
        let (d1, d2) = derivatives(long_row, eta);
        assert!(rel_err(w[0] * (yt[0] - eta), d1) < 1e-6);
        assert!(rel_err(w[0], -d2) < 1e-6);

        let aug_row = |e: f64| delta * (rest + alpha * e) - (rest + alpha * e).exp();
        let (d1, d2) = derivatives(aug_row, eta);
        assert!(rel_err(w[1] * (yt[1] - eta), d1) < 1e-6);
        assert!(rel_err(w[1], -d2) < 1e-6);
    }
}

#[test]
fn shared_weights_without_association_are_gaussian() {
    let (w, yt) = iwls_weights_shared(&[1.0], &[0.2], &[0.3], 0.5, &[1.0, 0.0], &[0.1, -0.4], &[0.3, 0.3], 0.0);
    assert_eq!(w, vec![2.0, 0.0, 0.0]);
    assert!((yt[0] - (0.3 + 0.5)).abs() < 1e-15);
    assert_eq!(&yt[1..], &[0.3, 0.3]);
}

#[test]
fn inverse_gamma_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, b) = (5.0, 3.0);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_inverse_gamma(a, b, &mut rng)).collect();
    let target = b / (a - 1.0);
    let sd = (b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0))).sqrt();
    assert!((mean(&draws) - target).abs() < 3.0 * sd / (draws.len() as f64).sqrt());
    assert!(draws.iter().all(|&x| x > 0.0));
}

#[test]
fn gibbs_conditional_has_closed_form() {
    let g = common::gaussian_toy();
    let sampler = Sampler::new(&g.model, 1, 0);
    let (m, p) = sampler.longitudinal_conditional(0).unwrap();
    assert!((m[0] - g.post_mean).abs() < 1e-12);
    let var = p.solve(&DVector::from_element(1, 1.0))[0];
    assert!((var - g.post_var).abs() < 1e-12);
}

#[test]
fn gibbs_draws_match_closed_form() {
    let y = vec![0.4, 1.1, -0.3, 0.9, 0.6];
    let block = scalar_block(Predictor::Longitudinal, "l.beta", y.len(), None, 2.0);
    let model = JointModel::new(y.clone(), vec![], vec![], vec![block], fixed_alpha(0.0), VarianceSpec::fixed(0.8)).unwrap();
    let prec = 5.0 / 0.8 + 0.5;
    let (mu, var) = (y.iter().sum::<f64>() / 0.8 / prec, 1.0 / prec);
    let mut s = Sampler::new(&model, 9, 0);
    let draws: Vec<f64> = (0..50_000)
        .map(|_| {
            s.gibbs_update_longitudinal_block(0).unwrap();
            s.state.gamma[0][0]
        })
        .collect();
    let n = draws.len() as f64;
    let m = mean(&draws);
    let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((m - mu).abs() < 3.0 * (var / n).sqrt());
    // standard error of a normal sample variance is var·√(2/(n−1))
    assert!((v - var).abs() < 3.0 * var * (2.0 / (n - 1.0)).sqrt());
}

#[test]
fn infinite_penalty_shrinks_to_zero() {
    let y = vec![3.0, 2.5, 3.5];
    let block = scalar_block(Predictor::Longitudinal, "l.beta", y.len(), None, 1e-10);
    let model = JointModel::new(y, vec![], vec![], vec![block], fixed_alpha(0.0), VarianceSpec::fixed(1.0)).unwrap();
    let mut s = Sampler::new(&model, 2, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        s.gibbs_update_longitudinal_block(0).unwrap();
        worst = worst.max(s.state.gamma[0][0].abs());
    }
    assert!(worst < 1e-3);
}

/// A shared scalar seen only by the Gaussian outcome (`α = 0`).
fn gaussian_shared_model() -> (JointModel, f64) {
    let y = vec![1.2, 0.8, 1.9, 1.4];
    let (s2, t2) = (0.5, 3.0);
    let block = scalar_block(Predictor::Shared, "ls.b", y.len(), Some(3), t2);
    let mode = y.iter().sum::<f64>() / s2 / (y.len() as f64 / s2 + 1.0 / t2);
    let model = JointModel::new(
        y,
        vec![0.1f64.ln(); 3],
        vec![0.0, 1.0, 0.0],
        vec![block],
        fixed_alpha(0.0),
        VarianceSpec::fixed(s2),
    )
    .unwrap();
    (model, mode)
}

#[test]
fn iwls_mode_is_a_fixed_point() {
    let (model, mode) = gaussian_shared_model();
    let mut s = Sampler::new(&model, 1, 0);
    s.set_gamma(0, DVector::from_element(1, mode));
    let m = s.proposal_mean(0).unwrap();
    assert!((m[0] - mode).abs() < 1e-8);
}

#[test]
fn exact_proposals_are_always_accepted() {
    let (model, _) = gaussian_shared_model();
    let cfg = SamplerConfig {
        iterations: 2000,
        burn_in: 0,
        thinning: 1,
        seed: 4,
        chains: 1,
    };
    let chain = run_chain(&model, &cfg, 0).unwrap();
    let rate = chain.acceptance["ls.b"];
    assert!(rate > 0.999, "acceptance {rate}");
}

#[test]
fn alpha_without_shared_signal_samples_its_prior() {
    let p = common::poisson_toy();
    let block = p.model.blocks[0].clone();
    let alpha = AlphaSpec {
        init: 0.0,
        fixed: false,
        variance: VarianceSpec::fixed(2.0),
    };
    let model = JointModel::new(vec![], p.offset.clone(), p.delta.clone(), vec![block], alpha, VarianceSpec::fixed(1.0)).unwrap();
    let cfg = SamplerConfig {
        iterations: 21_000,
        burn_in: 1000,
        thinning: 1,
        seed: 8,
        chains: 1,
    };
    let chain = run_chain(&model, &cfg, 0).unwrap();
    let a = chain.column("alpha").unwrap();
    let m = mean(&a);
    let v = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / a.len() as f64;
    assert!(m.abs() < 3.0 * batch_means_mcse(&a), "mean {m}");
    assert!((v - 2.0).abs() < 0.15, "variance {v}");
}

#[test]
fn retained_draw_count() {
    let g = common::gaussian_toy();
    let cfg = SamplerConfig {
        iterations: 10,
        burn_in: 0,
        thinning: 1,
        seed: 1,
        chains: 1,
    };
    let chain = run_chain(&g.model, &cfg, 0).unwrap();
    assert_eq!(chain.len(), 10);
    assert_eq!(chain.log_posterior.len(), 10);
    let cfg = SamplerConfig {
        iterations: 1000,
        burn_in: 100,
        thinning: 9,
        ..cfg
    };
    assert_eq!(run_chain(&g.model, &cfg, 0).unwrap().len(), 100);
}

#[test]
fn same_seed_same_chain() {
    let j = common::joint_toy();
    let cfg = SamplerConfig {
        iterations: 500,
        burn_in: 0,
        thinning: 1,
        seed: 21,
        chains: 1,
    };
    let a = run_chain(&j.model, &cfg, 0).unwrap();
    let b = run_chain(&j.model, &cfg, 0).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.log_posterior, b.log_posterior);
    let c = run_chain(&j.model, &cfg, 1).unwrap();
    assert_ne!(a.draws, c.draws);
}

fn small_study_model(setting: Setting, seed: u64) -> (JointModel, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let study = simulate_study(&SimulationConfig {
        n: 40,
        setting,
        seed,
        ..Default::default()
    })
    .unwrap();
    write_study(&study, dir.path()).unwrap();
    let cfg = model_config(setting, SamplerConfig::default());
    let (model, _) = JointModel::from_config(&cfg, &study.long, &study.surv, dir.path()).unwrap();
    (model, dir)
}

#[test]
fn caches_stay_coherent_and_variances_positive() {
    for (setting, seed) in [(Setting::GeoInShared, 1), (Setting::GeoInSurvival, 2), (Setting::GeoInLongitudinal, 3)] {
        let (model, _dir) = small_study_model(setting, seed);
        let mut s = Sampler::new(&model, seed, 0);
        for it in 0..300 {
            s.sweep().unwrap();
            let err = s.state.cache_error(&model);
            assert!(err <= 1e-10, "setting {setting:?} sweep {it}: cache error {err}");
            assert!(s.state.sigma2.iter().all(|&v| v > 0.0));
            assert!(s.state.sigma2_eps > 0.0 && s.state.sigma2_alpha > 0.0);
        }
        for (name, rate) in s.acceptance() {
            assert!((0.0..=1.0).contains(&rate), "{name}: {rate}");
        }
    }
}

#[test]
fn variances_stay_positive_on_fuzzed_toys() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..20 {
        let n = rng.random_range(1..6);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let rows = rng.random_range(1..6);
        let offset: Vec<f64> = (0..rows).map(|_| rng.random_range(-8.0..2.0)).collect();
        let delta: Vec<f64> = (0..rows).map(|_| rng.random_range(0..2) as f64).collect();
        let mut b = scalar_block(Predictor::Shared, "ls.b", n, Some(rows), 1.0);
        b.variance = VarianceSpec::sampled(0.001, 0.001);
        let mut s0 = scalar_block(Predictor::Survival, "s.beta0", rows, None, 1.0);
        s0.variance = VarianceSpec::sampled(0.001, 0.001);
        let alpha = AlphaSpec {
            init: -0.1,
            fixed: false,
            variance: VarianceSpec::sampled(0.001, 0.001),
        };
        let model = JointModel::new(y, offset, delta, vec![b, s0], alpha, VarianceSpec::sampled(0.001, 0.001)).unwrap();
        let mut s = Sampler::new(&model, case, 0);
        for _ in 0..5000 {
            s.sweep().unwrap();
            assert!(s.state.sigma2.iter().all(|&v| v > 0.0 && v.is_finite()));
            assert!(s.state.sigma2_eps > 0.0 && s.state.sigma2_alpha > 0.0);
        }
    }
}
