//! Synthetic joint data: a longitudinal outcome, event times from a hazard
//! that depends on the shared predictor over time, and a smooth spatial
//! effect on a lattice map.
//!
//! Data-generating model, per subject `i` and time `t`:
//!
//! ```text
//! η_l(t)  = 0.5 x_l1(t) + f1(x_l2(t))
//! η_ls(t) = 0.9 x_ls1 − 0.5 f2(x_ls2) − 0.5 x_ls3(t) + 0.4 t + b0 + b1 t
//! η_s     = 0.1 x_s1 + 0.5 f2(x_s2)
//! y(t)    = η_l(t) + η_ls(t) + ε,            ε ~ N(0, σ²_ε)
//! λ(t)    = p q t^(q−1) exp(η_s + α η_ls(t))
//! ```
//!
//! plus `f_geo(region)` added to `η_ls`, `η_s` or `η_l` depending on the
//! [`Setting`]. All covariates are `U(−1, 1)`.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Covariates, LongitudinalDataset, SurvivalDataset};
use crate::error::{Error, Result};
use crate::graph::SpatialMap;

/// Which predictor carries the spatial effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    GeoInShared,
    GeoInSurvival,
    GeoInLongitudinal,
}

impl Setting {
    /// Settings are numbered 1 (shared), 2 (survival), 3 (longitudinal).
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Setting::GeoInShared),
            2 => Ok(Setting::GeoInSurvival),
            3 => Ok(Setting::GeoInLongitudinal),
            _ => Err(Error::Config(format!("setting must be 1, 2 or 3, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Setting::GeoInShared => 1,
            Setting::GeoInSurvival => 2,
            Setting::GeoInLongitudinal => 3,
        }
    }

    /// Predictor section holding the spatial effect.
    pub fn predictor(self) -> &'static str {
        match self {
            Setting::GeoInShared => "eta_ls",
            Setting::GeoInSurvival => "eta_s",
            Setting::GeoInLongitudinal => "eta_l",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub ni: usize,
    pub alpha: f64,
    pub sigma2_eps: f64,
    pub sigma2_b0: f64,
    pub sigma2_b1: f64,
    pub weibull_scale: f64,
    pub weibull_shape: f64,
    pub setting: Setting,
    pub map_rows: usize,
    pub map_cols: usize,
    /// Centroids are scaled onto `[-map_extent, map_extent]²`.
    pub map_extent: f64,
    /// Administrative end of follow-up.
    pub max_time: f64,
    /// Share of the subjects censored at `max_time` that get an extra
    /// `U(0, max_time)` censoring time.
    pub extra_censoring: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 200,
            ni: 6,
            alpha: -0.3,
            sigma2_eps: 0.5,
            sigma2_b0: 2.0,
            sigma2_b1: 2.0,
            weibull_scale: 0.4,
            weibull_shape: 1.5,
            setting: Setting::GeoInShared,
            map_rows: 8,
            map_cols: 8,
            map_extent: 3.0,
            max_time: 1.0,
            extra_censoring: 0.5,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn check(&self) -> Result<()> {
        if self.n == 0 || self.ni == 0 {
            return Err(Error::Config("n and ni must be positive".into()));
        }
        let positive = [
            self.weibull_scale,
            self.weibull_shape,
            self.max_time,
            self.map_extent,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("Weibull parameters, max_time and map_extent must be positive".into()));
        }
        let nonneg = [self.sigma2_eps, self.sigma2_b0, self.sigma2_b1];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("variances must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.extra_censoring) {
            return Err(Error::Config("extra_censoring must be in [0, 1]".into()));
        }
        if self.map_rows * self.map_cols == 0 {
            return Err(Error::Config("the map needs at least one region".into()));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let cfg: SimulationConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn map(&self) -> SpatialMap {
        SpatialMap::lattice(self.map_rows, self.map_cols, self.map_extent)
    }

    /// Baseline hazard `p q t^(q−1)`.
    pub fn baseline_hazard(&self, t: f64) -> f64 {
        self.weibull_scale * self.weibull_shape * t.powf(self.weibull_shape - 1.0)
    }
}

/// Standard normal density.
pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn f1(x: f64) -> f64 {
    0.5 * x + 15.0 * phi(2.0 * (x - 0.2)) - phi(x + 0.4)
}

pub fn f2(x: f64) -> f64 {
    x.sin()
}

/// Spatial effect of a region with centroid `(cx, cy)`.
pub fn f_geo(cx: f64, cy: f64) -> f64 {
    cx.sin() * (0.5 * cy).cos()
}

/// Time-constant part of one subject plus the time-varying draws at each
/// observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: i64,
    pub b0: f64,
    pub b1: f64,
    pub x_ls1: f64,
    pub x_ls2: f64,
    pub x_s1: f64,
    pub x_s2: f64,
    pub region: usize,
    /// Observation times, the first at 0, sorted.
    pub times: Vec<f64>,
    pub x_l1: Vec<f64>,
    pub x_l2: Vec<f64>,
    /// Held constant from each observation time to the next.
    pub x_ls3: Vec<f64>,
    pub eps: Vec<f64>,
    /// Latent event time; `None` when it lies beyond the end of follow-up.
    pub event_time: Option<f64>,
}

impl SubjectTruth {
    fn geo(&self, cfg: &SimulationConfig, geo: &[f64], setting: Setting) -> f64 {
        if cfg.setting == setting {
            geo[self.region]
        } else {
            0.0
        }
    }

    /// Index of the observation in force at time `t` (the last one at or
    /// before `t`).
    fn piece(&self, t: f64) -> usize {
        self.times.iter().rposition(|&s| s <= t).unwrap_or(0)
    }

    pub fn eta_l(&self, cfg: &SimulationConfig, geo: &[f64], k: usize) -> f64 {
        0.5 * self.x_l1[k] + f1(self.x_l2[k]) + self.geo(cfg, geo, Setting::GeoInLongitudinal)
    }

    /// Shared predictor at time `t`.
    pub fn eta_ls(&self, cfg: &SimulationConfig, geo: &[f64], t: f64) -> f64 {
        self.eta_ls_on_piece(cfg, geo, self.piece(t), t)
    }

    fn eta_ls_on_piece(&self, cfg: &SimulationConfig, geo: &[f64], k: usize, t: f64) -> f64 {
        0.9 * self.x_ls1 - 0.5 * f2(self.x_ls2) - 0.5 * self.x_ls3[k]
            + 0.4 * t
            + self.b0
            + self.b1 * t
            + self.geo(cfg, geo, Setting::GeoInShared)
    }

    pub fn eta_s(&self, cfg: &SimulationConfig, geo: &[f64]) -> f64 {
        0.1 * self.x_s1 + 0.5 * f2(self.x_s2) + self.geo(cfg, geo, Setting::GeoInSurvival)
    }

    /// Hazard at time `t`.
    pub fn hazard(&self, cfg: &SimulationConfig, geo: &[f64], t: f64) -> f64 {
        self.hazard_on_piece(cfg, geo, self.piece(t), t)
    }

    /// Hazard at `t` with `x_ls3` taken from observation `k`.
    fn hazard_on_piece(&self, cfg: &SimulationConfig, geo: &[f64], k: usize, t: f64) -> f64 {
        cfg.baseline_hazard(t) * (self.eta_s(cfg, geo) + cfg.alpha * self.eta_ls_on_piece(cfg, geo, k, t)).exp()
    }
}

/// Everything needed to score a fit against the generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub config: SimulationConfig,
    pub geo_predictor: String,
    pub coefficients: std::collections::BTreeMap<String, f64>,
    pub region_labels: Vec<String>,
    pub centroids: Vec<(f64, f64)>,
    pub f_geo: Vec<f64>,
    pub subjects: Vec<SubjectTruth>,
    /// `f1(x_l2)` on every longitudinal row, in file order.
    pub f1_rows: Vec<f64>,
    /// True `η_l` and `η_ls` on every longitudinal row.
    pub eta_l: Vec<f64>,
    pub eta_ls: Vec<f64>,
    /// True `η_s` of every subject.
    pub eta_s: Vec<f64>,
    /// Subjects redrawn after the cumulative-hazard integral failed to converge.
    pub redraws: usize,
}

impl TruthRecord {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedStudy {
    pub long: LongitudinalDataset,
    pub surv: SurvivalDataset,
    pub truth: TruthRecord,
    pub map: SpatialMap,
}

/// Adaptive Simpson quadrature. Returns `None` when the tolerance is not met
/// within the recursion budget.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
        )
    }
    if b <= a {
        return Some(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Integration tolerance of the cumulative hazard.
const INTEGRAL_TOL: f64 = 1e-8;
/// Root-finding tolerance on the event time.
const ROOT_TOL: f64 = 1e-10;

/// Draw `T*` solving `Λ(T*) = E`, `E ~ Exp(1)`, for a hazard that is smooth
/// between the breakpoints in `breaks`. `hazard(start, t)` evaluates the
/// piece that begins at `start`, so jumps at breakpoints never fall inside a
/// quadrature interval. The search stops at `horizon`:
/// returns `Ok(None)` when `Λ(horizon) < E`. `Err(())` signals a quadrature
/// failure.
pub fn invert_cumulative_hazard<H, R>(hazard: H, breaks: &[f64], horizon: f64, rng: &mut R) -> Result<Option<f64>, ()>
where
    H: Fn(f64, f64) -> f64,
    R: Rng + ?Sized,
{
    let e: f64 = rng.sample(Exp1);
    let mut edges: Vec<f64> = std::iter::once(0.0)
        .chain(breaks.iter().copied().filter(|&b| b > 0.0 && b < horizon))
        .chain(std::iter::once(horizon))
        .collect();
    edges.dedup();
    let mut acc = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let hazard = |t: f64| hazard(a, t);
        let piece = adaptive_simpson(&hazard, a, b, INTEGRAL_TOL).ok_or(())?;
        if acc + piece < e {
            acc += piece;
            continue;
        }
        // the root lies in (a, b]: safeguarded Newton on Λ(t) − E
        let target = e - acc;
        let (mut lo, mut hi) = (a, b);
        let mut t = a + (b - a) * (target / piece).clamp(0.0, 1.0);
        for _ in 0..200 {
            let g = adaptive_simpson(&hazard, a, t, INTEGRAL_TOL).ok_or(())? - target;
            if g.abs() <= ROOT_TOL {
                break;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let h = hazard(t);
            let newton = t - g / h;
            let next = if h > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - t).abs();
            t = next;
            if step <= ROOT_TOL || hi - lo <= ROOT_TOL {
                break;
            }
        }
        return Ok(Some(t));
    }
    Ok(None)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn draw_subject<R: Rng + ?Sized>(cfg: &SimulationConfig, id: i64, n_regions: usize, rng: &mut R) -> SubjectTruth {
    let normal = |s2: f64, rng: &mut R| {
        if s2 > 0.0 {
            Normal::new(0.0, s2.sqrt()).unwrap().sample(rng)
        } else {
            0.0
        }
    };
    let b0 = normal(cfg.sigma2_b0, rng);
    let b1 = normal(cfg.sigma2_b1, rng);
    let x_ls1 = uniform(rng);
    let x_ls2 = uniform(rng);
    let x_s1 = uniform(rng);
    let x_s2 = uniform(rng);
    let region = rng.random_range(0..n_regions);
    let mut times = vec![0.0];
    times.extend((1..cfg.ni).map(|_| rng.random_range(0.0..cfg.max_time)));
    times.sort_by(f64::total_cmp);
    let x_l1 = (0..cfg.ni).map(|_| uniform(rng)).collect();
    let x_l2 = (0..cfg.ni).map(|_| uniform(rng)).collect();
    let x_ls3 = (0..cfg.ni).map(|_| uniform(rng)).collect();
    let sd = cfg.sigma2_eps.sqrt();
    let eps = (0..cfg.ni)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    SubjectTruth {
        id,
        b0,
        b1,
        x_ls1,
        x_ls2,
        x_s1,
        x_s2,
        region,
        times,
        x_l1,
        x_l2,
        x_ls3,
        eps,
        event_time: None,
    }
}

/// Draw one subject with its latent event time; returns the subject and the
/// number of redraws caused by quadrature failures.
pub fn simulate_subject(cfg: &SimulationConfig, geo: &[f64], id: i64, rng: &mut ChaCha8Rng) -> (SubjectTruth, usize) {
    let mut redraws = 0;
    loop {
        let mut s = draw_subject(cfg, id, geo.len(), rng);
        let hazard = |start: f64, t: f64| s.hazard_on_piece(cfg, geo, s.piece(start), t);
        match invert_cumulative_hazard(hazard, &s.times, cfg.max_time, rng) {
            Ok(t) => {
                s.event_time = t;
                return (s, redraws);
            }
            Err(()) => redraws += 1,
        }
    }
}

/// Generate a full study.
pub fn simulate_study(cfg: &SimulationConfig) -> Result<SimulatedStudy> {
    cfg.check()?;
    let map = cfg.map();
    let geo: Vec<f64> = map.centroids.iter().map(|&(x, y)| f_geo(x, y)).collect();

    // one generator stream per subject so subjects can be drawn in parallel
    let drawn: Vec<(SubjectTruth, usize)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            simulate_subject(cfg, &geo, i as i64 + 1, &mut rng)
        })
        .collect();
    let redraws = drawn.iter().map(|(_, r)| r).sum();
    let subjects: Vec<SubjectTruth> = drawn.into_iter().map(|(s, _)| s).collect();

    // administrative censoring, then uniform censoring for a random share of
    // the censored subjects
    let mut time: Vec<f64> = subjects.iter().map(|s| s.event_time.unwrap_or(cfg.max_time)).collect();
    let delta: Vec<u8> = subjects.iter().map(|s| s.event_time.is_some() as u8).collect();
    let censored: Vec<usize> = (0..cfg.n).filter(|&i| delta[i] == 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let k = (cfg.extra_censoring * censored.len() as f64).round() as usize;
    for j in sample(&mut rng, censored.len(), k).into_iter() {
        let c = loop {
            let c: f64 = rng.random_range(0.0..cfg.max_time);
            if c > 0.0 {
                break c;
            }
        };
        time[censored[j]] = c;
    }

    let labels = map.graph.labels();
    let geo_in_long = matches!(cfg.setting, Setting::GeoInShared | Setting::GeoInLongitudinal);

    let mut id = Vec::new();
    let mut t = Vec::new();
    let mut y = Vec::new();
    let (mut x_l1, mut x_l2, mut x_ls3, mut region_long, mut f1_rows) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut eta_l, mut eta_ls) = (Vec::new(), Vec::new());
    for (i, s) in subjects.iter().enumerate() {
        for k in 0..cfg.ni {
            let tk = s.times[k];
            if tk > time[i] {
                break;
            }
            id.push(s.id);
            t.push(tk);
            eta_l.push(s.eta_l(cfg, &geo, k));
            eta_ls.push(s.eta_ls(cfg, &geo, tk));
            y.push(eta_l.last().unwrap() + eta_ls.last().unwrap() + s.eps[k]);
            x_l1.push(s.x_l1[k]);
            x_l2.push(s.x_l2[k]);
            x_ls3.push(s.x_ls3[k]);
            f1_rows.push(f1(s.x_l2[k]));
            region_long.push(labels[s.region].clone());
        }
    }
    let mut lcov = Covariates::new();
    lcov.push("x_l1", Column::Numeric(x_l1));
    lcov.push("x_l2", Column::Numeric(x_l2));
    lcov.push("x_ls3", Column::Numeric(x_ls3));
    if geo_in_long {
        lcov.push("region", Column::Label(region_long));
    }
    let long = LongitudinalDataset::new(id, t, y, lcov)?;

    let mut scov = Covariates::new();
    scov.push("x_ls1", Column::Numeric(subjects.iter().map(|s| s.x_ls1).collect()));
    scov.push("x_ls2", Column::Numeric(subjects.iter().map(|s| s.x_ls2).collect()));
    scov.push("x_s1", Column::Numeric(subjects.iter().map(|s| s.x_s1).collect()));
    scov.push("x_s2", Column::Numeric(subjects.iter().map(|s| s.x_s2).collect()));
    if !geo_in_long {
        scov.push(
            "region",
            Column::Label(subjects.iter().map(|s| labels[s.region].clone()).collect()),
        );
    }
    let surv = SurvivalDataset::new(subjects.iter().map(|s| s.id).collect(), time, delta, scov)?;

    let coefficients = [
        ("x_l1", 0.5),
        ("x_ls1", 0.9),
        ("x_ls3", -0.5),
        ("time", 0.4),
        ("x_s1", 0.1),
        ("alpha", cfg.alpha),
        ("sigma2_eps", cfg.sigma2_eps),
        ("sigma2_b0", cfg.sigma2_b0),
        ("sigma2_b1", cfg.sigma2_b1),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let truth = TruthRecord {
        config: cfg.clone(),
        geo_predictor: cfg.setting.predictor().to_string(),
        coefficients,
        region_labels: labels.to_vec(),
        centroids: map.centroids.clone(),
        eta_s: subjects.iter().map(|s| s.eta_s(cfg, &geo)).collect(),
        f_geo: geo,
        subjects,
        f1_rows,
        eta_l,
        eta_ls,
        redraws,
    };
    Ok(SimulatedStudy { long, surv, truth, map })
}
