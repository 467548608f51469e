//! Model configuration: which effects enter which predictor, the hyperpriors
//! and the sampler settings.
//!
//! The format is line based. Blank lines and text after `#` are ignored.
//! Section headers are `[eta_l]`, `[eta_ls]`, `[eta_s]`, `[sampler]` and
//! `[priors]`. Predictor sections hold one term per line,
//!
//! ```text
//! [eta_ls]
//! linear(x1)
//! pspline(x2, knots=20, degree=3, diff=2)
//! random_intercept()
//! random_slope(t)
//! mrf(region, map=grid.gra)
//! [eta_s]
//! baseline_pspline(knots=10, degree=3, diff=2)
//! ```
//!
//! and the other two sections hold `key = value` pairs. Every term also takes
//! optional `a=` and `b=` overrides for its variance prior; `linear` takes
//! `prior=gaussian` to replace the flat default.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Column, LongitudinalDataset, SurvivalDataset};
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::ped::{CutStrategy, EvalPoint};

pub const DEFAULT_KNOTS: usize = 10;
pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_DIFF: usize = 2;
pub const DEFAULT_HYPER: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Linear,
    RandomIntercept,
    RandomSlope,
    PSpline,
    Mrf,
    BaselinePSpline,
}

impl TermKind {
    pub fn keyword(self) -> &'static str {
        match self {
            TermKind::Linear => "linear",
            TermKind::RandomIntercept => "random_intercept",
            TermKind::RandomSlope => "random_slope",
            TermKind::PSpline => "pspline",
            TermKind::Mrf => "mrf",
            TermKind::BaselinePSpline => "baseline_pspline",
        }
    }

    fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "linear" => TermKind::Linear,
            "random_intercept" => TermKind::RandomIntercept,
            "random_slope" => TermKind::RandomSlope,
            "pspline" => TermKind::PSpline,
            "mrf" => TermKind::Mrf,
            "baseline_pspline" => TermKind::BaselinePSpline,
            _ => return None,
        })
    }

    fn is_spline(self) -> bool {
        matches!(self, TermKind::PSpline | TermKind::BaselinePSpline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearPrior {
    /// Improper flat prior, `K = 0`.
    #[default]
    Flat,
    /// `N(0, σ²)` with `K = I` and a sampled variance.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermSpec {
    pub kind: TermKind,
    /// Covariate column. `None` for random intercepts; the baseline defaults
    /// to the row time.
    pub covariate: Option<String>,
    /// Number of B-spline basis functions.
    pub knots: usize,
    pub degree: usize,
    pub diff_order: usize,
    pub map_ref: Option<String>,
    pub linear_prior: LinearPrior,
    /// Per-term overrides of the variance hyperprior.
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl TermSpec {
    pub fn new(kind: TermKind, covariate: Option<&str>) -> Self {
        TermSpec {
            kind,
            covariate: covariate.map(String::from),
            knots: DEFAULT_KNOTS,
            degree: DEFAULT_DEGREE,
            diff_order: DEFAULT_DIFF,
            map_ref: None,
            linear_prior: LinearPrior::Flat,
            a: None,
            b: None,
        }
    }

    pub fn linear(x: &str) -> Self {
        Self::new(TermKind::Linear, Some(x))
    }

    pub fn pspline(x: &str, knots: usize, degree: usize, diff: usize) -> Self {
        TermSpec {
            knots,
            degree,
            diff_order: diff,
            ..Self::new(TermKind::PSpline, Some(x))
        }
    }

    pub fn baseline(knots: usize, degree: usize, diff: usize) -> Self {
        TermSpec {
            knots,
            degree,
            diff_order: diff,
            ..Self::new(TermKind::BaselinePSpline, None)
        }
    }

    pub fn mrf(x: &str, map: &str) -> Self {
        TermSpec {
            map_ref: Some(map.to_string()),
            ..Self::new(TermKind::Mrf, Some(x))
        }
    }

    /// Column the term reads; the baseline falls back to `time`.
    pub fn column(&self) -> Option<&str> {
        match (&self.covariate, self.kind) {
            (Some(c), _) => Some(c),
            (None, TermKind::BaselinePSpline) => Some("time"),
            (None, _) => None,
        }
    }

    /// Block label without the predictor prefix.
    pub fn name(&self) -> String {
        match (self.kind, &self.covariate) {
            (TermKind::BaselinePSpline, _) => "baseline".into(),
            (TermKind::RandomIntercept, _) => "random_intercept".into(),
            (k, Some(c)) => format!("{}_{}", k.keyword(), c),
            (k, None) => k.keyword().into(),
        }
    }

    fn render(&self) -> String {
        let mut args: Vec<String> = Vec::new();
        if let Some(c) = &self.covariate {
            args.push(c.clone());
        }
        if self.kind.is_spline() {
            args.push(format!("knots={}", self.knots));
            args.push(format!("degree={}", self.degree));
            args.push(format!("diff={}", self.diff_order));
        }
        if let Some(m) = &self.map_ref {
            args.push(format!("map={m}"));
        }
        if self.kind == TermKind::Linear && self.linear_prior == LinearPrior::Gaussian {
            args.push("prior=gaussian".into());
        }
        if let Some(a) = self.a {
            args.push(format!("a={a:?}"));
        }
        if let Some(b) = self.b {
            args.push(format!("b={b:?}"));
        }
        format!("{}({})", self.kind.keyword(), args.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predictor {
    Longitudinal,
    Shared,
    Survival,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [Predictor::Longitudinal, Predictor::Shared, Predictor::Survival];

    pub fn section(self) -> &'static str {
        match self {
            Predictor::Longitudinal => "eta_l",
            Predictor::Shared => "eta_ls",
            Predictor::Survival => "eta_s",
        }
    }

    /// Prefix of block labels, `l.`, `ls.` or `s.`.
    pub fn prefix(self) -> &'static str {
        match self {
            Predictor::Longitudinal => "l",
            Predictor::Shared => "ls",
            Predictor::Survival => "s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub eta_l: Vec<TermSpec>,
    pub eta_ls: Vec<TermSpec>,
    pub eta_s: Vec<TermSpec>,
    pub association_init: f64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec {
            eta_l: Vec::new(),
            eta_ls: Vec::new(),
            eta_s: Vec::new(),
            association_init: -0.1,
        }
    }
}

impl PredictorSpec {
    pub fn terms(&self, p: Predictor) -> &[TermSpec] {
        match p {
            Predictor::Longitudinal => &self.eta_l,
            Predictor::Shared => &self.eta_ls,
            Predictor::Survival => &self.eta_s,
        }
    }

    fn terms_mut(&mut self, p: Predictor) -> &mut Vec<TermSpec> {
        match p {
            Predictor::Longitudinal => &mut self.eta_l,
            Predictor::Shared => &mut self.eta_ls,
            Predictor::Survival => &mut self.eta_s,
        }
    }

    pub fn all_terms(&self) -> impl Iterator<Item = (Predictor, &TermSpec)> {
        Predictor::ALL
            .into_iter()
            .flat_map(move |p| self.terms(p).iter().map(move |t| (p, t)))
    }

    /// Check the structural rules that do not depend on data.
    pub fn check(&self) -> Result<()> {
        for (p, t) in self.all_terms() {
            let needs_covariate = !matches!(t.kind, TermKind::RandomIntercept | TermKind::BaselinePSpline);
            if needs_covariate && t.covariate.is_none() {
                return Err(Error::Config(format!("{} needs a covariate", t.kind.keyword())));
            }
            if t.kind == TermKind::RandomIntercept && t.covariate.is_some() {
                return Err(Error::Config("random_intercept takes no covariate".into()));
            }
            if matches!(t.kind, TermKind::RandomIntercept | TermKind::RandomSlope) && p != Predictor::Shared {
                return Err(Error::Config(format!(
                    "{} may only appear in eta_ls (random effects live in the shared predictor)",
                    t.kind.keyword()
                )));
            }
            if t.kind == TermKind::BaselinePSpline && p != Predictor::Survival {
                return Err(Error::Config("baseline_pspline must be in eta_s".into()));
            }
            if t.kind.is_spline() {
                if t.knots < t.degree + 2 {
                    return Err(Error::Config(format!(
                        "{}: knots must be >= degree + 2 (got knots={}, degree={})",
                        t.name(),
                        t.knots,
                        t.degree
                    )));
                }
                if !(1..=2).contains(&t.diff_order) {
                    return Err(Error::Config(format!("{}: diff must be 1 or 2", t.name())));
                }
                if t.diff_order >= t.knots {
                    return Err(Error::Config(format!(
                        "{}: diff must be smaller than the number of basis functions",
                        t.name()
                    )));
                }
            }
            if t.kind == TermKind::Mrf && t.map_ref.is_none() {
                return Err(Error::Config(format!("{} needs map=<file>", t.name())));
            }
            for v in [t.a, t.b].into_iter().flatten() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{}: hyperparameters must be positive", t.name())));
                }
            }
        }
        let baselines = self.all_terms().filter(|(_, t)| t.kind == TermKind::BaselinePSpline).count();
        if baselines != 1 {
            return Err(Error::Config(format!(
                "exactly one baseline_pspline term is required, found {baselines}"
            )));
        }
        let mrfs = self.all_terms().filter(|(_, t)| t.kind == TermKind::Mrf).count();
        if mrfs > 1 {
            return Err(Error::Config(format!("at most one MRF term is allowed, found {mrfs}")));
        }
        for p in Predictor::ALL {
            let terms = self.terms(p);
            for (i, t) in terms.iter().enumerate() {
                if terms[..i].iter().any(|u| u.name() == t.name()) {
                    return Err(Error::Config(format!(
                        "term {} appears twice in {}",
                        t.name(),
                        p.section()
                    )));
                }
            }
        }
        if !self.association_init.is_finite() {
            return Err(Error::Config("association_init must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperpriors {
    pub a0: f64,
    pub b0: f64,
    pub a: f64,
    pub b: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Hyperpriors {
            a0: DEFAULT_HYPER,
            b0: DEFAULT_HYPER,
            a: DEFAULT_HYPER,
            b: DEFAULT_HYPER,
            a_alpha: DEFAULT_HYPER,
            b_alpha: DEFAULT_HYPER,
        }
    }
}

impl Hyperpriors {
    pub fn check(&self) -> Result<()> {
        let all = [self.a0, self.b0, self.a, self.b, self.a_alpha, self.b_alpha];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("all hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 20_000,
            burn_in: 5_000,
            thinning: 15,
            seed: 1,
            chains: 1,
        }
    }
}

impl SamplerConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn_in must be < iterations".into()));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be positive".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be positive".into()));
        }
        Ok(())
    }

    /// Number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// How the survival data are split into intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub cuts: CutStrategy,
    /// Also cut at every longitudinal observation time.
    pub merge_obs_times: bool,
    pub eval_point: EvalPoint,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            cuts: CutStrategy::EventTimes,
            merge_obs_times: true,
            eval_point: EvalPoint::End,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelConfig {
    pub predictors: PredictorSpec,
    pub priors: Hyperpriors,
    pub sampler: SamplerConfig,
    pub augment: AugmentConfig,
}

impl ModelConfig {
    pub fn check(&self) -> Result<()> {
        self.predictors.check()?;
        self.priors.check()?;
        self.sampler.check()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        parse_model_config(&text)
    }

    /// Canonical text form; `parse_model_config` reads it back unchanged.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for p in Predictor::ALL {
            writeln!(out, "[{}]", p.section()).unwrap();
            for t in self.predictors.terms(p) {
                writeln!(out, "{}", t.render()).unwrap();
            }
            out.push('\n');
        }
        let s = &self.sampler;
        let a = &self.augment;
        writeln!(out, "[sampler]").unwrap();
        writeln!(out, "iterations = {}", s.iterations).unwrap();
        writeln!(out, "burn_in = {}", s.burn_in).unwrap();
        writeln!(out, "thinning = {}", s.thinning).unwrap();
        writeln!(out, "seed = {}", s.seed).unwrap();
        writeln!(out, "chains = {}", s.chains).unwrap();
        writeln!(out, "association_init = {:?}", self.predictors.association_init).unwrap();
        let cuts = match a.cuts {
            CutStrategy::EventTimes => "event_times".to_string(),
            CutStrategy::Quantiles(j) => format!("quantiles({j})"),
        };
        writeln!(out, "cuts = {cuts}").unwrap();
        writeln!(out, "merge_obs_times = {}", a.merge_obs_times).unwrap();
        let eval = match a.eval_point {
            EvalPoint::End => "end",
            EvalPoint::Midpoint => "midpoint",
        };
        writeln!(out, "eval_point = {eval}").unwrap();
        out.push('\n');
        let p = &self.priors;
        writeln!(out, "[priors]").unwrap();
        for (k, v) in [
            ("a0", p.a0),
            ("b0", p.b0),
            ("a", p.a),
            ("b", p.b),
            ("a_alpha", p.a_alpha),
            ("b_alpha", p.b_alpha),
        ] {
            writeln!(out, "{k} = {v:?}").unwrap();
        }
        out
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Predictor(Predictor),
    Sampler,
    Priors,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Parse and validate a configuration document.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::default();
    let mut section: Option<Section> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let lead = content.len() - content.trim_start().len();
        let line = content.trim();
        if line.is_empty() {
            continue;
        }
        let col0 = content[..lead].chars().count() + 1;
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(line_no, col0, "section header is missing ']'"))?
                .trim();
            section = Some(match name {
                "eta_l" => Section::Predictor(Predictor::Longitudinal),
                "eta_ls" => Section::Predictor(Predictor::Shared),
                "eta_s" => Section::Predictor(Predictor::Survival),
                "sampler" => Section::Sampler,
                "priors" => Section::Priors,
                other => return Err(syntax(line_no, col0 + 1, format!("unknown section [{other}]"))),
            });
            continue;
        }
        match section {
            None => return Err(syntax(line_no, col0, "content before the first section header")),
            Some(Section::Predictor(p)) => {
                let term = parse_term(line, line_no, col0)?;
                cfg.predictors.terms_mut(p).push(term);
            }
            Some(Section::Sampler) => {
                let (key, value, vcol) = split_key_value(line, line_no, col0)?;
                set_sampler(&mut cfg, key, value, line_no, vcol)?;
            }
            Some(Section::Priors) => {
                let (key, value, vcol) = split_key_value(line, line_no, col0)?;
                let v = parse_positive(value, line_no, vcol)?;
                let p = &mut cfg.priors;
                match key {
                    "a0" => p.a0 = v,
                    "b0" => p.b0 = v,
                    "a" => p.a = v,
                    "b" => p.b = v,
                    "a_alpha" => p.a_alpha = v,
                    "b_alpha" => p.b_alpha = v,
                    other => return Err(syntax(line_no, col0, format!("unknown prior key {other}"))),
                }
            }
        }
    }
    cfg.check()?;
    Ok(cfg)
}

fn split_key_value(line: &str, line_no: usize, col0: usize) -> Result<(&str, &str, usize)> {
    let eq = line
        .find('=')
        .ok_or_else(|| syntax(line_no, col0, "expected key = value"))?;
    let key = line[..eq].trim();
    let after = &line[eq + 1..];
    let value = after.trim();
    let vcol = col0 + line[..eq + 1].chars().count() + (after.len() - after.trim_start().len());
    if key.is_empty() || value.is_empty() {
        return Err(syntax(line_no, col0, "expected key = value"));
    }
    Ok((key, value, vcol))
}

fn parse_usize(v: &str, line: usize, col: usize) -> Result<usize> {
    v.parse()
        .map_err(|_| syntax(line, col, format!("expected a non-negative integer, found {v:?}")))
}

fn parse_f64(v: &str, line: usize, col: usize) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(syntax(line, col, format!("expected a number, found {v:?}"))),
    }
}

fn parse_positive(v: &str, line: usize, col: usize) -> Result<f64> {
    let x = parse_f64(v, line, col)?;
    if x <= 0.0 {
        return Err(syntax(line, col, format!("expected a positive number, found {v}")));
    }
    Ok(x)
}

fn set_sampler(cfg: &mut ModelConfig, key: &str, value: &str, line: usize, col: usize) -> Result<()> {
    let s = &mut cfg.sampler;
    match key {
        "iterations" => s.iterations = parse_usize(value, line, col)?,
        "burn_in" | "burnin" => s.burn_in = parse_usize(value, line, col)?,
        "thinning" | "thin" => s.thinning = parse_usize(value, line, col)?,
        "seed" => {
            s.seed = value
                .parse()
                .map_err(|_| syntax(line, col, format!("expected a 64-bit unsigned seed, found {value:?}")))?
        }
        "chains" => s.chains = parse_usize(value, line, col)?,
        "association_init" => cfg.predictors.association_init = parse_f64(value, line, col)?,
        "cuts" => {
            cfg.augment.cuts = if value == "event_times" {
                CutStrategy::EventTimes
            } else if let Some(inner) = value.strip_prefix("quantiles(").and_then(|v| v.strip_suffix(')')) {
                CutStrategy::Quantiles(parse_usize(inner.trim(), line, col + 10)?)
            } else {
                return Err(syntax(line, col, "cuts must be event_times or quantiles(J)"));
            }
        }
        "merge_obs_times" => {
            cfg.augment.merge_obs_times = value
                .parse()
                .map_err(|_| syntax(line, col, "merge_obs_times must be true or false"))?
        }
        "eval_point" => {
            cfg.augment.eval_point = match value {
                "end" => EvalPoint::End,
                "midpoint" => EvalPoint::Midpoint,
                _ => return Err(syntax(line, col, "eval_point must be end or midpoint")),
            }
        }
        other => return Err(syntax(line, col, format!("unknown sampler key {other}"))),
    }
    Ok(())
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_term(line: &str, line_no: usize, col0: usize) -> Result<TermSpec> {
    let open = line
        .find('(')
        .ok_or_else(|| syntax(line_no, col0, "expected term(...)"))?;
    if !line.ends_with(')') {
        return Err(syntax(line_no, col0 + line.chars().count() - 1, "term must end with ')'"));
    }
    let keyword = line[..open].trim();
    let kind = TermKind::from_keyword(keyword)
        .ok_or_else(|| syntax(line_no, col0, format!("unknown term type {keyword:?}")))?;
    let mut term = TermSpec::new(kind, None);
    let inner = &line[open + 1..line.len() - 1];
    let mut offset = open + 1;
    for (i, piece) in inner.split(',').enumerate() {
        let col = col0 + line[..offset].chars().count() + (piece.len() - piece.trim_start().len());
        offset += piece.len() + 1;
        let arg = piece.trim();
        if arg.is_empty() {
            if inner.trim().is_empty() {
                break;
            }
            return Err(syntax(line_no, col, "empty argument"));
        }
        match arg.split_once('=') {
            None => {
                if i != 0 {
                    return Err(syntax(line_no, col, "the covariate must be the first argument"));
                }
                if !is_ident(arg) {
                    return Err(syntax(line_no, col, format!("invalid column name {arg:?}")));
                }
                term.covariate = Some(arg.to_string());
            }
            Some((k, v)) => {
                let (k, v) = (k.trim(), v.trim());
                let vcol = col + arg.find('=').unwrap() + 1;
                match k {
                    "knots" => term.knots = parse_usize(v, line_no, vcol)?,
                    "degree" => term.degree = parse_usize(v, line_no, vcol)?,
                    "diff" => term.diff_order = parse_usize(v, line_no, vcol)?,
                    "map" => {
                        if v.is_empty() || v.contains(char::is_whitespace) {
                            return Err(syntax(line_no, vcol, "map needs a file name"));
                        }
                        term.map_ref = Some(v.to_string());
                    }
                    "prior" => {
                        term.linear_prior = match v {
                            "flat" => LinearPrior::Flat,
                            "gaussian" => LinearPrior::Gaussian,
                            _ => return Err(syntax(line_no, vcol, "prior must be flat or gaussian")),
                        }
                    }
                    "a" => term.a = Some(parse_positive(v, line_no, vcol)?),
                    "b" => term.b = Some(parse_positive(v, line_no, vcol)?),
                    _ => return Err(syntax(line_no, col, format!("unknown option {k:?}"))),
                }
                let allowed = match k {
                    "knots" | "degree" | "diff" => kind.is_spline(),
                    "map" => kind == TermKind::Mrf,
                    "prior" => kind == TermKind::Linear,
                    _ => true,
                };
                if !allowed {
                    return Err(syntax(
                        line_no,
                        col,
                        format!("option {k} does not apply to {}", kind.keyword()),
                    ));
                }
            }
        }
    }
    Ok(term)
}

/// Where a term's column was found.
fn column_in<'a>(name: &str, long: &'a LongitudinalDataset, surv: &'a SurvivalDataset) -> Option<&'a Column> {
    long.covariates.get(name).or_else(|| surv.covariates.get(name))
}

/// Cross-check a configuration against loaded data. Map files are resolved
/// relative to `base_dir`. Returns one message per problem; an empty list
/// means the configuration can be fitted to the data.
pub fn validate_against_data(
    cfg: &ModelConfig,
    long: &LongitudinalDataset,
    surv: &SurvivalDataset,
    base_dir: &Path,
) -> Vec<String> {
    let mut diags = Vec::new();
    if let Err(e) = long.check_against(surv) {
        diags.push(e.to_string());
    }
    for (_, t) in cfg.predictors.all_terms() {
        let Some(name) = t.column() else { continue };
        let Some(col) = column_in(name, long, surv) else {
            // `time` and `t` fall back to the row time
            if name != "time" && name != "t" {
                diags.push(format!("unknown column {name}"));
            }
            continue;
        };
        if t.kind != TermKind::Mrf && col.as_numeric().is_none() {
            diags.push(format!("column {name} must be numeric for {}", t.kind.keyword()));
        }
        if t.kind == TermKind::Mrf {
            let Some(map) = &t.map_ref else { continue };
            match AdjacencyGraph::read(base_dir.join(map)) {
                Err(e) => diags.push(format!("cannot read map {map}: {e}")),
                Ok(g) => {
                    let mut missing: Vec<String> =
                        col.labels().into_iter().filter(|l| g.index_of(l).is_none()).collect();
                    missing.sort();
                    missing.dedup();
                    for l in missing {
                        diags.push(format!("region {l} of column {name} is not in map {map}"));
                    }
                }
            }
        }
    }
    diags
}
