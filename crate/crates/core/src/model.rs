//! Assembly of a joint model from a configuration and data: one effect block
//! per term, each knowing the rows it acts on.
//!
//! Longitudinal (`l`) and shared (`ls`) blocks are defined on the
//! longitudinal rows; survival (`s`) blocks on the augmented rows. Shared
//! blocks carry a second design for the augmented rows, since the shared
//! predictor also enters the log-hazard.

use std::borrow::Cow;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::basis::{
    apply_sum_to_zero, difference_penalty, mrf_design, mrf_penalty, random_effect_design, BSplineBasis,
    EffectBlock,
};
use crate::config::{validate_against_data, LinearPrior, ModelConfig, Predictor, TermKind, TermSpec};
use crate::data::{Column, LongitudinalDataset, SurvivalDataset};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::linalg::is_diagonal;
use crate::ped::{augment, augmented_column, make_cuts, AugmentOptions, AugmentedDataset};

/// Initial value of a variance parameter and, when it is sampled, its
/// inverse-gamma hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceSpec {
    pub init: f64,
    pub prior: Option<(f64, f64)>,
}

impl VarianceSpec {
    pub fn sampled(a: f64, b: f64) -> Self {
        VarianceSpec {
            init: 1.0,
            prior: Some((a, b)),
        }
    }

    pub fn fixed(value: f64) -> Self {
        VarianceSpec {
            init: value,
            prior: None,
        }
    }

    pub fn is_sampled(&self) -> bool {
        self.prior.is_some()
    }
}

/// Association parameter: starting value, whether it is updated, and its
/// prior variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSpec {
    pub init: f64,
    pub fixed: bool,
    pub variance: VarianceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Intercept,
    Linear,
    RandomIntercept,
    RandomSlope,
    PSpline,
    Mrf,
    Baseline,
    /// Built directly through the API rather than from a term.
    Custom,
}

impl From<TermKind> for BlockKind {
    fn from(k: TermKind) -> Self {
        match k {
            TermKind::Linear => BlockKind::Linear,
            TermKind::RandomIntercept => BlockKind::RandomIntercept,
            TermKind::RandomSlope => BlockKind::RandomSlope,
            TermKind::PSpline => BlockKind::PSpline,
            TermKind::Mrf => BlockKind::Mrf,
            TermKind::BaselinePSpline => BlockKind::Baseline,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelBlock {
    pub predictor: Predictor,
    pub kind: BlockKind,
    pub covariate: Option<String>,
    /// Design on the block's own rows (longitudinal rows for `l`/`ls`,
    /// augmented rows for `s`), penalty, constraint and starting values.
    pub effect: EffectBlock,
    /// Design of a shared block on the augmented rows.
    pub aug_design: Option<Design>,
    pub variance: VarianceSpec,
    /// Spline basis, kept for evaluating the fitted function on a grid.
    pub basis: Option<BSplineBasis>,
    /// Region labels of an MRF block, in coefficient order.
    pub regions: Option<Vec<String>>,
    /// `T' Z'Z T` on the longitudinal rows.
    pub(crate) long_gram: Option<DMatrix<f64>>,
    /// Diagonals of `long_gram` and the penalty when those are diagonal.
    pub(crate) long_gram_diagonal: Option<DVector<f64>>,
    pub(crate) penalty_diagonal: Option<DVector<f64>>,
}

impl ModelBlock {
    pub fn new(
        predictor: Predictor,
        kind: BlockKind,
        effect: EffectBlock,
        aug_design: Option<Design>,
        variance: VarianceSpec,
    ) -> Result<Self> {
        if predictor == Predictor::Shared && aug_design.is_none() {
            return Err(Error::InvalidInput(format!(
                "shared block {} needs a design on the augmented rows",
                effect.label
            )));
        }
        if let Some(d) = &aug_design {
            if d.ncols() != effect.original_dim() {
                return Err(Error::InvalidInput(format!(
                    "block {}: augmented design has {} columns, expected {}",
                    effect.label,
                    d.ncols(),
                    effect.original_dim()
                )));
            }
        }
        // blocks without any penalty have nothing to inform a variance
        let variance = if effect.rank == 0 {
            VarianceSpec {
                init: variance.init,
                prior: None,
            }
        } else {
            variance
        };
        let long_gram = match predictor {
            Predictor::Survival => None,
            _ => Some(effect.reduce_matrix(effect.design.gram())),
        };
        let diagonal = |m: &DMatrix<f64>| is_diagonal(m).then(|| m.diagonal());
        let long_gram_diagonal = long_gram.as_ref().and_then(diagonal);
        let penalty_diagonal = diagonal(&effect.penalty);
        let mut effect = effect;
        effect.sigma2 = variance.init;
        Ok(ModelBlock {
            predictor,
            kind,
            covariate: None,
            effect,
            aug_design,
            variance,
            basis: None,
            regions: None,
            long_gram,
            long_gram_diagonal,
            penalty_diagonal,
        })
    }

    pub fn label(&self) -> &str {
        &self.effect.label
    }

    pub fn dim(&self) -> usize {
        self.effect.dim()
    }

    /// Design on the longitudinal rows (`l` and `ls` blocks).
    pub fn long_design(&self) -> Option<&Design> {
        match self.predictor {
            Predictor::Survival => None,
            _ => Some(&self.effect.design),
        }
    }

    /// Design on the augmented rows (`ls` and `s` blocks).
    pub fn surv_design(&self) -> Option<&Design> {
        match self.predictor {
            Predictor::Longitudinal => None,
            Predictor::Shared => self.aug_design.as_ref(),
            Predictor::Survival => Some(&self.effect.design),
        }
    }
}

/// A joint model ready for sampling.
#[derive(Debug, Clone)]
pub struct JointModel {
    /// Longitudinal outcomes.
    pub y: Vec<f64>,
    /// Log exposure of each augmented row.
    pub offset: Vec<f64>,
    /// Event indicator of each augmented row.
    pub delta: Vec<f64>,
    pub blocks: Vec<ModelBlock>,
    pub alpha: AlphaSpec,
    pub sigma2_eps: VarianceSpec,
}

impl JointModel {
    /// Low-level constructor; checks that every block matches the row counts.
    pub fn new(
        y: Vec<f64>,
        offset: Vec<f64>,
        delta: Vec<f64>,
        blocks: Vec<ModelBlock>,
        alpha: AlphaSpec,
        sigma2_eps: VarianceSpec,
    ) -> Result<Self> {
        if offset.len() != delta.len() {
            return Err(Error::InvalidInput("offset and delta lengths differ".into()));
        }
        if delta.iter().any(|&d| d != 0.0 && d != 1.0) {
            return Err(Error::InvalidInput("event indicators must be 0 or 1".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if let Some(d) = b.long_design() {
                if d.nrows() != y.len() {
                    return Err(Error::InvalidInput(format!(
                        "block {} has {} rows but there are {} longitudinal rows",
                        b.label(),
                        d.nrows(),
                        y.len()
                    )));
                }
            }
            if let Some(d) = b.surv_design() {
                if d.nrows() != offset.len() {
                    return Err(Error::InvalidInput(format!(
                        "block {} has {} rows but there are {} augmented rows",
                        b.label(),
                        d.nrows(),
                        offset.len()
                    )));
                }
            }
            if blocks[..i].iter().any(|o| o.label() == b.label()) {
                return Err(Error::InvalidInput(format!("duplicate block label {}", b.label())));
            }
        }
        if !(sigma2_eps.init > 0.0) || !(alpha.variance.init > 0.0) {
            return Err(Error::InvalidInput("variance starting values must be positive".into()));
        }
        Ok(JointModel {
            y,
            offset,
            delta,
            blocks,
            alpha,
            sigma2_eps,
        })
    }

    pub fn n_long(&self) -> usize {
        self.y.len()
    }

    pub fn n_aug(&self) -> usize {
        self.offset.len()
    }

    pub fn block(&self, label: &str) -> Option<&ModelBlock> {
        self.blocks.iter().find(|b| b.label() == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label() == label)
    }

    /// Build the model described by `cfg` for the given data. Map files are
    /// resolved relative to `base_dir`. Also returns the augmented data.
    pub fn from_config(
        cfg: &ModelConfig,
        long: &LongitudinalDataset,
        surv: &SurvivalDataset,
        base_dir: &Path,
    ) -> Result<(JointModel, AugmentedDataset)> {
        cfg.check()?;
        let diags = validate_against_data(cfg, long, surv, base_dir);
        if !diags.is_empty() {
            return Err(Error::Config(diags.join("; ")));
        }
        let extra: &[f64] = if cfg.augment.merge_obs_times { &long.time } else { &[] };
        let cuts = make_cuts(surv, cfg.augment.cuts, extra)?;
        let options = AugmentOptions {
            eval_point: cfg.augment.eval_point,
            ..Default::default()
        };
        let aug = augment(surv, long, &cuts, options)?;
        let rows = Rows::new(long, surv, &aug)?;

        let mut blocks = Vec::new();
        if !long.is_empty() {
            let design = Design::Grouped {
                group: vec![0; long.len()],
                rows: DMatrix::from_element(1, 1, 1.0),
            };
            let effect = EffectBlock::new("l.intercept", design, DMatrix::zeros(1, 1))?;
            blocks.push(ModelBlock::new(
                Predictor::Longitudinal,
                BlockKind::Intercept,
                effect,
                None,
                VarianceSpec::fixed(1.0),
            )?);
        }
        for (p, term) in cfg.predictors.all_terms() {
            blocks.push(build_block(cfg, p, term, &rows, base_dir)?);
        }
        let priors = &cfg.priors;
        let alpha = AlphaSpec {
            init: cfg.predictors.association_init,
            fixed: false,
            variance: VarianceSpec::sampled(priors.a_alpha, priors.b_alpha),
        };
        let model = JointModel::new(
            long.y.clone(),
            aug.offset.clone(),
            aug.delta.iter().map(|&d| d as f64).collect(),
            blocks,
            alpha,
            VarianceSpec::sampled(priors.a0, priors.b0),
        )?;
        Ok((model, aug))
    }
}

/// Column lookup on both row sets.
struct Rows<'a> {
    long: &'a LongitudinalDataset,
    surv: &'a SurvivalDataset,
    aug: &'a AugmentedDataset,
    long_subject: Vec<usize>,
    aug_subject: Vec<usize>,
}

impl<'a> Rows<'a> {
    fn new(long: &'a LongitudinalDataset, surv: &'a SurvivalDataset, aug: &'a AugmentedDataset) -> Result<Self> {
        let lookup = |id: i64| {
            surv.index_of(id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown subject {id}")))
        };
        Ok(Rows {
            long_subject: long.id.iter().map(|&id| lookup(id)).collect::<Result<_>>()?,
            aug_subject: aug.id.iter().map(|&id| lookup(id)).collect::<Result<_>>()?,
            long,
            surv,
            aug,
        })
    }

    fn long_column(&self, name: &str) -> Result<Cow<'a, Column>> {
        if let Some(c) = self.long.covariates.get(name) {
            return Ok(Cow::Borrowed(c));
        }
        if let Some(c) = self.surv.covariates.get(name) {
            return Ok(Cow::Owned(c.select(&self.long_subject)));
        }
        if name == "time" || name == "t" {
            return Ok(Cow::Owned(Column::Numeric(self.long.time.clone())));
        }
        Err(Error::Config(format!("unknown column {name}")))
    }

    fn aug_column(&self, name: &str) -> Result<Cow<'a, Column>> {
        augmented_column(self.aug, name).ok_or_else(|| Error::Config(format!("unknown column {name}")))
    }
}

fn numeric(col: &Column, name: &str) -> Result<Vec<f64>> {
    col.as_numeric()
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::Config(format!("column {name} must be numeric")))
}

fn build_block(cfg: &ModelConfig, p: Predictor, term: &TermSpec, rows: &Rows, base_dir: &Path) -> Result<ModelBlock> {
    let label = format!("{}.{}", p.prefix(), term.name());
    let hyper = VarianceSpec::sampled(term.a.unwrap_or(cfg.priors.a), term.b.unwrap_or(cfg.priors.b));
    let on_long = p != Predictor::Survival;
    let on_aug = p != Predictor::Longitudinal;
    let column = term.column();

    // values of the term's column on the longitudinal and augmented rows
    let (long_col, aug_col) = match column {
        Some(name) => (
            if on_long { Some(rows.long_column(name)?) } else { None },
            if on_aug { Some(rows.aug_column(name)?) } else { None },
        ),
        None => (None, None),
    };
    let own_col = if on_long { long_col.as_deref() } else { aug_col.as_deref() };
    let kind = BlockKind::from(term.kind);

    let mut basis = None;
    let mut regions = None;
    let (own_design, aug_design, penalty, constrain) = match term.kind {
        TermKind::Linear => {
            let name = column.unwrap();
            let to_design = |c: &Column| -> Result<Design> {
                let v = numeric(c, name)?;
                Ok(Design::Dense(DMatrix::from_column_slice(v.len(), 1, &v)))
            };
            let penalty = match term.linear_prior {
                LinearPrior::Flat => DMatrix::zeros(1, 1),
                LinearPrior::Gaussian => DMatrix::identity(1, 1),
            };
            let aug = match (p, &aug_col) {
                (Predictor::Shared, Some(c)) => Some(to_design(c)?),
                _ => None,
            };
            (to_design(own_col.unwrap())?, aug, penalty, false)
        }
        TermKind::PSpline | TermKind::BaselinePSpline => {
            let name = column.unwrap();
            let mut all = Vec::new();
            if let Some(c) = &long_col {
                all.extend(numeric(c, name)?);
            }
            if let Some(c) = &aug_col {
                all.extend(numeric(c, name)?);
            }
            let b = BSplineBasis::from_data(&all, term.knots, term.degree)?;
            let own = Design::compress(b.evaluate(&numeric(own_col.unwrap(), name)?)?);
            let aug = match (p, &aug_col) {
                (Predictor::Shared, Some(c)) => Some(Design::compress(b.evaluate(&numeric(c, name)?)?)),
                _ => None,
            };
            basis = Some(b);
            let penalty = difference_penalty(term.knots, term.diff_order)?;
            (own, aug, penalty, term.kind == TermKind::PSpline)
        }
        TermKind::Mrf => {
            let map = term.map_ref.as_deref().unwrap();
            let graph = AdjacencyGraph::read(base_dir.join(map))?;
            let own = mrf_design(&own_col.unwrap().labels(), &graph)?;
            let aug = match (p, &aug_col) {
                (Predictor::Shared, Some(c)) => Some(mrf_design(&c.labels(), &graph)?),
                _ => None,
            };
            regions = Some(graph.labels().to_vec());
            (own, aug, mrf_penalty(&graph), true)
        }
        TermKind::RandomIntercept | TermKind::RandomSlope => {
            let n = rows.surv.len();
            let slope = |c: &Option<Cow<Column>>| -> Result<Option<Vec<f64>>> {
                match (term.kind, c) {
                    (TermKind::RandomSlope, Some(c)) => Ok(Some(numeric(c, column.unwrap())?)),
                    _ => Ok(None),
                }
            };
            let long_slope = slope(&long_col)?;
            let aug_slope = slope(&aug_col)?;
            let own = random_effect_design(&rows.long_subject, n, long_slope.as_deref())?;
            let aug = random_effect_design(&rows.aug_subject, n, aug_slope.as_deref())?;
            (own, Some(aug), DMatrix::identity(n, n), false)
        }
    };
    let mut effect = EffectBlock::new(label, own_design, penalty)?;
    if constrain {
        effect = apply_sum_to_zero(effect);
    }
    let mut block = ModelBlock::new(p, kind, effect, aug_design, hyper)?;
    block.covariate = column.map(String::from);
    block.basis = basis;
    block.regions = regions;
    Ok(block)
}

/// Fitted values of a block on its own rows for a coefficient vector in the
/// block's (possibly reduced) coordinates.
pub fn block_effect(block: &ModelBlock, gamma: &DVector<f64>) -> DVector<f64> {
    block.effect.effect_on(&block.effect.design, gamma)
}
