//! Piecewise-exponential data: splitting follow-up into intervals so that a
//! proportional-hazards model becomes a Poisson regression with log-exposure
//! offsets.

use std::path::Path;

use crate::data::{format_number, read_table, write_table, Column, Covariates, LongitudinalDataset, SurvivalDataset};
use crate::error::{Error, Result};

/// Two cut points closer than this are treated as the same boundary.
const CUT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutStrategy {
    /// Unique observed event times.
    EventTimes,
    /// `J` equiprobable quantiles of all observed times.
    Quantiles(usize),
}

/// Where inside `(kappa_lo, kappa_hi]` time-dependent terms are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPoint {
    #[default]
    End,
    Midpoint,
}

impl EvalPoint {
    pub fn at(self, lo: f64, hi: f64) -> f64 {
        match self {
            EvalPoint::End => hi,
            EvalPoint::Midpoint => 0.5 * (lo + hi),
        }
    }
}

/// What to do with a subject whose first longitudinal observation comes after
/// the start of an interval it is at risk in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingStart {
    /// Use the first observed value for the earlier intervals.
    #[default]
    Backfill,
    /// Leave the subject out of the augmented data.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugmentOptions {
    pub eval_point: EvalPoint,
    pub missing_start: MissingStart,
}

/// Cut points `0 = κ_0 < ... < κ_J = max T_i`, with `extra` merged in.
pub fn make_cuts(surv: &SurvivalDataset, strategy: CutStrategy, extra: &[f64]) -> Result<Vec<f64>> {
    if surv.is_empty() {
        return Err(Error::InvalidInput("cannot build cuts from an empty dataset".into()));
    }
    let t_max = surv.max_time();
    let mut cuts = vec![0.0, t_max];
    match strategy {
        CutStrategy::EventTimes => {
            cuts.extend(surv.time.iter().zip(&surv.delta).filter(|(_, &d)| d == 1).map(|(&t, _)| t));
        }
        CutStrategy::Quantiles(j) => {
            if j < 1 {
                return Err(Error::InvalidInput("quantile cuts need J >= 1".into()));
            }
            let mut sorted = surv.time.clone();
            sorted.sort_by(f64::total_cmp);
            cuts.extend((1..j).map(|k| quantile(&sorted, k as f64 / j as f64)));
        }
    }
    cuts.extend(extra.iter().copied().filter(|&x| x > 0.0 && x < t_max));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|b, a| (*b - *a).abs() <= CUT_TOLERANCE * a.abs().max(1.0));
    // the last boundary must be exactly max T
    *cuts.last_mut().expect("cuts contain 0 and t_max") = t_max;
    Ok(cuts)
}

/// Linear-interpolation quantile of sorted data (the usual "type 7" rule).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The interval-split survival data.
///
/// `time` is the evaluation point of each row (see [`EvalPoint`]) and is
/// written to CSV as a covariate column named `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub id: Vec<i64>,
    pub j: Vec<usize>,
    pub kappa_lo: Vec<f64>,
    pub kappa_hi: Vec<f64>,
    pub offset: Vec<f64>,
    pub delta: Vec<u8>,
    pub time: Vec<f64>,
    pub covariates: Covariates,
    pub cuts: Vec<f64>,
    /// Subjects whose early intervals were filled with their first observation.
    pub backfilled: Vec<i64>,
    /// Subjects left out under [`MissingStart::Drop`].
    pub dropped: Vec<i64>,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    /// Exposure time of each row, `exp(offset)`.
    pub fn exposure(&self) -> Vec<f64> {
        self.offset.iter().map(|o| o.exp()).collect()
    }

    /// Collapse back to one `(id, T, delta)` per subject, in row order.
    pub fn collapse(&self) -> Vec<(i64, f64, u8)> {
        let mut out: Vec<(i64, f64, u8)> = Vec::new();
        for r in 0..self.len() {
            let t = self.kappa_lo[r] + self.offset[r].exp();
            match out.last_mut() {
                Some(last) if last.0 == self.id[r] => {
                    last.1 = t;
                    last.2 += self.delta[r];
                }
                _ => out.push((self.id[r], t, self.delta[r])),
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut header: Vec<String> = ["id", "j", "kappa_lo", "kappa_hi", "offset", "delta", "time"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.covariates.names().map(String::from));
        let rows = (0..self.len()).map(|r| {
            let mut row = vec![
                self.id[r].to_string(),
                self.j[r].to_string(),
                format_number(self.kappa_lo[r]),
                format_number(self.kappa_hi[r]),
                format_number(self.offset[r]),
                self.delta[r].to_string(),
                format_number(self.time[r]),
            ];
            row.extend(self.covariates.iter().map(|(_, c)| c.cell(r)));
            row
        });
        write_table(path, &header, rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let table = read_table(&path)?;
        let num = |name: &str| table.numeric_col(&path, name);
        let id = num("id")?.into_iter().map(|x| x as i64).collect();
        let j = num("j")?.into_iter().map(|x| x as usize).collect();
        let kappa_lo = num("kappa_lo")?;
        let kappa_hi = num("kappa_hi")?;
        let offset = num("offset")?;
        let delta = num("delta")?.into_iter().map(|x| x as u8).collect();
        let time = num("time")?;
        let covariates = table.rest(&["id", "j", "kappa_lo", "kappa_hi", "offset", "delta", "time"]);
        let mut cuts: Vec<f64> = kappa_lo.iter().chain(&kappa_hi).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        Ok(AugmentedDataset {
            id,
            j,
            kappa_lo,
            kappa_hi,
            offset,
            delta,
            time,
            covariates,
            cuts,
            backfilled: Vec::new(),
            dropped: Vec::new(),
        })
    }
}

/// Split every subject's follow-up at `cuts`.
///
/// Longitudinal covariates (every column of `long` other than `id`, `time`,
/// `y`) are carried forward from the last observation at or before each
/// interval's start. Baseline covariates of `surv` are copied to every row.
pub fn augment(
    surv: &SurvivalDataset,
    long: &LongitudinalDataset,
    cuts: &[f64],
    options: AugmentOptions,
) -> Result<AugmentedDataset> {
    if cuts.len() < 2 || cuts[0] != 0.0 || cuts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("cuts must start at 0 and strictly increase".into()));
    }
    let t_max = *cuts.last().unwrap();
    if surv.max_time() > t_max * (1.0 + CUT_TOLERANCE) {
        return Err(Error::InvalidInput(format!(
            "cuts end at {t_max} but follow-up extends to {}",
            surv.max_time()
        )));
    }
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); surv.len()];
    for (r, &id) in long.id.iter().enumerate() {
        let i = surv
            .index_of(id)
            .ok_or_else(|| Error::InvalidInput(format!("longitudinal row {r} has unknown subject {id}")))?;
        rows_of[i].push(r);
    }
    for rows in rows_of.iter_mut() {
        rows.sort_by(|&a, &b| long.time[a].total_cmp(&long.time[b]));
    }

    let mut out = AugmentedDataset {
        id: Vec::new(),
        j: Vec::new(),
        kappa_lo: Vec::new(),
        kappa_hi: Vec::new(),
        offset: Vec::new(),
        delta: Vec::new(),
        time: Vec::new(),
        covariates: Covariates::new(),
        cuts: cuts.to_vec(),
        backfilled: Vec::new(),
        dropped: Vec::new(),
    };
    let has_long_covariates = !long.covariates.is_empty();
    // source row in `long` and subject index for every augmented row
    let mut long_row = Vec::new();
    let mut subject_row = Vec::new();

    for i in 0..surv.len() {
        let ti = surv.time[i];
        let obs = &rows_of[i];
        let mut subject_rows = Vec::new();
        let mut needs_backfill = false;
        for j in 1..cuts.len() {
            let (lo, hi) = (cuts[j - 1], cuts[j]);
            if lo >= ti {
                break;
            }
            // ties T_i = κ_j close the interval (κ_{j-1}, κ_j]
            let end = if (ti - hi).abs() <= CUT_TOLERANCE * hi.max(1.0) { hi } else { ti.min(hi) };
            let closes = ti <= hi * (1.0 + CUT_TOLERANCE);
            let src = obs.iter().rev().find(|&&r| long.time[r] <= lo + CUT_TOLERANCE).copied();
            let src = match (src, obs.first()) {
                (Some(r), _) => Some(r),
                (None, Some(&first)) => {
                    needs_backfill = true;
                    Some(first)
                }
                (None, None) => None,
            };
            subject_rows.push((j, lo, hi, (end - lo).ln(), closes && surv.delta[i] == 1, src));
        }
        if needs_backfill && has_long_covariates {
            match options.missing_start {
                MissingStart::Backfill => out.backfilled.push(surv.id[i]),
                MissingStart::Drop => {
                    out.dropped.push(surv.id[i]);
                    continue;
                }
            }
        }
        if has_long_covariates && obs.is_empty() {
            return Err(Error::InvalidInput(format!(
                "subject {} has no longitudinal rows to carry covariates from",
                surv.id[i]
            )));
        }
        for (j, lo, hi, offset, event, src) in subject_rows {
            out.id.push(surv.id[i]);
            out.j.push(j);
            out.kappa_lo.push(lo);
            out.kappa_hi.push(hi);
            out.offset.push(offset);
            out.delta.push(event as u8);
            out.time.push(options.eval_point.at(lo, hi));
            long_row.push(src.unwrap_or(0));
            subject_row.push(i);
        }
    }

    for (name, col) in long.covariates.iter() {
        out.covariates.push(name, col.select(&long_row));
    }
    for (name, col) in surv.covariates.iter() {
        if out.covariates.get(name).is_none() {
            out.covariates.push(name, col.select(&subject_row));
        }
    }
    Ok(out)
}

/// Exact piecewise-exponential log-likelihood for hazards `lambda[j]`
/// constant on `(cuts[j], cuts[j+1]]`.
pub fn pe_loglik_oracle(surv: &SurvivalDataset, cuts: &[f64], lambda: &[f64]) -> Result<f64> {
    if lambda.len() + 1 != cuts.len() {
        return Err(Error::InvalidInput(format!(
            "{} hazards for {} intervals",
            lambda.len(),
            cuts.len().saturating_sub(1)
        )));
    }
    if let Some(l) = lambda.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::InvalidInput(format!("hazard {l} is not positive")));
    }
    let mut ll = 0.0;
    for (&t, &d) in surv.time.iter().zip(&surv.delta) {
        for j in 0..lambda.len() {
            let (lo, hi) = (cuts[j], cuts[j + 1]);
            if lo >= t {
                break;
            }
            ll -= lambda[j] * (t.min(hi) - lo);
            if d == 1 && t <= hi {
                ll += lambda[j].ln();
            }
        }
    }
    Ok(ll)
}

/// Column lookup on augmented rows, treating `time` (or `t`) as the row's
/// evaluation point.
pub fn augmented_column<'a>(aug: &'a AugmentedDataset, name: &str) -> Option<std::borrow::Cow<'a, Column>> {
    if name == "time" || name == "t" {
        if let Some(c) = aug.covariates.get(name) {
            return Some(std::borrow::Cow::Borrowed(c));
        }
        return Some(std::borrow::Cow::Owned(Column::Numeric(aug.time.clone())));
    }
    aug.covariates.get(name).map(std::borrow::Cow::Borrowed)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The two subjects illustrating interval splitting.
    pub(crate) fn two_subjects() -> (SurvivalDataset, LongitudinalDataset) {
        let surv = SurvivalDataset::new(vec![1, 2], vec![0.85, 0.58], vec![1, 0], Covariates::new()).unwrap();
        let mut cov = Covariates::new();
        cov.push("x", Column::Numeric(vec![0.83, -0.28, -0.36, 0.09, 2.25]));
        let long = LongitudinalDataset::new(
            vec![1, 1, 1, 2, 2],
            vec![0.0, 0.3, 0.6, 0.0, 0.4],
            vec![0.0; 5],
            cov,
        )
        .unwrap();
        (surv, long)
    }

    #[test]
    fn event_time_cuts() {
        let (surv, long) = two_subjects();
        assert_eq!(make_cuts(&surv, CutStrategy::EventTimes, &[]).unwrap(), vec![0.0, 0.85]);
        let cuts = make_cuts(&surv, CutStrategy::EventTimes, &long.time).unwrap();
        assert_eq!(cuts, vec![0.0, 0.3, 0.4, 0.6, 0.85]);
    }

    #[test]
    fn quantile_cuts() {
        let surv = SurvivalDataset::new(vec![1, 2], vec![0.5, 1.0], vec![1, 1], Covariates::new()).unwrap();
        assert_eq!(make_cuts(&surv, CutStrategy::Quantiles(2), &[]).unwrap(), vec![0.0, 0.75, 1.0]);
        assert!(make_cuts(&surv, CutStrategy::Quantiles(0), &[]).is_err());
    }

    #[test]
    fn table_fixture() {
        let (surv, long) = two_subjects();
        let cuts = vec![0.0, 0.3, 0.4, 0.6, 0.85];
        let aug = augment(&surv, &long, &cuts, AugmentOptions::default()).unwrap();
        assert_eq!(aug.id, vec![1, 1, 1, 1, 2, 2, 2]);
        let printed = [-1.20, -2.30, -1.61, -1.39, -1.20, -2.30, -1.71];
        for (o, p) in aug.offset.iter().zip(printed) {
            assert!((o - p).abs() < 0.005, "{o} vs {p}");
        }
        assert_eq!(aug.delta, vec![0, 0, 0, 1, 0, 0, 0]);
        let x = aug.covariates.get("x").unwrap().as_numeric().unwrap();
        assert_eq!(x, &[0.83, -0.28, -0.28, -0.36, 0.09, 0.09, 2.25]);
        assert_eq!(aug.time, vec![0.3, 0.4, 0.6, 0.85, 0.3, 0.4, 0.6]);
    }

    #[test]
    fn tie_with_first_cut_gives_one_row() {
        let surv = SurvivalDataset::new(vec![1], vec![0.3], vec![1], Covariates::new()).unwrap();
        let long = LongitudinalDataset::new(vec![1], vec![0.0], vec![0.0], Covariates::new()).unwrap();
        let aug = augment(&surv, &long, &[0.0, 0.3, 0.9], AugmentOptions::default()).unwrap();
        assert_eq!(aug.len(), 1);
        assert_eq!(aug.offset[0], 0.3f64.ln());
        assert_eq!(aug.delta, vec![1]);
    }

    #[test]
    fn late_first_observation_is_backfilled_or_dropped() {
        let surv = SurvivalDataset::new(vec![1, 2], vec![0.9, 0.9], vec![0, 1], Covariates::new()).unwrap();
        let mut cov = Covariates::new();
        cov.push("x", Column::Numeric(vec![1.0, 2.0, 3.0]));
        let long = LongitudinalDataset::new(vec![1, 2, 2], vec![0.0, 0.5, 0.7], vec![0.0; 3], cov).unwrap();
        let cuts = [0.0, 0.5, 0.9];
        let aug = augment(&surv, &long, &cuts, AugmentOptions::default()).unwrap();
        assert_eq!(aug.backfilled, vec![2]);
        assert_eq!(aug.covariates.get("x").unwrap().as_numeric().unwrap(), &[1.0, 1.0, 2.0, 2.0]);
        let opts = AugmentOptions {
            missing_start: MissingStart::Drop,
            ..Default::default()
        };
        let aug = augment(&surv, &long, &cuts, opts).unwrap();
        assert_eq!(aug.dropped, vec![2]);
        assert_eq!(aug.id, vec![1, 1]);
    }

    #[test]
    fn oracle_examples() {
        let one = SurvivalDataset::new(vec![1], vec![1.0], vec![1], Covariates::new()).unwrap();
        assert_eq!(pe_loglik_oracle(&one, &[0.0, 1.0], &[1.0]).unwrap(), -1.0);
        let (surv, _) = two_subjects();
        let ll = pe_loglik_oracle(&surv, &[0.0, 0.3, 0.4, 0.6, 0.85], &[1.0; 4]).unwrap();
        assert!((ll + 1.43).abs() < 1e-12);
        assert!(pe_loglik_oracle(&one, &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn csv_round_trip_and_collapse() {
        let (surv, long) = two_subjects();
        let aug = augment(&surv, &long, &[0.0, 0.3, 0.4, 0.6, 0.85], AugmentOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ped.csv");
        aug.write_csv(&p).unwrap();
        let back = AugmentedDataset::read_csv(&p).unwrap();
        assert_eq!(back.offset, aug.offset);
        assert_eq!(back.covariates, aug.covariates);
        assert_eq!(back.cuts, aug.cuts);
        let c = aug.collapse();
        assert_eq!(c.len(), 2);
        assert!((c[0].1 - 0.85).abs() < 1e-12 && c[0].2 == 1);
        assert!((c[1].1 - 0.58).abs() < 1e-12 && c[1].2 == 0);
    }
}
