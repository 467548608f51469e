//! Property checks shared by the proptest suite and the acceptance target.
//! Each check returns a description of the first violation.

use jointpam::basis::{difference_penalty, mrf_penalty, BSplineBasis};
use jointpam::data::{Covariates, LongitudinalDataset, SurvivalDataset};
use jointpam::graph::AdjacencyGraph;
use jointpam::ped::{augment, make_cuts, AugmentOptions, CutStrategy};
use jointpam::posterior::hdi;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

pub type Check = Result<(), String>;

fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-8 * top.max(1e-300)).count()
}

// -- B-spline partition of unity --

#[derive(Debug, Clone)]
pub struct SplineCase {
    pub lo: f64,
    pub width: f64,
    pub num_basis: usize,
    pub degree: usize,
    /// Positions in `[0, 1]`, mapped into the basis range.
    pub u: Vec<f64>,
}

pub fn spline_case() -> impl Strategy<Value = SplineCase> {
    (-5.0..5.0f64, 0.1..10.0f64, 0usize..5, 0usize..16, prop::collection::vec(0.0..=1.0f64, 1..200)).prop_map(
        |(lo, width, degree, extra, u)| SplineCase {
            lo,
            width,
            num_basis: degree + 2 + extra,
            degree,
            u,
        },
    )
}

pub fn partition_of_unity(c: &SplineCase) -> Check {
    let basis = BSplineBasis::new(c.lo, c.lo + c.width, c.num_basis, c.degree).map_err(|e| e.to_string())?;
    let x: Vec<f64> = c.u.iter().map(|u| c.lo + u * c.width).collect();
    let b = basis.evaluate(&x).map_err(|e| e.to_string())?;
    for (r, xi) in x.iter().enumerate() {
        let row = b.row(r);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!("row sum {sum} at x = {xi}"));
        }
        if row.iter().any(|&v| v < 0.0) {
            return Err(format!("negative basis value at x = {xi}"));
        }
    }
    Ok(())
}

// -- difference penalties --

#[derive(Debug, Clone)]
pub struct PenaltyCase {
    pub num_coef: usize,
    pub order: usize,
    pub gammas: Vec<Vec<f64>>,
}

pub fn penalty_case() -> impl Strategy<Value = PenaltyCase> {
    (1usize..=2, 0usize..30).prop_flat_map(|(order, extra)| {
        let num_coef = order + 1 + extra;
        prop::collection::vec(prop::collection::vec(-100.0..100.0f64, num_coef), 1..20).prop_map(move |gammas| {
            PenaltyCase {
                num_coef,
                order,
                gammas,
            }
        })
    })
}

pub fn penalty_psd_rank(c: &PenaltyCase) -> Check {
    let k = difference_penalty(c.num_coef, c.order).map_err(|e| e.to_string())?;
    if (&k - k.transpose()).amax() > 0.0 {
        return Err("penalty is not symmetric".into());
    }
    for g in &c.gammas {
        let g = DVector::from_column_slice(g);
        let q = g.dot(&(&k * &g));
        if q < -1e-12 * g.norm_squared() {
            return Err(format!("negative quadratic form {q}"));
        }
    }
    let rank = numeric_rank(&k);
    if rank != c.num_coef - c.order {
        return Err(format!("rank {rank}, expected {}", c.num_coef - c.order));
    }
    Ok(())
}

// -- MRF penalty versus brute-force Laplacian --

#[derive(Debug, Clone)]
pub struct GraphCase {
    pub size: usize,
    pub edges: Vec<(usize, usize)>,
}

pub fn graph_case() -> impl Strategy<Value = GraphCase> {
    (1usize..=12).prop_flat_map(|size| {
        let pairs = size * (size - 1) / 2;
        prop::collection::vec(any::<bool>(), pairs).prop_map(move |keep| {
            let mut edges = Vec::new();
            let mut idx = 0;
            for a in 0..size {
                for b in a + 1..size {
                    if keep[idx] {
                        edges.push((a, b));
                    }
                    idx += 1;
                }
            }
            GraphCase { size, edges }
        })
    })
}

fn brute_components(size: usize, edges: &[(usize, usize)]) -> usize {
    let mut label: Vec<usize> = (0..size).collect();
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            let m = label[a].min(label[b]);
            if label[a] != m || label[b] != m {
                label[a] = m;
                label[b] = m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut roots = label;
    roots.sort();
    roots.dedup();
    roots.len()
}

pub fn mrf_equals_laplacian(c: &GraphCase) -> Check {
    let labels = (0..c.size).map(|i| format!("r{i}")).collect();
    let g = AdjacencyGraph::from_edges(labels, &c.edges).map_err(|e| e.to_string())?;
    let k = mrf_penalty(&g);
    let mut lap = DMatrix::<f64>::zeros(c.size, c.size);
    for &(a, b) in &c.edges {
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] -= 1.0;
        lap[(b, a)] -= 1.0;
    }
    if k != lap {
        return Err(format!("penalty {k} differs from Laplacian {lap}"));
    }
    let expected = c.size - brute_components(c.size, &c.edges);
    let rank = numeric_rank(&k);
    if rank != expected {
        return Err(format!("rank {rank}, expected {expected}"));
    }
    if g.components() != brute_components(c.size, &c.edges) {
        return Err("component count differs".into());
    }
    Ok(())
}

// -- HDI --

#[derive(Debug, Clone)]
pub struct HdiCase {
    pub draws: Vec<f64>,
    pub level: f64,
}

pub fn hdi_case() -> impl Strategy<Value = HdiCase> {
    (prop::collection::vec(-1e3..1e3f64, 100..500), 0.05..=1.0f64).prop_map(|(draws, level)| HdiCase { draws, level })
}

pub fn hdi_count_containment(c: &HdiCase) -> Check {
    let iv = hdi(&c.draws, c.level).map_err(|e| e.to_string())?;
    let m = c.draws.len();
    let need = ((c.level * m as f64) - 1e-9).ceil() as usize;
    let inside = c.draws.iter().filter(|&&x| iv.contains(x)).count();
    if inside < need {
        return Err(format!("{inside} draws inside, need {need}"));
    }
    if !(iv.lo <= iv.hi) || !c.draws.contains(&iv.lo) || !c.draws.contains(&iv.hi) {
        return Err(format!("bounds ({}, {}) are not ordered draws", iv.lo, iv.hi));
    }
    // no window of `need` sorted draws is narrower
    let mut s = c.draws.clone();
    s.sort_by(f64::total_cmp);
    let narrowest = (0..=m - need).map(|i| s[i + need - 1] - s[i]).fold(f64::INFINITY, f64::min);
    if iv.hi - iv.lo > narrowest {
        return Err(format!("width {} exceeds narrowest window {narrowest}", iv.hi - iv.lo));
    }
    Ok(())
}

// -- exposure conservation --

#[derive(Debug, Clone)]
pub struct SurvCase {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    /// `None` for event-time cuts, otherwise the number of quantile intervals.
    pub quantiles: Option<usize>,
    pub extra: Vec<f64>,
}

pub fn surv_case() -> impl Strategy<Value = SurvCase> {
    (1usize..=20).prop_flat_map(|n| {
        (
            prop::collection::vec(0.01..3.0f64, n),
            prop::collection::vec(any::<bool>(), n),
            prop::option::of(1usize..8),
            prop::collection::vec(0.0..3.0f64, 0..5),
        )
            .prop_map(|(times, events, quantiles, extra)| SurvCase {
                times,
                events,
                quantiles,
                extra,
            })
    })
}

impl SurvCase {
    pub fn survival(&self) -> SurvivalDataset {
        let n = self.times.len();
        SurvivalDataset::new(
            (1..=n as i64).collect(),
            self.times.clone(),
            self.events.iter().map(|&e| e as u8).collect(),
            Covariates::new(),
        )
        .unwrap()
    }

    pub fn strategy(&self) -> CutStrategy {
        self.quantiles.map_or(CutStrategy::EventTimes, CutStrategy::Quantiles)
    }
}

pub fn empty_longitudinal() -> LongitudinalDataset {
    LongitudinalDataset::new(vec![], vec![], vec![], Covariates::new()).unwrap()
}

pub fn exposure_conservation(c: &SurvCase) -> Check {
    let surv = c.survival();
    let mut extra = c.extra.clone();
    extra.sort_by(f64::total_cmp);
    let cuts = make_cuts(&surv, c.strategy(), &extra).map_err(|e| e.to_string())?;
    let aug = augment(&surv, &empty_longitudinal(), &cuts, AugmentOptions::default()).map_err(|e| e.to_string())?;
    for (i, &id) in surv.id.iter().enumerate() {
        let rows: Vec<usize> = (0..aug.len()).filter(|&r| aug.id[r] == id).collect();
        let total: f64 = rows.iter().map(|&r| aug.offset[r].exp()).sum();
        if (total - surv.time[i]).abs() > 1e-10 {
            return Err(format!("subject {id}: exposure {total} vs T = {}", surv.time[i]));
        }
        let events: u32 = rows.iter().map(|&r| aug.delta[r] as u32).sum();
        if events != surv.delta[i] as u32 {
            return Err(format!("subject {id}: {events} event rows"));
        }
        if surv.delta[i] == 1 && aug.delta[*rows.last().unwrap()] != 1 {
            return Err(format!("subject {id}: event not on the last row"));
        }
        let entered = cuts.windows(2).filter(|w| w[0] < surv.time[i]).count();
        if rows.len() != entered {
            return Err(format!("subject {id}: {} rows for {entered} entered intervals", rows.len()));
        }
    }
    let collapsed = aug.collapse();
    for (i, (id, t, d)) in collapsed.iter().enumerate() {
        if *id != surv.id[i] || (t - surv.time[i]).abs() > 1e-10 || *d != surv.delta[i] {
            return Err(format!("collapse of subject {id} gives ({t}, {d})"));
        }
    }
    Ok(())
}
