//! Design matrices with the row structures that show up in additive predictors.
//!
//! Random effects and spatial incidences have a single nonzero per row, and
//! on the augmented survival rows most covariates repeat across a subject's
//! intervals. Keeping those structures explicit makes `Z'WZ` cost
//! `O(rows + groups * p^2)` instead of `O(rows * p^2)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Dense(DMatrix<f64>),
    /// Row `r` holds `value[r]` in column `col[r]` and zeros elsewhere.
    Indicator {
        ncols: usize,
        col: Vec<usize>,
        value: Vec<f64>,
    },
    /// Row `r` equals row `group[r]` of `rows`.
    Grouped { group: Vec<usize>, rows: DMatrix<f64> },
}

impl Design {
    pub fn nrows(&self) -> usize {
        match self {
            Design::Dense(m) => m.nrows(),
            Design::Indicator { col, .. } => col.len(),
            Design::Grouped { group, .. } => group.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Design::Dense(m) => m.ncols(),
            Design::Indicator { ncols, .. } => *ncols,
            Design::Grouped { rows, .. } => rows.ncols(),
        }
    }

    /// Collapse duplicated rows of a dense matrix into a grouped design when
    /// that saves at least half of the rows.
    pub fn compress(m: DMatrix<f64>) -> Design {
        let n = m.nrows();
        if n < 4 || m.ncols() < 2 {
            return Design::Dense(m);
        }
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut group = Vec::with_capacity(n);
        let mut firsts = Vec::new();
        for r in 0..n {
            let key: Vec<u64> = m.row(r).iter().map(|v| v.to_bits()).collect();
            let next = firsts.len();
            let g = *seen.entry(key).or_insert(next);
            if g == next {
                firsts.push(r);
            }
            group.push(g);
        }
        if firsts.len() * 2 > n {
            return Design::Dense(m);
        }
        let rows = DMatrix::from_fn(firsts.len(), m.ncols(), |g, c| m[(firsts[g], c)]);
        Design::Grouped { group, rows }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Design::Dense(m) => m.clone(),
            Design::Indicator { ncols, col, value } => {
                let mut m = DMatrix::zeros(col.len(), *ncols);
                for (r, (&c, &v)) in col.iter().zip(value).enumerate() {
                    m[(r, c)] = v;
                }
                m
            }
            Design::Grouped { group, rows } => {
                DMatrix::from_fn(group.len(), rows.ncols(), |r, c| rows[(group[r], c)])
            }
        }
    }

    /// `Z x`.
    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.ncols());
        match self {
            Design::Dense(m) => m * x,
            Design::Indicator { col, value, .. } => {
                DVector::from_iterator(col.len(), col.iter().zip(value).map(|(&c, &v)| v * x[c]))
            }
            Design::Grouped { group, rows } => {
                let per_group = rows * x;
                DVector::from_iterator(group.len(), group.iter().map(|&g| per_group[g]))
            }
        }
    }

    /// `Z' v`.
    pub fn tr_mul(&self, v: &[f64]) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.nrows());
        match self {
            Design::Dense(m) => m.tr_mul(&DVector::from_column_slice(v)),
            Design::Indicator { ncols, col, value } => {
                let mut out = DVector::zeros(*ncols);
                for ((&c, &u), &vi) in col.iter().zip(value).zip(v) {
                    out[c] += u * vi;
                }
                out
            }
            Design::Grouped { group, rows } => {
                let mut agg = DVector::zeros(rows.nrows());
                for (&g, &vi) in group.iter().zip(v) {
                    agg[g] += vi;
                }
                rows.tr_mul(&agg)
            }
        }
    }

    /// `Z' diag(w) Z` for non-negative weights.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(w.len(), self.nrows());
        match self {
            Design::Dense(m) => {
                let mut scaled = m.clone();
                for (r, &wr) in w.iter().enumerate() {
                    scaled.row_mut(r).scale_mut(wr);
                }
                m.tr_mul(&scaled)
            }
            Design::Indicator { .. } => DMatrix::from_diagonal(&self.weighted_gram_diagonal(w).unwrap()),
            Design::Grouped { group, rows } => {
                let mut agg = vec![0.0; rows.nrows()];
                for (&g, &wr) in group.iter().zip(w) {
                    agg[g] += wr;
                }
                let mut scaled = rows.clone();
                for (g, &wg) in agg.iter().enumerate() {
                    scaled.row_mut(g).scale_mut(wg);
                }
                rows.tr_mul(&scaled)
            }
        }
    }

    /// Diagonal of `Z' W Z` when that matrix is diagonal by construction
    /// (indicator designs).
    pub fn weighted_gram_diagonal(&self, w: &[f64]) -> Option<DVector<f64>> {
        match self {
            Design::Indicator { ncols, col, value } => {
                let mut d = DVector::zeros(*ncols);
                for ((&c, &u), &wr) in col.iter().zip(value).zip(w) {
                    d[c] += wr * u * u;
                }
                Some(d)
            }
            _ => None,
        }
    }

    /// `Z' Z`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.weighted_gram(&vec![1.0; self.nrows()])
    }

    /// `Z' 1`.
    pub fn column_sums(&self) -> DVector<f64> {
        self.tr_mul(&vec![1.0; self.nrows()])
    }

    /// Right-multiply by a dense transform, `Z T`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Design {
        match self {
            Design::Dense(m) => Design::Dense(m * t),
            Design::Grouped { group, rows } => Design::Grouped {
                group: group.clone(),
                rows: rows * t,
            },
            Design::Indicator { .. } => Design::Dense(self.to_dense() * t),
        }
    }

    /// Keep only the rows listed in `idx` (in that order).
    pub fn select_rows(&self, idx: &[usize]) -> Design {
        match self {
            Design::Dense(m) => Design::Dense(m.select_rows(idx)),
            Design::Indicator { ncols, col, value } => Design::Indicator {
                ncols: *ncols,
                col: idx.iter().map(|&r| col[r]).collect(),
                value: idx.iter().map(|&r| value[r]).collect(),
            },
            Design::Grouped { group, rows } => Design::Grouped {
                group: idx.iter().map(|&r| group[r]).collect(),
                rows: rows.clone(),
            },
        }
    }
}
