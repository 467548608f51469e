//! Design and penalty matrices for the additive effect types.
//!
//! Every effect enters a predictor as `Z γ` with a (possibly rank deficient)
//! Gaussian prior `exp(-γ'Kγ / 2σ²)`:
//!
//! * P-splines: equidistant B-spline basis, `K = D'D` with `D` a difference matrix;
//! * spatial effects: region incidence matrix, `K` the graph Laplacian;
//! * random intercepts / slopes: per-subject indicator columns, `K = I`;
//! * linear effects: the covariate itself, `K = I` or a flat prior (`K = 0`).

use nalgebra::{DMatrix, DVector};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::linalg::numerical_rank;

/// Equidistant B-spline basis on `[lo, hi]`, extended by `degree` knots on
/// each side.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    lo: f64,
    hi: f64,
    num_basis: usize,
    degree: usize,
}

impl BSplineBasis {
    pub fn new(lo: f64, hi: f64, num_basis: usize, degree: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidInput("spline range must be finite".into()));
        }
        if hi <= lo {
            return Err(Error::InvalidInput(format!(
                "spline range [{lo}, {hi}] is empty; the covariate has no spread"
            )));
        }
        if num_basis < degree + 2 {
            return Err(Error::InvalidInput(format!(
                "{num_basis} basis functions is too few for degree {degree} (need at least {})",
                degree + 2
            )));
        }
        Ok(BSplineBasis {
            lo,
            hi,
            num_basis,
            degree,
        })
    }

    /// Basis spanning the observed range of `x`.
    pub fn from_data(x: &[f64], num_basis: usize, degree: usize) -> Result<Self> {
        check_finite(x)?;
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if x.is_empty() {
            return Err(Error::InvalidInput("cannot build a spline basis from no data".into()));
        }
        Self::new(lo, hi, num_basis, degree)
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn segments(&self) -> usize {
        self.num_basis - self.degree
    }

    fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.segments() as f64
    }

    /// Knot `i` of the (conceptually infinite) equidistant knot sequence.
    fn knot(&self, i: i64) -> f64 {
        self.lo + (i - self.degree as i64) as f64 * self.spacing()
    }

    /// Knot positions `t_0 .. t_{num_basis + degree}`.
    pub fn knots(&self) -> Vec<f64> {
        (0..=(self.num_basis + self.degree) as i64)
            .map(|i| self.knot(i))
            .collect()
    }

    /// Nonzero basis values at `x`: returns the index of the first nonzero
    /// basis function and the `degree + 1` values starting there.
    fn local(&self, x: f64) -> (i64, Vec<f64>) {
        let p = self.degree;
        let h = self.spacing();
        let mut seg = ((x - self.lo) / h).floor() as i64;
        if x >= self.hi && x - self.hi <= 1e-12 * (self.hi - self.lo).max(1.0) {
            // the right end belongs to the last interior segment
            seg = self.segments() as i64 - 1;
        }
        let span = seg + p as i64;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knot(span + 1 - j as i64);
            right[j] = self.knot(span + j as i64) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (span - p as i64, n)
    }

    /// Evaluate the basis at every point of `x`; one row per point.
    pub fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_finite(x)?;
        let mut m = DMatrix::zeros(x.len(), self.num_basis);
        for (row, &xi) in x.iter().enumerate() {
            let (first, vals) = self.local(xi);
            for (k, v) in vals.into_iter().enumerate() {
                let col = first + k as i64;
                if col >= 0 && (col as usize) < self.num_basis {
                    m[(row, col as usize)] = v;
                }
            }
        }
        Ok(m)
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "non-finite covariate value {} at position {i}",
            x[i]
        ))),
        None => Ok(()),
    }
}

/// B-spline design matrix with `knots` basis functions of the given degree
/// over the observed range of `x`.
pub fn bspline_basis(x: &[f64], knots: usize, degree: usize) -> Result<DMatrix<f64>> {
    BSplineBasis::from_data(x, knots, degree)?.evaluate(x)
}

/// Difference matrix `D` of the given order, `(num_coef - order) x num_coef`.
pub fn difference_matrix(num_coef: usize, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 || num_coef <= order {
        return Err(Error::InvalidInput(format!(
            "difference penalty of order {order} needs more than {order} coefficients, got {num_coef}"
        )));
    }
    let mut d = DMatrix::<f64>::identity(num_coef, num_coef);
    for _ in 0..order {
        let r = d.nrows();
        d = DMatrix::from_fn(r - 1, num_coef, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    Ok(d)
}

/// Random-walk penalty `K = D'D`.
pub fn difference_penalty(num_coef: usize, order: usize) -> Result<DMatrix<f64>> {
    let d = difference_matrix(num_coef, order)?;
    Ok(d.tr_mul(&d))
}

/// Markov random field penalty: the graph Laplacian of `graph`.
pub fn mrf_penalty(graph: &AdjacencyGraph) -> DMatrix<f64> {
    let s = graph.len();
    let mut k = DMatrix::zeros(s, s);
    for r in 0..s {
        let nb = graph.neighbors(r);
        k[(r, r)] = nb.len() as f64;
        for &n in nb {
            k[(r, n)] = -1.0;
        }
    }
    k
}

/// Per-subject indicator design. `subject[r]` is the 0-based subject of row
/// `r`; with a covariate the nonzero entry is the covariate value (random
/// slope), otherwise 1 (random intercept).
pub fn random_effect_design(
    subject: &[usize],
    n_subjects: usize,
    covariate: Option<&[f64]>,
) -> Result<Design> {
    if let Some(&bad) = subject.iter().find(|&&s| s >= n_subjects) {
        return Err(Error::InvalidInput(format!(
            "unknown subject index {bad} (have {n_subjects} subjects)"
        )));
    }
    let value = match covariate {
        Some(u) => {
            if u.len() != subject.len() {
                return Err(Error::InvalidInput(
                    "random slope covariate length does not match the rows".into(),
                ));
            }
            check_finite(u)?;
            u.to_vec()
        }
        None => vec![1.0; subject.len()],
    };
    Ok(Design::Indicator {
        ncols: n_subjects,
        col: subject.to_vec(),
        value,
    })
}

/// Region incidence matrix: one-hot rows over the regions of `graph`.
pub fn mrf_design<S: AsRef<str>>(region_of_row: &[S], graph: &AdjacencyGraph) -> Result<Design> {
    let col = region_of_row
        .iter()
        .map(|label| {
            graph.index_of(label.as_ref()).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "region label {} is not in the adjacency graph",
                    label.as_ref()
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Design::Indicator {
        ncols: graph.len(),
        value: vec![1.0; col.len()],
        col,
    })
}

/// Linear reparametrization `β = T γ` that removes the direction `c` from
/// the coefficient space, so that `c'β = 0` for every `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumToZero {
    pub constraint: DVector<f64>,
    pub transform: DMatrix<f64>,
    /// Householder vector `v` of `H = I − 2vv'/v'v`; `transform` is `H`
    /// without its first column.
    householder: DVector<f64>,
}

impl SumToZero {
    /// Orthonormal basis of the complement of `c`, from a Householder
    /// reflection that maps `c` onto the first axis.
    pub fn new(c: DVector<f64>) -> Self {
        let p = c.len();
        let c = if c.norm() == 0.0 {
            DVector::from_element(p, 1.0)
        } else {
            c
        };
        let mut v = c.clone();
        let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * c.norm();
        let vv = v.norm_squared();
        let h = DMatrix::<f64>::identity(p, p) - (&v * v.transpose()) * (2.0 / vv);
        let transform = h.columns(1, p - 1).into_owned();
        SumToZero {
            constraint: c,
            transform,
            householder: v,
        }
    }

    /// `T' diag(d) T` in `O(p²)`, using `H D H = D − a(Dv v' + v v'D) + a² (v'Dv) vv'`
    /// with `a = 2/v'v`.
    pub fn reduce_diagonal(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let v = &self.householder;
        let p = v.len();
        let a = 2.0 / v.norm_squared();
        let dv = d.component_mul(v);
        let vdv = v.dot(&dv);
        DMatrix::from_fn(p - 1, p - 1, |i, j| {
            let (i, j) = (i + 1, j + 1);
            let diag = if i == j { d[i] } else { 0.0 };
            diag - a * (dv[i] * v[j] + v[i] * dv[j]) + a * a * vdv * v[i] * v[j]
        })
    }
}

/// One additive effect: design, penalty, coefficients and prior variance.
///
/// `design` is in original coefficient coordinates; when a sum-to-zero
/// constraint is attached, `gamma` and `penalty` live in the reduced
/// coordinates and the original coefficients are `transform * gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectBlock {
    pub label: String,
    pub design: Design,
    pub penalty: DMatrix<f64>,
    pub rank: usize,
    pub constraint: Option<SumToZero>,
    pub gamma: DVector<f64>,
    pub sigma2: f64,
}

impl EffectBlock {
    pub fn new(label: impl Into<String>, design: Design, penalty: DMatrix<f64>) -> Result<Self> {
        let p = design.ncols();
        if penalty.nrows() != p || penalty.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "penalty is {}x{} but the design has {p} columns",
                penalty.nrows(),
                penalty.ncols()
            )));
        }
        Ok(EffectBlock {
            label: label.into(),
            rank: numerical_rank(&penalty),
            design,
            penalty,
            constraint: None,
            gamma: DVector::zeros(p),
            sigma2: 1.0,
        })
    }

    /// Number of free coefficients.
    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Number of coefficients in original coordinates.
    pub fn original_dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn to_original(&self, gamma: &DVector<f64>) -> DVector<f64> {
        match &self.constraint {
            Some(c) => &c.transform * gamma,
            None => gamma.clone(),
        }
    }

    pub fn original_coefficients(&self) -> DVector<f64> {
        self.to_original(&self.gamma)
    }

    /// `Z β(γ)` for an arbitrary design over the same coefficients.
    pub fn effect_on(&self, design: &Design, gamma: &DVector<f64>) -> DVector<f64> {
        design.mul(&self.to_original(gamma))
    }

    /// Fitted effect on the block's own rows.
    pub fn effect(&self) -> DVector<f64> {
        self.effect_on(&self.design, &self.gamma)
    }

    /// `T' M T` for a matrix in original coordinates.
    pub fn reduce_matrix(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        match &self.constraint {
            Some(c) => c.transform.tr_mul(&(m * &c.transform)),
            None => m,
        }
    }

    /// `T' diag(d) T` for a diagonal matrix in original coordinates.
    pub fn reduce_diagonal(&self, d: &DVector<f64>) -> DMatrix<f64> {
        match &self.constraint {
            Some(c) => c.reduce_diagonal(d),
            None => DMatrix::from_diagonal(d),
        }
    }

    /// `T' v` for a vector in original coordinates.
    pub fn reduce_vector(&self, v: DVector<f64>) -> DVector<f64> {
        match &self.constraint {
            Some(c) => c.transform.tr_mul(&v),
            None => v,
        }
    }

    /// `γ' K γ`.
    pub fn penalty_quad(&self, gamma: &DVector<f64>) -> f64 {
        crate::linalg::quad(&self.penalty, gamma)
    }
}

/// Impose a sum-to-zero constraint on the fitted effect over the block's
/// rows: `1' Z β = 0`. The block loses one dimension; existing coefficients
/// are mapped to the constrained space by least squares on the fitted values,
/// so any component that is constant over the rows is projected out.
pub fn apply_sum_to_zero(block: EffectBlock) -> EffectBlock {
    if block.constraint.is_some() || block.original_dim() < 2 {
        return block;
    }
    let c = block.design.column_sums();
    let stz = SumToZero::new(c);
    let t = &stz.transform;
    let penalty = t.tr_mul(&(&block.penalty * t));
    let rank = numerical_rank(&penalty);

    let beta = block.gamma.clone();
    let gamma = if beta.iter().all(|&b| b == 0.0) {
        DVector::zeros(t.ncols())
    } else {
        let zt = block.design.transformed(t).to_dense();
        let target = block.design.mul(&beta);
        let svd = zt.svd(true, true);
        svd.solve(&target, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(t.ncols()))
    };

    EffectBlock {
        label: block.label,
        design: block.design,
        penalty,
        rank,
        constraint: Some(stz),
        gamma,
        sigma2: block.sigma2,
    }
}
