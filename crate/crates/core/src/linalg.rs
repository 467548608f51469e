//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Diagonal jitter added once when a precision matrix fails to factor.
pub const CHOLESKY_JITTER: f64 = 1e-10;

/// Relative singular-value threshold used for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Numerical rank: number of singular values above `RANK_TOLERANCE * s_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let s_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if s_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * s_max).count()
}

/// A factored symmetric positive-definite precision matrix.
///
/// Diagonal precisions (random effects with indicator designs) skip the dense
/// factorization entirely.
#[derive(Debug, Clone)]
pub enum Precision {
    Diagonal(DVector<f64>),
    Dense(Cholesky<f64, Dyn>),
}

impl Precision {
    /// Factor `m`, retrying once with `CHOLESKY_JITTER` on the diagonal.
    pub fn factor(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() > 1 && is_diagonal(&m) {
            return Self::from_diagonal(m.diagonal());
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("precision matrix has non-finite entries".into()));
        }
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Ok(Precision::Dense(ch));
        }
        let n = m.nrows();
        let jittered = m + DMatrix::<f64>::identity(n, n) * CHOLESKY_JITTER;
        Cholesky::new(jittered).map(Precision::Dense).ok_or_else(|| {
            Error::Numeric("precision matrix is singular even after jitter".into())
        })
    }

    /// Diagonal precision, with the same jitter retry as [`Precision::factor`].
    pub fn from_diagonal(d: DVector<f64>) -> Result<Self> {
        if d.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Ok(Precision::Diagonal(d));
        }
        let jittered = d.map(|x| x + CHOLESKY_JITTER);
        if jittered.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Ok(Precision::Diagonal(jittered));
        }
        Err(Error::Numeric("precision matrix is not positive definite".into()))
    }

    pub fn dim(&self) -> usize {
        match self {
            Precision::Diagonal(d) => d.len(),
            Precision::Dense(ch) => ch.l_dirty().nrows(),
        }
    }

    /// Solve `P x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Precision::Diagonal(d) => b.component_div(d),
            Precision::Dense(ch) => ch.solve(b),
        }
    }

    /// `log det P`.
    pub fn log_det(&self) -> f64 {
        match self {
            Precision::Diagonal(d) => d.iter().map(|x| x.ln()).sum(),
            Precision::Dense(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>(),
        }
    }

    /// `x' P x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        match self {
            Precision::Diagonal(d) => x.iter().zip(d.iter()).map(|(a, p)| a * a * p).sum(),
            Precision::Dense(ch) => {
                // x'LL'x = |L'x|^2
                let l = ch.l();
                (l.transpose() * x).norm_squared()
            }
        }
    }

    /// Map a standard-normal vector `z` to a draw from `N(0, P^{-1})`.
    pub fn whiten_inverse(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Precision::Diagonal(d) => z.component_div(&d.map(f64::sqrt)),
            Precision::Dense(ch) => ch
                .l_dirty()
                .tr_solve_lower_triangular(z)
                .expect("cholesky factor has a positive diagonal"),
        }
    }

    /// Log density of `N(mean, P^{-1})` at `x`, dropping the `2π` constant.
    pub fn log_density(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let d = x - mean;
        0.5 * self.log_det() - 0.5 * self.quad_form(&d)
    }
}

pub(crate) fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Quadratic form `x' K x`.
pub fn quad(k: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    if k.nrows() == 0 {
        return 0.0;
    }
    x.dot(&(k * x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_of_difference_like_matrix() {
        let k = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(numerical_rank(&k), 2);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(3, 3)), 0);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(4, 4)), 4);
    }

    #[test]
    fn dense_and_diagonal_agree() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 5.0]));
        let diag = Precision::factor(m.clone()).unwrap();
        assert!(matches!(diag, Precision::Diagonal(_)));
        let dense = Precision::Dense(Cholesky::new(m).unwrap());
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!((diag.solve(&b) - dense.solve(&b)).norm() < 1e-14);
        assert!((diag.log_det() - dense.log_det()).abs() < 1e-14);
        assert!((diag.quad_form(&b) - dense.quad_form(&b)).abs() < 1e-12);
        assert!((diag.whiten_inverse(&b) - dense.whiten_inverse(&b)).norm() < 1e-14);
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix_once() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(Precision::factor(m).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Precision::factor(bad).is_err());
    }

    #[test]
    fn whitened_draws_have_inverse_precision_covariance() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let cov = p.clone().try_inverse().unwrap();
        let prec = Precision::factor(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = prec.whiten_inverse(&standard_normal_vector(2, &mut rng));
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).abs().max() < 0.01);
    }
}
