//! Small dense least-squares helpers shared by the frontier and regression code.

use nalgebra::{DMatrix, DVector};

const COLLINEAR_TOL: f64 = 1e-9;

/// Names of columns that are (numerically) linear combinations of earlier columns.
///
/// Runs modified Gram-Schmidt left to right; a column whose residual norm falls
/// below `1e-9` of its original norm is reported and skipped.
pub fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        // second pass for orthogonality
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= COLLINEAR_TOL * norm {
            dependent.push(names.get(j).cloned().unwrap_or_else(|| format!("x{j}")));
        } else {
            basis.push(r / rn);
        }
    }
    dependent
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
}

/// Solves the normal equations through a Cholesky factorization of X'X.
///
/// Returns `None` when X'X is not positive definite.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<LeastSquares> {
    let xtx = x.transpose() * x;
    let chol = xtx.cholesky()?;
    let xty = x.transpose() * y;
    let beta = chol.solve(&xty);
    let xtx_inv = chol.inverse();
    let residuals = y - x * &beta;
    Some(LeastSquares {
        beta,
        xtx_inv,
        residuals,
    })
}

/// R² of an auxiliary regression, computed with an SVD so rank-deficient
/// regressor sets still yield the least-squares fit.
pub fn r_squared_svd(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss == 0.0 {
        return 0.0;
    }
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let beta = svd
        .solve(y, max_sv * 1e-12)
        .expect("U and V were computed");
    let resid = y - x * beta;
    1.0 - resid.norm_squared() / tss
}
