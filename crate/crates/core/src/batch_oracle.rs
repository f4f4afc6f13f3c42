//! Classical PCA on a fully materialized window set. No mean is removed:
//! the decomposition is of the correlation matrix `(1/N) X Xᵀ`.

use crate::codec::{BasisModel, SignalWindow};
use crate::error::{HpcaError, Result};
use crate::linalg::{sym_eig, Matrix};

/// Stacks windows as the columns of a d×N matrix.
pub fn windows_to_matrix(windows: &[SignalWindow]) -> Result<Matrix> {
    if windows.is_empty() {
        return Err(HpcaError::Parameter("empty window set".into()));
    }
    let cols: Vec<&[f64]> = windows.iter().map(SignalWindow::samples).collect();
    Matrix::from_columns(&cols)
}

/// `(1/N) X Xᵀ` for a d×N window matrix.
pub fn correlation_matrix(windows: &Matrix) -> Result<Matrix> {
    let (d, n) = windows.shape();
    let inv_n = 1.0 / n as f64;
    let mut c = Matrix::zeros(d, d);
    for i in 0..d {
        let ri = windows.row(i);
        for j in i..d {
            let v = ri.iter().zip(windows.row(j)).map(|(a, b)| a * b).sum::<f64>() * inv_n;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    Ok(c)
}

/// Top-k eigenvectors of the correlation matrix, sign-normalized, with
/// their eigenvalues in descending order.
pub fn batch_pca(windows: &Matrix, k: usize) -> Result<BasisModel> {
    let d = windows.rows();
    if k < 1 || k > d {
        return Err(HpcaError::Parameter(format!("k must satisfy 1 <= k <= d (k={k}, d={d})")));
    }
    let eig = sym_eig(&correlation_matrix(windows)?)?;
    let q = eig.eigenvectors.leading_columns(k)?;
    // PSD by construction; clip round-off below zero
    let lambdas = eig.eigenvalues[..k].iter().map(|l| l.max(0.0)).collect();
    BasisModel::new(q, lambdas, 1, "batch")
}

pub fn batch_pca_windows(windows: &[SignalWindow], k: usize) -> Result<BasisModel> {
    batch_pca(&windows_to_matrix(windows)?, k)
}
