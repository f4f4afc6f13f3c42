//! Dense row-major matrices and the handful of kernels the estimator needs:
//! products, column norms, Householder QR and a cyclic Jacobi eigensolver.

use std::fmt;

use crate::error::{HpcaError, Result};

/// Dense real matrix stored row-major.
///
/// Every constructor rejects non-finite entries, so any `Matrix` in hand is
/// finite.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(HpcaError::NonFinite { index }),
        None => Ok(()),
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(HpcaError::Parameter(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(HpcaError::len_mismatch("Matrix::new", rows * cols, data.len()));
        }
        check_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(HpcaError::Shape {
                    op: "Matrix::from_rows",
                    lhs: format!("row 0 has {ncols} entries"),
                    rhs: format!("row {i} has {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), ncols, data)
    }

    /// Builds a matrix whose j-th column is `columns[j]`.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = vec![0.0; nrows * ncols];
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != nrows {
                return Err(HpcaError::Shape {
                    op: "Matrix::from_columns",
                    lhs: format!("column 0 has {nrows} entries"),
                    rhs: format!("column {j} has {}", c.len()),
                });
            }
            for (i, &v) in c.iter().enumerate() {
                data[i * ncols + j] = v;
            }
        }
        Matrix::new(nrows, ncols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// # Panics
    /// If `value` is not finite.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(value.is_finite(), "non-finite matrix entry");
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out[j * self.rows + i] = v;
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &Matrix, factor: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(HpcaError::shape("add_scaled", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    /// Keeps the leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Result<Matrix> {
        if k == 0 || k > self.cols {
            return Err(HpcaError::Parameter(format!(
                "cannot take {k} leading columns of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * k);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[..k]);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: k,
            data,
        })
    }

    /// Reorders columns so that output column `j` is input column `order[j]`.
    pub(crate) fn select_columns(&self, order: &[usize]) -> Matrix {
        let k = order.len();
        let mut data = Vec::with_capacity(self.rows * k);
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(order.iter().map(|&j| r[j]));
        }
        Matrix {
            rows: self.rows,
            cols: k,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Flips column signs so the first entry of each column that is not
    /// negligible (relative to the column's largest magnitude) is positive.
    pub fn normalize_column_signs(&mut self) {
        for j in 0..self.cols {
            let max = (0..self.rows).map(|i| self.get(i, j).abs()).fold(0.0, f64::max);
            let lead = (0..self.rows)
                .map(|i| self.get(i, j))
                .find(|v| v.abs() > 1e-12 * max);
            if matches!(lead, Some(v) if v < 0.0) {
                for i in 0..self.rows {
                    self.data[i * self.cols + j] = -self.data[i * self.cols + j];
                }
            }
        }
    }
}

/// `a · b`
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(HpcaError::shape("matmul", a.shape(), b.shape()));
    }
    let n = b.cols;
    let mut out = vec![0.0; a.rows * n];
    for (i, out_row) in out.chunks_exact_mut(n).enumerate() {
        for (t, &a_it) in a.row(i).iter().enumerate() {
            if a_it == 0.0 {
                continue;
            }
            for (o, &b_tj) in out_row.iter_mut().zip(b.row(t)) {
                *o += a_it * b_tj;
            }
        }
    }
    Ok(Matrix {
        rows: a.rows,
        cols: n,
        data: out,
    })
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(HpcaError::shape("matmul_tn", a.shape(), b.shape()));
    }
    let n = b.cols;
    let mut out = vec![0.0; a.cols * n];
    for t in 0..a.rows {
        let b_row = b.row(t);
        for (i, &a_ti) in a.row(t).iter().enumerate() {
            if a_ti == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &b_tj) in out_row.iter_mut().zip(b_row) {
                *o += a_ti * b_tj;
            }
        }
    }
    Ok(Matrix {
        rows: a.cols,
        cols: n,
        data: out,
    })
}

/// `scale · X (Xᵀ Q)`, never forming the d×d matrix `X Xᵀ`.
pub fn gram_apply(x_block: &Matrix, q: &Matrix, scale: f64) -> Result<Matrix> {
    if x_block.rows != q.rows {
        return Err(HpcaError::shape("gram_apply", x_block.shape(), q.shape()));
    }
    let xt_q = matmul_tn(x_block, q)?;
    let mut out = matmul(x_block, &xt_q)?;
    if scale != 1.0 {
        out.data.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

pub fn column_norms(a: &Matrix) -> Vec<f64> {
    let mut sq = vec![0.0; a.cols];
    for i in 0..a.rows {
        for (s, v) in sq.iter_mut().zip(a.row(i)) {
            *s += v * v;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Thin QR factors: `q` is m×n with orthonormal columns, `r` is n×n upper
/// triangular with a non-negative diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct QrFactors {
    pub q: Matrix,
    pub r: Matrix,
}

/// Relative threshold on `|r_jj|` below which a column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Householder thin QR.
///
/// Works on a column-major copy so reflector application runs over
/// contiguous memory.
pub fn qr_thin(a: &Matrix) -> Result<QrFactors> {
    let (m, n) = a.shape();
    if m < n {
        return Err(HpcaError::Shape {
            op: "qr_thin",
            lhs: format!("{m}x{n}"),
            rhs: "rows >= cols required".into(),
        });
    }
    let max_norm = column_norms(a).into_iter().fold(0.0, f64::max);
    let threshold = RANK_TOLERANCE * max_norm;

    let mut w = a.transpose().data; // column j lives at w[j*m..(j+1)*m]
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    let mut r = Matrix::zeros(n, n);

    for j in 0..n {
        let (done, rest) = w.split_at_mut((j + 1) * m);
        let x = &mut done[j * m + j..];
        let alpha = x[0];
        let sigma: f64 = x[1..].iter().map(|v| v * v).sum();
        let norm = (alpha * alpha + sigma).sqrt();
        if norm <= threshold || norm == 0.0 {
            return Err(HpcaError::DegenerateBasis { column: j });
        }
        if sigma == 0.0 {
            // already zero below the diagonal; no reflection needed
            reflectors.push((Vec::new(), 0.0));
            continue;
        }
        let r_jj = if alpha >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] = alpha - r_jj;
        let tau = 2.0 / (v[0] * v[0] + sigma);
        x[0] = r_jj;
        x[1..].iter_mut().for_each(|e| *e = 0.0);

        for col in rest.chunks_exact_mut(m) {
            apply_reflector(&v, tau, &mut col[j..]);
        }
        reflectors.push((v, tau));
    }

    for j in 0..n {
        for i in 0..=j {
            r.data[i * n + j] = w[j * m + i];
        }
    }

    // Q = H_0 H_1 ... H_{n-1} [I_n; 0]; H_j leaves columns < j untouched.
    let mut qw = vec![0.0; m * n];
    for j in 0..n {
        qw[j * m + j] = 1.0;
    }
    for (j, (v, tau)) in reflectors.iter().enumerate().rev() {
        if *tau == 0.0 {
            continue;
        }
        for col in qw[j * m..].chunks_exact_mut(m) {
            apply_reflector(v, *tau, &mut col[j..]);
        }
    }

    let mut q = Matrix {
        rows: n,
        cols: m,
        data: qw,
    }
    .transpose();

    for j in 0..n {
        if r.data[j * n + j] < 0.0 {
            for l in j..n {
                r.data[j * n + l] = -r.data[j * n + l];
            }
            for i in 0..m {
                q.data[i * n + j] = -q.data[i * n + j];
            }
        }
    }
    Ok(QrFactors { q, r })
}

#[inline]
fn apply_reflector(v: &[f64], tau: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let s = tau * dot;
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}

/// `max |qᵀq − I|`
pub fn orthonormality_error(q: &Matrix) -> f64 {
    let g = matmul_tn(q, q).expect("qᵀq is always conformable");
    let mut worst: f64 = 0.0;
    for i in 0..g.rows {
        for j in 0..g.cols {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// Eigenvalues in descending order and matching sign-normalized
/// eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(c: &Matrix) -> Result<SymEig> {
    if !c.is_square() {
        return Err(HpcaError::Shape {
            op: "sym_eig",
            lhs: format!("{}x{}", c.rows, c.cols),
            rhs: "square matrix required".into(),
        });
    }
    let n = c.rows;
    let scale = c.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut max_diff: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            max_diff = max_diff.max((c.get(i, j) - c.get(j, i)).abs());
        }
    }
    if max_diff > SYMMETRY_TOLERANCE * scale {
        return Err(HpcaError::Asymmetric { max_diff });
    }

    let mut a = c.clone();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (a.data[i * n + j] + a.data[j * n + i]);
            a.data[i * n + j] = s;
            a.data[j * n + i] = s;
        }
    }
    // Rows of `vt` are the eigenvectors, so rotations touch contiguous rows.
    let mut vt = Matrix::identity(n);

    let total = a.frobenius_norm();
    let mut prev_off = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.data[i * n + j].powi(2))
            .sum::<f64>()
            .sqrt();
        // Stop at round-off level, or once rotations stop making progress.
        if off <= f64::EPSILON * 0.5 * total || off >= prev_off {
            break;
        }
        prev_off = off;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.data[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a.data[p * n + p];
                let aqq = a.data[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;

                for k in 0..n {
                    let akp = a.data[k * n + p];
                    let akq = a.data[k * n + q];
                    a.data[k * n + p] = cs * akp - sn * akq;
                    a.data[k * n + q] = sn * akp + cs * akq;
                }
                rotate_rows(&mut a.data, n, p, q, cs, sn);
                a.data[p * n + q] = 0.0;
                a.data[q * n + p] = 0.0;
                rotate_rows(&mut vt.data, n, p, q, cs, sn);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.data[j * n + j].total_cmp(&a.data[i * n + i]));
    let eigenvalues = order.iter().map(|&i| a.data[i * n + i]).collect();
    let mut eigenvectors = vt.transpose().select_columns(&order);
    eigenvectors.normalize_column_signs();
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

#[inline]
fn rotate_rows(data: &mut [f64], n: usize, p: usize, q: usize, cs: f64, sn: f64) {
    let (head, tail) = data.split_at_mut(q * n);
    let row_p = &mut head[p * n..(p + 1) * n];
    let row_q = &mut tail[..n];
    for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = cs * xp - sn * yq;
        *y = sn * xp + cs * yq;
    }
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns.
///
/// Computed from `‖(I − AAᵀ)B‖₂` rather than `arccos σ_min(AᵀB)`, which
/// keeps precision for nearly coincident subspaces.
pub fn largest_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows != b.rows {
        return Err(HpcaError::shape("largest_principal_angle", a.shape(), b.shape()));
    }
    let proj = matmul(a, &matmul_tn(a, b)?)?;
    let mut resid = b.clone();
    resid.add_scaled(&proj, -1.0)?;
    let gram = matmul_tn(&resid, &resid)?;
    let top = sym_eig(&gram)?.eigenvalues[0].max(0.0);
    Ok(top.sqrt().min(1.0).asin())
}
