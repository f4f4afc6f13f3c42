//! Window compression against a frozen basis, reconstruction, and the
//! quality metrics used to compare bases.

use crate::error::{HpcaError, Result};
use crate::linalg::{orthonormality_error, Matrix};

/// Tolerance on `max |qᵀq − I|` accepted when freezing or loading a basis.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

/// A frozen top-k basis with its eigenvalue estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisModel {
    q: Matrix,
    lambdas: Vec<f64>,
    trained_tau: u64,
    source: String,
}

impl BasisModel {
    /// Validates orthonormality of `q`, that there is one lambda per column
    /// and that the lambdas are non-negative and non-increasing.
    pub fn new(q: Matrix, lambdas: Vec<f64>, trained_tau: u64, source: impl Into<String>) -> Result<Self> {
        if q.cols() > q.rows() {
            return Err(HpcaError::Parameter(format!(
                "basis has k={} columns but only d={} rows",
                q.cols(),
                q.rows()
            )));
        }
        if lambdas.len() != q.cols() {
            return Err(HpcaError::len_mismatch("BasisModel lambdas", q.cols(), lambdas.len()));
        }
        if let Some(bad) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(HpcaError::Parameter(format!("eigenvalue estimate {bad} is not a finite non-negative value")));
        }
        if lambdas.windows(2).any(|w| w[1] > w[0]) {
            return Err(HpcaError::Parameter("eigenvalue estimates must be sorted descending".into()));
        }
        let err = orthonormality_error(&q);
        if err > ORTHONORMALITY_TOLERANCE {
            return Err(HpcaError::Parameter(format!("basis columns are not orthonormal (max deviation {err:e})")));
        }
        Ok(BasisModel {
            q,
            lambdas,
            trained_tau,
            source: source.into(),
        })
    }

    pub fn d(&self) -> usize {
        self.q.rows()
    }

    pub fn k(&self) -> usize {
        self.q.cols()
    }

    /// d / k
    pub fn compression_ratio(&self) -> f64 {
        self.d() as f64 / self.k() as f64
    }

    pub fn basis(&self) -> &Matrix {
        &self.q
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn trained_tau(&self) -> u64 {
        self.trained_tau
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// The same model restricted to its leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<BasisModel> {
        Ok(BasisModel {
            q: self.q.leading_columns(k)?,
            lambdas: self.lambdas[..k].to_vec(),
            trained_tau: self.trained_tau,
            source: self.source.clone(),
        })
    }
}

/// One window of `d` consecutive samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalWindow(Vec<f64>);

impl SignalWindow {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(HpcaError::NonFinite { index });
        }
        Ok(SignalWindow(samples))
    }

    pub fn samples(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.0
    }
}

/// The k projection coefficients of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedWindow(Vec<f64>);

impl CompressedWindow {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(index) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(HpcaError::NonFinite { index });
        }
        Ok(CompressedWindow(coeffs))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `y = qᵀx`
pub fn compress(model: &BasisModel, x: &SignalWindow) -> Result<CompressedWindow> {
    if x.len() != model.d() {
        return Err(HpcaError::len_mismatch("compress", model.d(), x.len()));
    }
    let q = &model.q;
    let mut y = vec![0.0; model.k()];
    for (i, &xi) in x.samples().iter().enumerate() {
        for (yj, qij) in y.iter_mut().zip(q.row(i)) {
            *yj += qij * xi;
        }
    }
    Ok(CompressedWindow(y))
}

/// `x̂ = q·y`
pub fn reconstruct(model: &BasisModel, y: &CompressedWindow) -> Result<SignalWindow> {
    if y.len() != model.k() {
        return Err(HpcaError::len_mismatch("reconstruct", model.k(), y.len()));
    }
    let q = &model.q;
    let samples = (0..model.d())
        .map(|i| q.row(i).iter().zip(y.coeffs()).map(|(a, b)| a * b).sum())
        .collect();
    Ok(SignalWindow(samples))
}

/// Reconstruction quality of a single window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rsnr {
    Db(f64),
    /// The reconstruction error is exactly zero.
    Lossless,
}

impl Rsnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Rsnr::Db(v) => Some(v),
            Rsnr::Lossless => None,
        }
    }
}

/// `10·log10(‖x‖² / ‖x − x̂‖²)`
pub fn rsnr_db(x: &SignalWindow, x_hat: &SignalWindow) -> Result<Rsnr> {
    if x.len() != x_hat.len() {
        return Err(HpcaError::len_mismatch("rsnr_db", x.len(), x_hat.len()));
    }
    let signal: f64 = x.samples().iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(HpcaError::UndefinedMetric("RSNR of an all-zero window"));
    }
    let error: f64 = x
        .samples()
        .iter()
        .zip(x_hat.samples())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    if error == 0.0 {
        return Ok(Rsnr::Lossless);
    }
    Ok(Rsnr::Db(10.0 * (signal / error).log10()))
}

/// Windows reconstructed to within floating-point roundoff (relative error
/// 1e-12 or less) count as lossless in [`mean_rsnr_db`].
pub const LOSSLESS_DB: f64 = 240.0;

/// Mean RSNR over a window set. Lossless windows are left out of the mean
/// and counted on their own.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsnrSummary {
    /// `None` when every window reconstructs losslessly.
    pub mean_db: Option<f64>,
    pub evaluated: usize,
    pub lossless: usize,
}

impl RsnrSummary {
    pub fn total(&self) -> usize {
        self.evaluated + self.lossless
    }

    /// Mean in dB, with an all-lossless set mapped to `+inf`.
    pub fn mean_or_inf(&self) -> f64 {
        self.mean_db.unwrap_or(f64::INFINITY)
    }
}

pub fn mean_rsnr_db(model: &BasisModel, windows: &[SignalWindow]) -> Result<RsnrSummary> {
    if windows.is_empty() {
        return Err(HpcaError::Parameter("mean RSNR needs at least one window".into()));
    }
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut lossless = 0;
    for w in windows {
        let x_hat = reconstruct(model, &compress(model, w)?)?;
        match rsnr_db(w, &x_hat)? {
            Rsnr::Db(v) if v < LOSSLESS_DB => {
                sum += v;
                evaluated += 1;
            }
            _ => lossless += 1,
        }
    }
    Ok(RsnrSummary {
        mean_db: (evaluated > 0).then(|| sum / evaluated as f64),
        evaluated,
        lossless,
    })
}

/// Sum of the trailing `d − k` eigenvalues: the expected squared
/// reconstruction error of a rank-k projection.
pub fn expected_reconstruction_error(lambdas: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > lambdas.len() {
        return Err(HpcaError::Parameter(format!(
            "rank k={k} outside 1..={}",
            lambdas.len()
        )));
    }
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(HpcaError::Parameter("eigenvalues must be sorted descending".into()));
    }
    Ok(lambdas[k..].iter().sum())
}

/// `x − x̂` for one window.
pub fn residual(model: &BasisModel, x: &SignalWindow) -> Result<Vec<f64>> {
    let x_hat = reconstruct(model, &compress(model, x)?)?;
    Ok(x.samples().iter().zip(x_hat.samples()).map(|(a, b)| a - b).collect())
}

/// Pearson correlation between the per-sample reconstruction residuals of
/// two models over the same windows.
pub fn residual_correlation(a: &BasisModel, b: &BasisModel, windows: &[SignalWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(HpcaError::Parameter("residual correlation needs at least one window".into()));
    }
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    for w in windows {
        ra.extend(residual(a, w)?);
        rb.extend(residual(b, w)?);
    }
    pearson(&ra, &rb).ok_or(HpcaError::UndefinedMetric("correlation of a constant residual"))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianSource;
    use crate::linalg::qr_thin;

    fn random_model(d: usize, k: usize, seed: u64) -> BasisModel {
        let mut g = GaussianSource::new(seed);
        let q = qr_thin(&Matrix::new(d, k, g.fill(d * k)).unwrap()).unwrap().q;
        BasisModel::new(q, vec![1.0; k], 1, "test").unwrap()
    }

    fn window(v: &[f64]) -> SignalWindow {
        SignalWindow::new(v.to_vec()).unwrap()
    }

    fn coordinate_model(d: usize, k: usize) -> BasisModel {
        let q = Matrix::identity(d).leading_columns(k).unwrap();
        BasisModel::new(q, vec![0.0; k], 0, "test").unwrap()
    }

    #[test]
    fn model_validation() {
        let bad_q = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert!(BasisModel::new(bad_q, vec![1.0], 1, "x").is_err());
        let q = Matrix::identity(2);
        assert!(BasisModel::new(q.clone(), vec![1.0, 2.0], 1, "x").is_err());
        assert!(BasisModel::new(q.clone(), vec![1.0], 1, "x").is_err());
        assert!(BasisModel::new(q, vec![2.0, 1.0], 1, "x").is_ok());
    }

    #[test]
    fn coordinate_projection() {
        let m = coordinate_model(4, 2);
        let y = compress(&m, &window(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.coeffs(), &[1.0, 2.0]);
        let y = compress(&m, &window(&[0.0, 0.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.coeffs(), &[0.0, 0.0]);
        assert!(compress(&m, &window(&[1.0])).is_err());
        assert!(reconstruct(&m, &CompressedWindow::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn projection_contracts() {
        let m = random_model(12, 4, 1);
        let mut g = GaussianSource::new(2);
        let x = window(&g.fill(12));
        let y = compress(&m, &x).unwrap();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm(y.coeffs()) <= norm(x.samples()) + 1e-12);

        let x_hat = reconstruct(&m, &y).unwrap();
        let again = reconstruct(&m, &compress(&m, &x_hat).unwrap()).unwrap();
        for (a, b) in x_hat.samples().iter().zip(again.samples()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_zero_window() {
        let m = random_model(5, 2, 3);
        let x = reconstruct(&m, &CompressedWindow::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert!(x.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn complete_basis_is_lossless() {
        let m = random_model(6, 6, 4);
        let x = window(&GaussianSource::new(5).fill(6));
        let x_hat = reconstruct(&m, &compress(&m, &x).unwrap()).unwrap();
        let err: f64 = x.samples().iter().zip(x_hat.samples()).map(|(a, b)| (a - b).powi(2)).sum();
        let sig: f64 = x.samples().iter().map(|a| a * a).sum();
        assert!(err.sqrt() <= 1e-9 * sig.sqrt());
    }

    #[test]
    fn rsnr_cases() {
        let x = window(&[3.0, 4.0]);
        assert_eq!(rsnr_db(&x, &x).unwrap(), Rsnr::Lossless);
        assert_eq!(rsnr_db(&x, &window(&[0.0, 0.0])).unwrap(), Rsnr::Db(0.0));
        let v = rsnr_db(&x, &window(&[3.0, 0.0])).unwrap().db().unwrap();
        assert!((v - 10.0 * (25.0f64 / 16.0).log10()).abs() < 1e-12);
        assert!((v - 1.9382).abs() < 1e-4);
        assert!(matches!(
            rsnr_db(&window(&[0.0, 0.0]), &x),
            Err(HpcaError::UndefinedMetric(_))
        ));
        assert!(rsnr_db(&x, &window(&[1.0])).is_err());
    }

    #[test]
    fn mean_rsnr_cases() {
        let m = coordinate_model(3, 2);
        let inside = vec![window(&[1.0, 2.0, 0.0]), window(&[0.0, 5.0, 0.0])];
        let s = mean_rsnr_db(&m, &inside).unwrap();
        assert_eq!(s, RsnrSummary { mean_db: None, evaluated: 0, lossless: 2 });
        assert_eq!(s.mean_or_inf(), f64::INFINITY);

        let w = window(&[3.0, 0.0, 4.0]);
        let single = mean_rsnr_db(&m, std::slice::from_ref(&w)).unwrap();
        let direct = rsnr_db(&w, &reconstruct(&m, &compress(&m, &w).unwrap()).unwrap()).unwrap();
        assert_eq!(single.mean_db, direct.db());
        assert!(mean_rsnr_db(&m, &[]).is_err());
    }

    #[test]
    fn roundoff_only_windows_count_as_lossless() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = Matrix::from_rows(&[vec![s, s], vec![s, -s]]).unwrap();
        let m = BasisModel::new(q, vec![0.0, 0.0], 1, "test").unwrap();
        let ws = vec![window(&[0.3, 0.7]), window(&[1.1, -2.9])];
        let summary = mean_rsnr_db(&m, &ws).unwrap();
        assert_eq!((summary.evaluated, summary.lossless), (0, 2));
    }

    #[test]
    fn expected_error_cases() {
        assert_eq!(expected_reconstruction_error(&[5.0, 3.0, 2.0, 1.0], 2).unwrap(), 3.0);
        assert_eq!(expected_reconstruction_error(&[5.0, 3.0], 2).unwrap(), 0.0);
        assert!(expected_reconstruction_error(&[5.0, 3.0], 0).is_err());
        assert!(expected_reconstruction_error(&[5.0, 3.0], 3).is_err());
        assert!(expected_reconstruction_error(&[1.0, 3.0], 1).is_err());
    }

    #[test]
    fn nested_truncation_is_monotone() {
        let m = random_model(10, 6, 8);
        let mut g = GaussianSource::new(9);
        let ws: Vec<_> = (0..20).map(|_| window(&g.fill(10))).collect();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=6 {
            let v = mean_rsnr_db(&m.truncated(k).unwrap(), &ws).unwrap().mean_db.unwrap();
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn identical_models_have_unit_residual_correlation() {
        let m = random_model(8, 3, 10);
        let mut g = GaussianSource::new(11);
        let ws: Vec<_> = (0..5).map(|_| window(&g.fill(8))).collect();
        assert!((residual_correlation(&m, &m, &ws).unwrap() - 1.0).abs() < 1e-12);
    }
}
