//! History PCA: a streaming estimator of the top-k eigenvectors of the
//! window correlation matrix.
//!
//! Each step blends a rank-k summary of every block seen so far,
//! `Q Λ Qᵀ`, weighted `(τ−1)/τ`, with the power-method term of the newest
//! block weighted `1/τ`, so every block contributes equally to the final
//! estimate. The block update is repeated `m` times, re-orthonormalizing
//! through QR after each pass.

use crate::codec::{BasisModel, SignalWindow};
use crate::error::{HpcaError, Result};
use crate::gaussian::GaussianSource;
use crate::linalg::{column_norms, gram_apply, matmul, matmul_tn, qr_thin, Matrix};

/// Estimator parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HpcaConfig {
    /// Window length in samples.
    pub d: usize,
    /// Number of eigenvectors tracked.
    pub k: usize,
    /// Windows per block.
    pub block_size: usize,
    /// Inner-loop repetitions per block.
    pub inner_loops: usize,
    pub seed: u64,
}

impl HpcaConfig {
    pub fn new(d: usize, k: usize, block_size: usize, inner_loops: usize, seed: u64) -> Self {
        HpcaConfig {
            d,
            k,
            block_size,
            inner_loops,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > self.d {
            return Err(HpcaError::Parameter(format!(
                "k must satisfy 1 <= k <= d (k={}, d={})",
                self.k, self.d
            )));
        }
        if self.block_size < 1 {
            return Err(HpcaError::Parameter("block size B must be >= 1".into()));
        }
        if self.inner_loops < 1 {
            return Err(HpcaError::Parameter("inner loop count m must be >= 1".into()));
        }
        Ok(())
    }

    pub fn compression_ratio(&self) -> f64 {
        self.d as f64 / self.k as f64
    }
}

/// Timed regions of a step, used by the timing harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Span {
    Matmul,
    Qr,
}

/// Hook wrapped around the matrix products and QR calls of a step.
pub trait StepProbe {
    fn record<T>(&mut self, span: Span, f: impl FnOnce() -> T) -> T;
}

/// Probe that only runs the closure.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoProbe;

impl StepProbe for NoProbe {
    #[inline]
    fn record<T>(&mut self, _span: Span, f: impl FnOnce() -> T) -> T {
        f()
    }
}

#[derive(Clone, Debug)]
pub struct HpcaState {
    config: HpcaConfig,
    q: Matrix,
    lambdas: Vec<f64>,
    tau: u64,
    pending: Vec<SignalWindow>,
}

impl HpcaState {
    /// Orthonormalizes a seeded d×k standard Gaussian draw.
    pub fn new(config: HpcaConfig) -> Result<Self> {
        config.validate()?;
        let (d, k) = (config.d, config.k);
        let mut gauss = GaussianSource::new(config.seed);
        let draw = Matrix::new(d, k, gauss.fill(d * k))?;
        let mut q = qr_thin(&draw)?.q;
        q.normalize_column_signs();
        Ok(HpcaState {
            config,
            q,
            lambdas: vec![0.0; k],
            tau: 0,
            pending: Vec::with_capacity(config.block_size),
        })
    }

    pub fn config(&self) -> &HpcaConfig {
        &self.config
    }

    pub fn basis(&self) -> &Matrix {
        &self.q
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn check_block(&self, x: &Matrix) -> Result<()> {
        let expected = (self.config.d, self.config.block_size);
        if x.shape() != expected {
            return Err(HpcaError::shape("hpca block", expected, x.shape()));
        }
        Ok(())
    }

    /// Absorbs the first d×B block.
    pub fn first_block(&mut self, x: &Matrix) -> Result<()> {
        self.first_block_probed(x, &mut NoProbe)
    }

    pub fn first_block_probed<P: StepProbe>(&mut self, x: &Matrix, probe: &mut P) -> Result<()> {
        if self.tau != 0 {
            return Err(HpcaError::Protocol("first block already absorbed"));
        }
        self.check_block(x)?;
        let data_weight = 1.0 / self.config.block_size as f64;
        let mut q = self.q.clone();
        let mut s = q.clone();
        for _ in 0..self.config.inner_loops {
            let data = probe.record(Span::Matmul, || gram_apply(x, &q, data_weight))?;
            s = q;
            s.add_scaled(&data, 1.0)?;
            q = probe.record(Span::Qr, || qr_thin(&s))?.q;
        }
        self.lambdas = column_norms(&s);
        self.q = q;
        self.tau = 1;
        Ok(())
    }

    /// Absorbs a subsequent d×B block.
    pub fn step(&mut self, x: &Matrix) -> Result<()> {
        self.step_probed(x, &mut NoProbe)
    }

    pub fn step_probed<P: StepProbe>(&mut self, x: &Matrix, probe: &mut P) -> Result<()> {
        if self.tau == 0 {
            return Err(HpcaError::Protocol("call first_block before step"));
        }
        self.check_block(x)?;
        let tau = (self.tau + 1) as f64;
        let history_weight = (tau - 1.0) / tau;
        let data_weight = 1.0 / (tau * self.config.block_size as f64);
        let row_scale: Vec<f64> = self.lambdas.iter().map(|l| l * history_weight).collect();

        // Q_{τ−1} and Λ_{τ−1} stay fixed across the inner loop; only the
        // current estimate is refreshed.
        let q_prev = &self.q;
        let mut q = q_prev.clone();
        let mut s = q.clone();
        for _ in 0..self.config.inner_loops {
            // history term Q_{τ−1} (Λ_{τ−1} (Q_{τ−1}ᵀ Q_τ)), O(dk²)
            let mut overlap = probe.record(Span::Matmul, || matmul_tn(q_prev, &q))?;
            let k = overlap.cols();
            for (j, &w) in row_scale.iter().enumerate() {
                for c in 0..k {
                    overlap.set(j, c, overlap.get(j, c) * w);
                }
            }
            s = probe.record(Span::Matmul, || matmul(q_prev, &overlap))?;
            let data = probe.record(Span::Matmul, || gram_apply(x, &q, data_weight))?;
            s.add_scaled(&data, 1.0)?;
            q = probe.record(Span::Qr, || qr_thin(&s))?.q;
        }
        self.lambdas = column_norms(&s);
        self.q = q;
        self.tau += 1;
        Ok(())
    }

    /// Dispatches a full block to [`first_block`](Self::first_block) or
    /// [`step`](Self::step).
    pub fn absorb_block(&mut self, x: &Matrix) -> Result<()> {
        if self.tau == 0 {
            self.first_block(x)
        } else {
            self.step(x)
        }
    }

    /// Buffers one window; a full buffer is absorbed as a block.
    pub fn push_window(&mut self, w: SignalWindow) -> Result<()> {
        if w.len() != self.config.d {
            return Err(HpcaError::len_mismatch("push_window", self.config.d, w.len()));
        }
        self.pending.push(w);
        if self.pending.len() == self.config.block_size {
            let cols: Vec<&[f64]> = self.pending.iter().map(SignalWindow::samples).collect();
            let block = Matrix::from_columns(&cols)?;
            let result = self.absorb_block(&block);
            self.pending.clear();
            result?;
        }
        Ok(())
    }

    /// Freezes the current estimate, discarding any partial block.
    ///
    /// Columns are ordered by descending eigenvalue estimate and
    /// sign-normalized.
    pub fn finalize(&self) -> Result<BasisModel> {
        if self.tau == 0 {
            return Err(HpcaError::Protocol("no data absorbed"));
        }
        let mut order: Vec<usize> = (0..self.config.k).collect();
        order.sort_by(|&a, &b| self.lambdas[b].total_cmp(&self.lambdas[a]));
        let mut q = self.q.select_columns(&order);
        q.normalize_column_signs();
        let lambdas = order.iter().map(|&j| self.lambdas[j]).collect();
        BasisModel::new(q, lambdas, self.tau, "hpca")
    }
}

/// Streams every window through a fresh estimator and freezes the result.
pub fn train_hpca(config: HpcaConfig, windows: &[SignalWindow]) -> Result<BasisModel> {
    if windows.len() < config.block_size {
        return Err(HpcaError::Parameter(format!(
            "{} windows do not fill one block of B={}",
            windows.len(),
            config.block_size
        )));
    }
    let mut state = HpcaState::new(config)?;
    for w in windows {
        state.push_window(w.clone())?;
    }
    state.finalize()
}
