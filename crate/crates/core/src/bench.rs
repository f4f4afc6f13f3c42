//! Desk-scale studies: memory model, (B, m) quality sweeps against the
//! batch oracle, and per-step timing split into matrix products and QR.

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::batch_oracle::batch_pca_windows;
use crate::codec::{mean_rsnr_db, BasisModel, SignalWindow};
use crate::error::{HpcaError, Result};
use crate::estimator::{train_hpca, HpcaConfig, HpcaState, Span, StepProbe};
use crate::gaussian::GaussianSource;
use crate::io::{generate_synthetic, window_stream, Mode, SyntheticSpec};
use crate::linalg::Matrix;

/// Bytes held by the streaming estimator: `data_size·(3dk + dB + k²)`.
pub fn hpca_memory_bytes(d: u64, k: u64, block_size: u64, data_size: u64) -> u64 {
    data_size * (3 * d * k + d * block_size + k * k)
}

/// Bytes held by batch PCA: the stored window set plus the d×d eigenvector
/// matrix, `data_size·(N·d + d·d)`.
pub fn batch_memory_bytes(d: u64, n_windows: u64, data_size: u64) -> u64 {
    data_size * (n_windows * d + d * d)
}

/// Compute time per step over the acquisition time of one block.
/// Below 1 the estimator keeps up with the sensor.
pub fn real_time_fraction(step_time_s: f64, d: usize, block_size: usize, sample_rate_hz: f64) -> f64 {
    step_time_s / (d as f64 * block_size as f64 / sample_rate_hz)
}

pub fn is_real_time_feasible(fraction: f64) -> bool {
    fraction < 1.0
}

/// Disjoint training and evaluation windows.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<SignalWindow>,
    pub test: Vec<SignalWindow>,
}

impl Corpus {
    pub fn from_traces(train: &[f64], test: &[f64], d: usize) -> Result<Self> {
        Ok(Corpus {
            train: window_stream(train, d)?,
            test: window_stream(test, d)?,
        })
    }
}

/// Twelve lightly damped structural modes plus sensor noise, in raw
/// acquisition counts: the synthetic stand-in for a tendon accelerometer
/// trace at 100 Hz.
///
/// Frequencies are chosen so that no two modes advance by the same phase
/// over a 500-sample window; otherwise their window-level contributions
/// would be coherent and collapse onto a shared subspace.
pub fn vibration_spec(seed: u64, duration_s: f64) -> SyntheticSpec {
    // (frequency Hz, amplitude in counts)
    const MODES: [(f64, f64); 12] = [
        (1.390395, 100.0),
        (2.938304, 75.0),
        (4.455600, 56.25),
        (6.200504, 42.1875),
        (8.089129, 31.6406),
        (10.555543, 23.7305),
        (13.241790, 17.7979),
        (16.777900, 13.3484),
        (20.369896, 10.0113),
        (25.123794, 7.5085),
        (31.505608, 5.6314),
        (38.941348, 4.2235),
    ];
    SyntheticSpec {
        seed,
        duration_s,
        sample_rate_hz: 100.0,
        modes: MODES
            .iter()
            .map(|&(frequency_hz, amplitude)| Mode {
                frequency_hz,
                amplitude,
                damping: 1e-6,
            })
            .collect(),
        noise_std: 10.0,
    }
}

/// Train and test traces generated from independent seeds, as if recorded
/// on two different days.
pub fn synthetic_corpus(seed: u64, d: usize, train_windows: usize, test_windows: usize) -> Result<Corpus> {
    let fs = 100.0;
    let train = generate_synthetic(&vibration_spec(2 * seed, (train_windows * d) as f64 / fs))?;
    let test = generate_synthetic(&vibration_spec(2 * seed + 1, (test_windows * d) as f64 / fs))?;
    Corpus::from_traces(&train, &test, d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "B")]
    pub block_size: usize,
    pub m: usize,
    pub mean_rsnr_db_hpca: f64,
    pub mean_rsnr_db_batch: f64,
    /// batch − hpca
    pub gap_db: f64,
    /// Memory model at 4-byte samples.
    pub memory_bytes: u64,
    /// Memory model at the 8-byte reals used in computation.
    pub memory_bytes_f64: u64,
    /// HPCA training time for this cell.
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn get(&self, block_size: usize, m: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.block_size == block_size && r.m == m)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| HpcaError::io("<csv>", e))?;
        Ok(())
    }

    /// Gnuplot data blocks: one indexed block per B, columns `m` and mean
    /// HPCA RSNR (dB), with the batch reference as a third column.
    pub fn write_gnuplot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut blocks: Vec<usize> = self.rows.iter().map(|r| r.block_size).collect();
        blocks.sort_unstable();
        blocks.dedup();
        for (i, b) in blocks.iter().enumerate() {
            if i > 0 {
                writeln!(out, "\n")?;
            }
            writeln!(out, "# B={b}")?;
            writeln!(out, "# m mean_rsnr_db_hpca mean_rsnr_db_batch")?;
            let mut rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.block_size == *b).collect();
            rows.sort_by_key(|r| r.m);
            for r in rows {
                writeln!(out, "{} {} {}", r.m, r.mean_rsnr_db_hpca, r.mean_rsnr_db_batch)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub seed: u64,
    /// Evaluate (B, m) cells on the rayon pool.
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { seed: 0, parallel: true }
    }
}

/// Trains one HPCA model per (B, m) cell on `corpus.train` and compares
/// its mean test RSNR with a single batch-PCA reference.
pub fn run_sweep(
    corpus: &Corpus,
    d: usize,
    k: usize,
    block_sizes: &[usize],
    inner_loops: &[usize],
    options: SweepOptions,
) -> Result<SweepReport> {
    check_corpus(corpus, block_sizes)?;
    let batch = batch_pca_windows(&corpus.train, k)?;
    run_sweep_with_batch(corpus, &batch, d, k, block_sizes, inner_loops, options)
}

fn check_corpus(corpus: &Corpus, block_sizes: &[usize]) -> Result<()> {
    if corpus.test.is_empty() {
        return Err(HpcaError::Parameter("test corpus is empty".into()));
    }
    if let Some(&b) = block_sizes.iter().find(|&&b| b > corpus.train.len()) {
        return Err(HpcaError::Parameter(format!(
            "training corpus has {} windows, shorter than one block of B={b}",
            corpus.train.len()
        )));
    }
    let bits = |w: &SignalWindow| w.samples().iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let train: HashSet<Vec<u64>> = corpus.train.iter().map(bits).collect();
    if corpus.test.iter().any(|w| train.contains(&bits(w))) {
        return Err(HpcaError::Parameter("train and test corpora share a window".into()));
    }
    Ok(())
}

/// [`run_sweep`] against an already trained batch reference.
pub fn run_sweep_with_batch(
    corpus: &Corpus,
    batch: &BasisModel,
    d: usize,
    k: usize,
    block_sizes: &[usize],
    inner_loops: &[usize],
    options: SweepOptions,
) -> Result<SweepReport> {
    check_corpus(corpus, block_sizes)?;
    let batch_db = mean_rsnr_db(batch, &corpus.test)?.mean_or_inf();

    let cells: Vec<(usize, usize)> = block_sizes
        .iter()
        .flat_map(|&b| inner_loops.iter().map(move |&m| (b, m)))
        .collect();
    let eval = |&(b, m): &(usize, usize)| -> Result<SweepRow> {
        let config = HpcaConfig::new(d, k, b, m, options.seed);
        config.validate()?;
        let start = Instant::now();
        let model = train_hpca(config, &corpus.train)?;
        let wall_time_s = start.elapsed().as_secs_f64();
        let hpca_db = mean_rsnr_db(&model, &corpus.test)?.mean_or_inf();
        Ok(SweepRow {
            block_size: b,
            m,
            mean_rsnr_db_hpca: hpca_db,
            mean_rsnr_db_batch: batch_db,
            gap_db: batch_db - hpca_db,
            memory_bytes: hpca_memory_bytes(d as u64, k as u64, b as u64, 4),
            memory_bytes_f64: hpca_memory_bytes(d as u64, k as u64, b as u64, 8),
            wall_time_s,
        })
    };
    let rows = if options.parallel {
        cells.par_iter().map(eval).collect::<Result<Vec<_>>>()?
    } else {
        cells.iter().map(eval).collect::<Result<Vec<_>>>()?
    };
    Ok(SweepReport { rows })
}

/// Trains the batch reference and returns it with its mean test RSNR.
pub fn batch_reference(corpus: &Corpus, k: usize) -> Result<(BasisModel, f64)> {
    let batch = batch_pca_windows(&corpus.train, k)?;
    let db = mean_rsnr_db(&batch, &corpus.test)?.mean_or_inf();
    Ok((batch, db))
}

/// Wall-clock split of one HPCA step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepTiming {
    pub total_s: f64,
    pub matmul_s: f64,
    pub qr_s: f64,
    /// Everything outside the timed products and factorizations.
    pub other_s: f64,
}

#[derive(Default)]
struct TimingProbe {
    matmul: Duration,
    qr: Duration,
}

impl StepProbe for TimingProbe {
    fn record<T>(&mut self, span: Span, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        match span {
            Span::Matmul => self.matmul += elapsed,
            Span::Qr => self.qr += elapsed,
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTimingReport {
    pub d: usize,
    pub k: usize,
    pub block_size: usize,
    pub m: usize,
    /// The repetition with the median total time.
    pub median: StepTiming,
    pub samples: Vec<StepTiming>,
}

#[derive(Serialize)]
struct TimingRow {
    d: usize,
    k: usize,
    #[serde(rename = "B")]
    block_size: usize,
    m: usize,
    repetitions: usize,
    total_s: f64,
    matmul_s: f64,
    qr_s: f64,
    other_s: f64,
    real_time_fraction_100hz: f64,
}

impl StepTimingReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.serialize(TimingRow {
            d: self.d,
            k: self.k,
            block_size: self.block_size,
            m: self.m,
            repetitions: self.samples.len(),
            total_s: self.median.total_s,
            matmul_s: self.median.matmul_s,
            qr_s: self.median.qr_s,
            other_s: self.median.other_s,
            real_time_fraction_100hz: real_time_fraction(self.median.total_s, self.d, self.block_size, 100.0),
        })?;
        w.flush().map_err(|e| HpcaError::io("<csv>", e))?;
        Ok(())
    }
}

const WARMUP_STEPS: usize = 2;

/// Times `repetitions` HPCA steps on Gaussian blocks after two discarded
/// warm-up steps, runs them sequentially, and reports the median step.
pub fn run_step_timing(
    d: usize,
    k: usize,
    block_size: usize,
    m: usize,
    repetitions: usize,
    seed: u64,
) -> Result<StepTimingReport> {
    if repetitions == 0 {
        return Err(HpcaError::Parameter("repetitions must be >= 1".into()));
    }
    let config = HpcaConfig::new(d, k, block_size, m, seed);
    let mut state = HpcaState::new(config)?;
    let mut gauss = GaussianSource::new(seed ^ 0x5eed);
    let mut block = || Matrix::new(d, block_size, gauss.fill(d * block_size));
    state.first_block(&block()?)?;
    for _ in 0..WARMUP_STEPS {
        state.step(&block()?)?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let x = block()?;
        let mut probe = TimingProbe::default();
        let start = Instant::now();
        state.step_probed(&x, &mut probe)?;
        let total_s = start.elapsed().as_secs_f64();
        let matmul_s = probe.matmul.as_secs_f64();
        let qr_s = probe.qr.as_secs_f64();
        samples.push(StepTiming {
            total_s,
            matmul_s,
            qr_s,
            other_s: (total_s - matmul_s - qr_s).max(0.0),
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].total_s.total_cmp(&samples[b].total_s));
    let median = samples[order[(order.len() - 1) / 2]];
    Ok(StepTimingReport {
        d,
        k,
        block_size,
        m,
        median,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_model_values() {
        assert_eq!(hpca_memory_bytes(500, 50, 1, 4), 312_000);
        assert_eq!(hpca_memory_bytes(500, 50, 50, 4), 410_000);
        assert_eq!(hpca_memory_bytes(1, 1, 1, 1), 5);
        assert_eq!(batch_memory_bytes(500, 8650, 4), 18_300_000);
        assert_eq!(batch_memory_bytes(1, 1, 1), 2);
        let ratio = batch_memory_bytes(500, 8650, 4) as f64 / hpca_memory_bytes(500, 50, 1, 4) as f64;
        assert!((ratio - 58.65).abs() < 0.01);
    }

    #[test]
    fn memory_is_linear_in_block_size() {
        let base = hpca_memory_bytes(500, 50, 0, 4);
        for b in [1, 2, 10, 50, 500] {
            assert_eq!(hpca_memory_bytes(500, 50, b, 4) - base, 4 * 500 * b);
        }
    }

    #[test]
    fn real_time_cases() {
        assert!((real_time_fraction(10.5, 5000, 1, 100.0) - 0.21).abs() < 1e-12);
        assert_eq!(real_time_fraction(0.0, 500, 1, 100.0), 0.0);
        assert!(is_real_time_feasible(0.99));
        assert!(!is_real_time_feasible(1.0));
    }

    #[test]
    fn single_cell_sweep() {
        let corpus = synthetic_corpus(1, 40, 60, 20).unwrap();
        let report = run_sweep(&corpus, 40, 4, &[5], &[2], SweepOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 1);
        let r = &report.rows[0];
        assert_eq!(r.gap_db, r.mean_rsnr_db_batch - r.mean_rsnr_db_hpca);
        assert_eq!(r.memory_bytes, hpca_memory_bytes(40, 4, 5, 4));

        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("B,m,mean_rsnr_db_hpca,mean_rsnr_db_batch,gap_db,"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn sweep_rejects_short_corpus() {
        let corpus = synthetic_corpus(1, 40, 3, 2).unwrap();
        assert!(run_sweep(&corpus, 40, 4, &[5], &[1], SweepOptions::default()).is_err());
    }

    #[test]
    fn sweep_rejects_overlapping_corpus() {
        let mut corpus = synthetic_corpus(1, 40, 10, 2).unwrap();
        corpus.test.push(corpus.train[3].clone());
        assert!(run_sweep(&corpus, 40, 4, &[5], &[1], SweepOptions::default()).is_err());
    }

    #[test]
    fn gnuplot_blocks() {
        let row = |b, m| SweepRow {
            block_size: b,
            m,
            mean_rsnr_db_hpca: 1.0,
            mean_rsnr_db_batch: 2.0,
            gap_db: 1.0,
            memory_bytes: 0,
            memory_bytes_f64: 0,
            wall_time_s: 0.0,
        };
        let report = SweepReport { rows: vec![row(10, 2), row(1, 1), row(10, 1)] };
        let mut out = Vec::new();
        report.write_gnuplot(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "# B=1\n# m mean_rsnr_db_hpca mean_rsnr_db_batch\n1 1 2\n\n\n# B=10\n# m mean_rsnr_db_hpca mean_rsnr_db_batch\n1 1 2\n2 1 2\n");
    }

    #[test]
    fn timing_single_repetition() {
        let r = run_step_timing(30, 3, 1, 2, 1, 0).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.median, r.samples[0]);
        let t = r.median;
        assert!(t.matmul_s + t.qr_s + t.other_s <= t.total_s * 1.01 + 1e-9);
        assert!(run_step_timing(30, 3, 1, 2, 0, 0).is_err());
    }
}
