//! `hpca` command line: synthesize traces, train models, compress and
//! reconstruct streams, and run the benchmark studies.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hpca_core::bench::{
    batch_memory_bytes, hpca_memory_bytes, real_time_fraction, run_step_timing, run_sweep, Corpus,
    SweepOptions,
};
use hpca_core::io::{
    generate_synthetic, read_compressed_stream, read_model, read_trace, window_stream,
    write_compressed_stream, write_model, write_trace, CoeffFormat, SampleFormat, SyntheticSpec,
    TraceMeta,
};
use hpca_core::{
    batch_pca_windows, compress, mean_rsnr_db, reconstruct, train_hpca, HpcaConfig, SignalWindow,
};

#[derive(Parser)]
#[command(name = "hpca", version, about = "Streaming PCA compression for sensor traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Hpca,
    Batch,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace from a JSON spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Trace format (int32-le, float64-le, csv). Defaults to the extension.
        #[arg(long)]
        format: Option<SampleFormat>,
    },
    /// Train a basis from a trace.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 500)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Block size (windows per update).
        #[arg(short = 'B', long = "B", alias = "block-size", default_value_t = 50)]
        block_size: usize,
        /// Inner iterations per block.
        #[arg(short, long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "hpca")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<SampleFormat>,
    },
    /// Project a trace onto a model and write the coefficient stream.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "f32")]
        coeff_format: CoeffFormat,
        #[arg(long)]
        format: Option<SampleFormat>,
    },
    /// Reconstruct a trace from a coefficient stream.
    Decompress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<SampleFormat>,
    },
    /// Report mean RSNR and compression ratio of a model on a trace.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        format: Option<SampleFormat>,
    },
    /// Compare HPCA against batch PCA over a grid of (B, m).
    Sweep {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 500)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(short = 'B', long = "B", value_delimiter = ',', default_values_t = [1, 10, 50, 100, 500])]
        block_sizes: Vec<usize>,
        #[arg(short, long, value_delimiter = ',', default_values_t = [1, 3])]
        m: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a gnuplot data file (one block per B).
        #[arg(long)]
        gnuplot: Option<PathBuf>,
        #[arg(long)]
        format: Option<SampleFormat>,
    },
    /// Time HPCA steps on random data.
    Bench {
        #[arg(long, default_value_t = 500)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(short = 'B', long = "B", default_value_t = 1)]
        block_size: usize,
        #[arg(short, long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the memory footprint of HPCA and batch PCA.
    Meminfo {
        #[arg(long, default_value_t = 500)]
        d: u64,
        #[arg(long, default_value_t = 50)]
        k: u64,
        #[arg(short = 'B', long = "B", default_value_t = 1)]
        block_size: u64,
        /// Number of windows batch PCA holds in memory.
        #[arg(short = 'N', long = "N", default_value_t = 8650)]
        n_windows: u64,
        #[arg(long, default_value_t = 4)]
        data_size: u64,
    },
}

fn trace_format(path: &Path, flag: Option<SampleFormat>) -> SampleFormat {
    flag.unwrap_or_else(|| SampleFormat::from_path(path))
}

fn load_windows(path: &Path, flag: Option<SampleFormat>, d: usize) -> Result<Vec<SignalWindow>> {
    let samples = read_trace(path, &TraceMeta::new(trace_format(path, flag)))?;
    let windows = window_stream(&samples, d)?;
    if windows.is_empty() {
        bail!("{} holds {} samples, fewer than one window of d={d}", path.display(), samples.len());
    }
    Ok(windows)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { spec, out, format } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let samples = generate_synthetic(&SyntheticSpec::from_json(&text)?)?;
            write_trace(&out, &samples, trace_format(&out, format))?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Train { input, d, k, block_size, m, seed, method, out, format } => {
            let windows = load_windows(&input, format, d)?;
            let model = match method {
                Method::Hpca => train_hpca(HpcaConfig::new(d, k, block_size, m, seed), &windows)?,
                Method::Batch => batch_pca_windows(&windows, k)?,
            };
            write_model(&model, &out)?;
            println!(
                "trained {} model d={d} k={k} on {} windows (tau={}), wrote {}",
                model.source(),
                windows.len(),
                model.trained_tau(),
                out.display()
            );
        }
        Command::Compress { model, input, out, coeff_format, format } => {
            let model = read_model(&model)?;
            let windows = load_windows(&input, format, model.d())?;
            let coeffs = windows.iter().map(|w| compress(&model, w)).collect::<hpca_core::Result<Vec<_>>>()?;
            write_compressed_stream(&model, &coeffs, coeff_format, &out)?;
            println!("compressed {} windows (CR={:.2}) to {}", coeffs.len(), model.compression_ratio(), out.display());
        }
        Command::Decompress { model, input, out, format } => {
            let model = read_model(&model)?;
            let stream = read_compressed_stream(&input)?;
            if stream.d != model.d() || stream.k != model.k() {
                bail!(
                    "stream is d={} k={} but model is d={} k={}",
                    stream.d,
                    stream.k,
                    model.d(),
                    model.k()
                );
            }
            let mut samples = Vec::with_capacity(stream.windows.len() * model.d());
            for y in &stream.windows {
                samples.extend_from_slice(reconstruct(&model, y)?.samples());
            }
            let fmt = format.unwrap_or(match SampleFormat::from_path(&out) {
                SampleFormat::Csv => SampleFormat::Csv,
                _ => SampleFormat::Float64Le,
            });
            write_trace(&out, &samples, fmt)?;
            println!("reconstructed {} windows to {}", stream.windows.len(), out.display());
        }
        Command::Evaluate { model, input, format } => {
            let model = read_model(&model)?;
            let windows = load_windows(&input, format, model.d())?;
            let summary = mean_rsnr_db(&model, &windows)?;
            match summary.mean_db {
                Some(db) => println!("mean_rsnr_db: {db:.12}"),
                None => println!("mean_rsnr_db: inf (lossless)"),
            }
            println!("compression_ratio: {}", model.compression_ratio());
            println!(
                "windows: total={} evaluated={} lossless={}",
                summary.total(),
                summary.evaluated,
                summary.lossless
            );
        }
        Command::Sweep { train, test, d, k, block_sizes, m, seed, out, gnuplot, format } => {
            let train_samples = read_trace(&train, &TraceMeta::new(trace_format(&train, format)))?;
            let test_samples = read_trace(&test, &TraceMeta::new(trace_format(&test, format)))?;
            let corpus = Corpus::from_traces(&train_samples, &test_samples, d)?;
            let report = run_sweep(&corpus, d, k, &block_sizes, &m, SweepOptions { seed, parallel: true })?;
            report.write_csv(create(&out)?)?;
            if let Some(path) = gnuplot {
                let mut w = create(&path)?;
                report.write_gnuplot(&mut w)?;
                w.flush()?;
            }
            for row in &report.rows {
                println!(
                    "B={:<4} m={:<2} hpca={:.3} dB batch={:.3} dB gap={:.3} dB",
                    row.block_size, row.m, row.mean_rsnr_db_hpca, row.mean_rsnr_db_batch, row.gap_db
                );
            }
        }
        Command::Bench { d, k, block_size, m, reps, seed, out } => {
            let report = run_step_timing(d, k, block_size, m, reps, seed)?;
            match out {
                Some(path) => report.write_csv(create(&path)?)?,
                None => report.write_csv(io::stdout().lock())?,
            }
            let t = report.median;
            eprintln!(
                "median step {:.6}s (matmul {:.6}s, qr {:.6}s), {:.3} of real time at 100 Hz",
                t.total_s,
                t.matmul_s,
                t.qr_s,
                real_time_fraction(t.total_s, d, block_size, 100.0)
            );
        }
        Command::Meminfo { d, k, block_size, n_windows, data_size } => {
            let hpca = hpca_memory_bytes(d, k, block_size, data_size);
            let batch = batch_memory_bytes(d, n_windows, data_size);
            println!("hpca_bytes: {hpca}");
            println!("batch_bytes: {batch}");
            println!("ratio: {:.2}", batch as f64 / hpca as f64);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
