//! Trace ingestion, synthetic vibration traces, and the binary model and
//! compressed-stream files.
//!
//! Both binary files are little-endian, fixed layout, and end with a CRC32
//! of every preceding byte.
//!
//! Model file (`HPCA`):
//!
//! ```text
//! magic "HPCA" | version u16 | d u32 | k u32 | trained_tau u64
//! | source_len u8 | source bytes | lambdas k×f64 | q d×k f64 row-major | crc32 u32
//! ```
//!
//! Compressed stream (`HPCZ`):
//!
//! ```text
//! magic "HPCZ" | version u16 | d u32 | k u32 | coeff_format u8 (0=f32, 1=f64)
//! | window_count u64 | coefficients window-major | crc32 u32
//! ```

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{BasisModel, CompressedWindow, SignalWindow};
use crate::error::{HpcaError, Result};
use crate::gaussian::GaussianSource;
use crate::linalg::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"HPCA";
pub const STREAM_MAGIC: &[u8; 4] = b"HPCZ";
pub const FORMAT_VERSION: u16 = 1;
const CRC_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFormat {
    Int32Le,
    Float64Le,
    Csv,
}

impl FromStr for SampleFormat {
    type Err = HpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "int32-le" | "int32" | "i32" => Ok(SampleFormat::Int32Le),
            "float64-le" | "float64" | "f64" => Ok(SampleFormat::Float64Le),
            "csv" => Ok(SampleFormat::Csv),
            other => Err(HpcaError::Parameter(format!("unknown sample format {other:?}"))),
        }
    }
}

impl SampleFormat {
    /// Guesses the format from a file extension: `.csv`, `.i32`, anything
    /// else is float64.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => SampleFormat::Csv,
            Some("i32") => SampleFormat::Int32Le,
            _ => SampleFormat::Float64Le,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub sample_rate_hz: f64,
    pub sample_format: SampleFormat,
    pub sensor_id: String,
    pub axis: Axis,
}

impl TraceMeta {
    pub fn new(sample_format: SampleFormat) -> Self {
        TraceMeta {
            sample_rate_hz: 100.0,
            sample_format,
            sensor_id: String::new(),
            axis: Axis::X,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(HpcaError::Parameter(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

pub fn read_trace(path: impl AsRef<Path>, meta: &TraceMeta) -> Result<Vec<f64>> {
    let path = path.as_ref();
    meta.validate()?;
    let bytes = fs::read(path).map_err(|e| HpcaError::io(path, e))?;
    decode_trace(&bytes, meta.sample_format)
}

pub fn decode_trace(bytes: &[u8], format: SampleFormat) -> Result<Vec<f64>> {
    match format {
        SampleFormat::Int32Le => {
            check_record_len(bytes.len(), 4)?;
            Ok(bytes
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect())
        }
        SampleFormat::Float64Le => {
            check_record_len(bytes.len(), 8)?;
            bytes
                .chunks_exact(8)
                .enumerate()
                .map(|(i, c)| {
                    let v = f64::from_le_bytes(c.try_into().unwrap());
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(HpcaError::Parse {
                            location: format!("byte {}", i * 8),
                            message: "non-finite sample".into(),
                        })
                    }
                })
                .collect()
        }
        SampleFormat::Csv => {
            let text = std::str::from_utf8(bytes).map_err(|e| HpcaError::Parse {
                location: format!("byte {}", e.valid_up_to()),
                message: "invalid UTF-8".into(),
            })?;
            let mut out = Vec::new();
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let v: f64 = line.parse().map_err(|_| HpcaError::Parse {
                    location: format!("line {}", n + 1),
                    message: format!("not a number: {line:?}"),
                })?;
                if !v.is_finite() {
                    return Err(HpcaError::Parse {
                        location: format!("line {}", n + 1),
                        message: "non-finite sample".into(),
                    });
                }
                out.push(v);
            }
            Ok(out)
        }
    }
}

fn check_record_len(len: usize, record: usize) -> Result<()> {
    if len % record != 0 {
        return Err(HpcaError::Parse {
            location: format!("byte {}", len - len % record),
            message: format!("truncated final record ({} of {record} bytes)", len % record),
        });
    }
    Ok(())
}

pub fn encode_trace(samples: &[f64], format: SampleFormat) -> Result<Vec<u8>> {
    match format {
        SampleFormat::Int32Le => {
            let mut out = Vec::with_capacity(samples.len() * 4);
            for (i, &v) in samples.iter().enumerate() {
                if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                    return Err(HpcaError::Parameter(format!(
                        "sample {i} ({v}) is not representable as int32"
                    )));
                }
                out.extend_from_slice(&(v as i32).to_le_bytes());
            }
            Ok(out)
        }
        SampleFormat::Float64Le => Ok(samples.iter().flat_map(|v| v.to_le_bytes()).collect()),
        SampleFormat::Csv => {
            let mut s = String::with_capacity(samples.len() * 20);
            for v in samples {
                writeln!(s, "{v}").unwrap();
            }
            Ok(s.into_bytes())
        }
    }
}

pub fn write_trace(path: impl AsRef<Path>, samples: &[f64], format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_trace(samples, format)?).map_err(|e| HpcaError::io(path, e))
}

/// Splits a sample sequence into non-overlapping windows of `d` samples,
/// dropping the trailing remainder.
pub fn window_stream(samples: &[f64], d: usize) -> Result<Vec<SignalWindow>> {
    if d == 0 {
        return Err(HpcaError::Parameter("window length must be >= 1".into()));
    }
    samples
        .chunks_exact(d)
        .map(|c| SignalWindow::new(c.to_vec()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub frequency_hz: f64,
    pub amplitude: f64,
    pub damping: f64,
}

/// Damped modal superposition plus white noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub modes: Vec<Mode>,
    pub noise_std: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(HpcaError::Parameter("sample_rate_hz must be positive".into()));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(HpcaError::Parameter("duration_s must be non-negative".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(HpcaError::Parameter("noise_std must be non-negative".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.frequency_hz >= 0.0 && m.frequency_hz < nyquist) {
                return Err(HpcaError::Parameter(format!(
                    "mode {i}: frequency {} Hz is not below Nyquist ({nyquist} Hz)",
                    m.frequency_hz
                )));
            }
            if !(m.amplitude.is_finite() && m.damping.is_finite() && m.damping >= 0.0) {
                return Err(HpcaError::Parameter(format!(
                    "mode {i}: amplitude must be finite and damping non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SyntheticSpec =
            serde_json::from_str(text).map_err(|e| HpcaError::Parse {
                location: format!("line {} column {}", e.line(), e.column()),
                message: e.to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `Σ a·e^(−ζt)·sin(2πft + φ) + noise`, phases drawn from the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = GaussianSource::new(spec.seed);
    let phases: Vec<f64> = spec.modes.iter().map(|_| TAU * rng.next_uniform()).collect();
    let dt = 1.0 / spec.sample_rate_hz;
    let n = spec.sample_count();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let mut v: f64 = spec
            .modes
            .iter()
            .zip(&phases)
            .map(|(m, ph)| m.amplitude * (-m.damping * t).exp() * (TAU * m.frequency_hz * t + ph).sin())
            .sum();
        if spec.noise_std > 0.0 {
            v += spec.noise_std * rng.next_standard();
        }
        out.push(v);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            HpcaError::Corruption(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.checked_mul(8).ok_or_else(|| HpcaError::Corruption("size overflow".into()))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.checked_mul(4).ok_or_else(|| HpcaError::Corruption("size overflow".into()))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

fn check_envelope<'a>(bytes: &'a [u8], magic: &[u8; 4], what: &str) -> Result<Reader<'a>> {
    if bytes.len() < 6 || &bytes[..4] != magic {
        return Err(HpcaError::Format(format!("not a {what} file (bad magic)")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(HpcaError::Format(format!("unsupported {what} version {version}")));
    }
    if bytes.len() < 6 + CRC_LEN {
        return Err(HpcaError::Corruption(format!("{what} file truncated")));
    }
    let (body, crc) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(HpcaError::Corruption(format!("{what} checksum mismatch")));
    }
    Ok(Reader { bytes: body, pos: 6 })
}

fn finish_with_crc(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn encode_model(model: &BasisModel) -> Result<Vec<u8>> {
    let source = model.source().as_bytes();
    let source_len = u8::try_from(source.len())
        .map_err(|_| HpcaError::Parameter("source tag longer than 255 bytes".into()))?;
    let (d, k) = (model.d(), model.k());
    let dims = |v: usize| {
        u32::try_from(v).map_err(|_| HpcaError::Parameter(format!("dimension {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(4 + 2 + 4 + 4 + 8 + 1 + source.len() + 8 * k * (d + 1) + CRC_LEN);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dims(d)?.to_le_bytes());
    out.extend_from_slice(&dims(k)?.to_le_bytes());
    out.extend_from_slice(&model.trained_tau().to_le_bytes());
    out.push(source_len);
    out.extend_from_slice(source);
    for l in model.lambdas() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for v in model.basis().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(finish_with_crc(out))
}

pub fn decode_model(bytes: &[u8]) -> Result<BasisModel> {
    let mut r = check_envelope(bytes, MODEL_MAGIC, "model")?;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let tau = r.u64()?;
    let source_len = r.u8()? as usize;
    let source = String::from_utf8(r.take(source_len)?.to_vec())
        .map_err(|_| HpcaError::Corruption("source tag is not UTF-8".into()))?;
    let lambdas = r.f64s(k)?;
    let q = r.f64s(d.checked_mul(k).ok_or_else(|| HpcaError::Corruption("size overflow".into()))?)?;
    if r.pos != r.bytes.len() {
        return Err(HpcaError::Corruption(format!(
            "{} trailing bytes after payload",
            r.bytes.len() - r.pos
        )));
    }
    let q = Matrix::new(d, k, q).map_err(|e| HpcaError::Corruption(e.to_string()))?;
    BasisModel::new(q, lambdas, tau, source).map_err(|e| HpcaError::Corruption(e.to_string()))
}

pub fn write_model(model: &BasisModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)?).map_err(|e| HpcaError::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<BasisModel> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| HpcaError::io(path, e))?)
}

/// Coefficient width on disk. `F32` narrows each coefficient, with a
/// relative error of at most 2⁻²⁴ (round to nearest).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffFormat {
    F32,
    F64,
}

impl CoeffFormat {
    pub fn bytes(self) -> usize {
        match self {
            CoeffFormat::F32 => 4,
            CoeffFormat::F64 => 8,
        }
    }

    fn tag(self) -> u8 {
        match self {
            CoeffFormat::F32 => 0,
            CoeffFormat::F64 => 1,
        }
    }
}

impl FromStr for CoeffFormat {
    type Err = HpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "float32" | "float32-le" => Ok(CoeffFormat::F32),
            "f64" | "float64" | "float64-le" => Ok(CoeffFormat::F64),
            other => Err(HpcaError::Parameter(format!("unknown coefficient format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedStream {
    pub d: usize,
    pub k: usize,
    pub format: CoeffFormat,
    pub windows: Vec<CompressedWindow>,
}

/// Header size of a compressed stream, excluding the trailing CRC.
pub const STREAM_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 1 + 8;

pub fn encode_compressed_stream(
    model: &BasisModel,
    windows: &[CompressedWindow],
    format: CoeffFormat,
) -> Result<Vec<u8>> {
    let k = model.k();
    let mut out = Vec::with_capacity(STREAM_HEADER_LEN + windows.len() * k * format.bytes() + CRC_LEN);
    out.extend_from_slice(STREAM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.d() as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.push(format.tag());
    out.extend_from_slice(&(windows.len() as u64).to_le_bytes());
    for (i, w) in windows.iter().enumerate() {
        if w.len() != k {
            return Err(HpcaError::Shape {
                op: "write_compressed_stream",
                lhs: format!("model k={k}"),
                rhs: format!("window {i} has {} coefficients", w.len()),
            });
        }
        for &c in w.coeffs() {
            match format {
                CoeffFormat::F32 => out.extend_from_slice(&(c as f32).to_le_bytes()),
                CoeffFormat::F64 => out.extend_from_slice(&c.to_le_bytes()),
            }
        }
    }
    Ok(finish_with_crc(out))
}

pub fn decode_compressed_stream(bytes: &[u8]) -> Result<CompressedStream> {
    let mut r = check_envelope(bytes, STREAM_MAGIC, "compressed stream")?;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let format = match r.u8()? {
        0 => CoeffFormat::F32,
        1 => CoeffFormat::F64,
        t => return Err(HpcaError::Format(format!("unknown coefficient format tag {t}"))),
    };
    let count = r.u64()? as usize;
    let expected = count
        .checked_mul(k)
        .and_then(|n| n.checked_mul(format.bytes()))
        .ok_or_else(|| HpcaError::Corruption("size overflow".into()))?;
    if r.bytes.len() - r.pos != expected {
        return Err(HpcaError::Corruption(format!(
            "header declares {count} windows ({expected} payload bytes) but {} are present",
            r.bytes.len() - r.pos
        )));
    }
    let mut windows = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs = match format {
            CoeffFormat::F32 => r.f32s(k)?,
            CoeffFormat::F64 => r.f64s(k)?,
        };
        windows.push(CompressedWindow::new(coeffs).map_err(|e| HpcaError::Corruption(e.to_string()))?);
    }
    Ok(CompressedStream { d, k, format, windows })
}

pub fn write_compressed_stream(
    model: &BasisModel,
    windows: &[CompressedWindow],
    format: CoeffFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_compressed_stream(model, windows, format)?).map_err(|e| HpcaError::io(path, e))
}

pub fn read_compressed_stream(path: impl AsRef<Path>) -> Result<CompressedStream> {
    let path = path.as_ref();
    decode_compressed_stream(&fs::read(path).map_err(|e| HpcaError::io(path, e))?)
}
