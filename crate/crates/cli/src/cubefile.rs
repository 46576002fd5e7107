//! `HSIC` binary cube container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "HSIC"
//!      4     2  format version, u16 LE (= 1)
//!      6     1  dtype: 0 = f32 LE, 1 = f64 LE
//!      7     1  reserved (= 0)
//!      8     4  H, u32 LE
//!     12     4  W, u32 LE
//!     16     4  C, u32 LE
//!     20     -  H*W*C values, band-major, row-major within a band
//! ```
//!
//! Masks are stored with `C = 1`. Measurements are stored with `C = 1` and
//! `W` equal to the detector width.

use std::io::Write;
use std::path::Path;

use cassi_core::{CodedAperture, HsiCube, Measurement, SceneConfig};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"HSIC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Default,
    clap::ValueEnum,
    serde::Deserialize,
    serde::Serialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Parsed cube file contents. Values are widened to `f64` on read.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFile {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

/// Format error with the byte offset where parsing stopped.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("byte {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

fn format_err(offset: usize, message: impl Into<String>) -> FormatError {
    FormatError {
        offset,
        message: message.into(),
    }
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

impl CubeFile {
    pub fn new(height: usize, width: usize, bands: usize, dtype: Dtype, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * bands, "payload length");
        CubeFile {
            height,
            width,
            bands,
            dtype,
            data,
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<CubeFile, FormatError> {
        if bytes.len() < HEADER_LEN {
            return Err(format_err(
                bytes.len(),
                format!("truncated header, expected {HEADER_LEN} bytes"),
            ));
        }
        if &bytes[0..4] != MAGIC {
            return Err(format_err(0, "bad magic, expected \"HSIC\""));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format_err(
                4,
                format!("unsupported format version {version}"),
            ));
        }
        let dtype = Dtype::from_code(bytes[6])
            .ok_or_else(|| format_err(6, format!("unknown dtype code {}", bytes[6])))?;
        if bytes[7] != 0 {
            return Err(format_err(7, "reserved byte must be zero"));
        }
        let dims = [u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16)];
        for (i, d) in dims.iter().enumerate() {
            if *d == 0 {
                return Err(format_err(8 + 4 * i, "dimension must be nonzero"));
            }
        }
        let [height, width, bands] = dims.map(|d| d as usize);
        let count = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| format_err(8, "dimensions overflow"))?;
        let payload = &bytes[HEADER_LEN..];
        let expected = count
            .checked_mul(dtype.size())
            .ok_or_else(|| format_err(8, "dimensions overflow"))?;
        if payload.len() < expected {
            return Err(format_err(
                bytes.len(),
                format!(
                    "truncated payload, expected {expected} bytes after header, found {}",
                    payload.len()
                ),
            ));
        }
        if payload.len() > expected {
            return Err(format_err(
                HEADER_LEN + expected,
                "unexpected trailing data",
            ));
        }
        let data: Vec<f64> = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
        };
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(format_err(
                HEADER_LEN + i * dtype.size(),
                "non-finite value",
            ));
        }
        Ok(CubeFile {
            height,
            width,
            bands,
            dtype,
            data,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype.code());
        out.push(0);
        for d in [self.height, self.width, self.bands] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match self.dtype {
            Dtype::F32 => self
                .data
                .iter()
                .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
            Dtype::F64 => self
                .data
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
        out
    }

    pub fn read(path: &Path) -> Result<CubeFile, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        CubeFile::decode(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Write via a temporary file in the target directory, then rename.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &self.encode())
    }

    pub fn from_cube(cube: &HsiCube, dtype: Dtype) -> CubeFile {
        let cfg = cube.config();
        CubeFile::new(
            cfg.height(),
            cube.plane_width(),
            cfg.bands(),
            dtype,
            cube.data().to_vec(),
        )
    }

    pub fn from_mask(mask: &CodedAperture, dtype: Dtype) -> CubeFile {
        CubeFile::new(mask.height(), mask.width(), 1, dtype, mask.data().to_vec())
    }

    pub fn from_measurement(meas: &Measurement, dtype: Dtype) -> CubeFile {
        let cfg = meas.config();
        CubeFile::new(
            cfg.height(),
            cfg.measurement_width(),
            1,
            dtype,
            meas.data().to_vec(),
        )
    }

    pub fn into_mask(self) -> Result<CodedAperture, CliError> {
        if self.bands != 1 {
            return Err(CliError::usage(format!(
                "mask file must have C = 1, found {}",
                self.bands
            )));
        }
        Ok(CodedAperture::new(self.height, self.width, self.data)?)
    }

    pub fn into_cube(self, shift_step: usize) -> Result<HsiCube, CliError> {
        let cfg = SceneConfig::new(self.height, self.width, self.bands, shift_step)?;
        Ok(HsiCube::new(&cfg, self.data)?)
    }

    pub fn into_measurement(self, config: &SceneConfig) -> Result<Measurement, CliError> {
        if self.bands != 1 {
            return Err(CliError::usage(format!(
                "measurement file must have C = 1, found {}",
                self.bands
            )));
        }
        if self.height != config.height() || self.width != config.measurement_width() {
            return Err(CliError::usage(format!(
                "measurement is {}x{}, expected {}x{}",
                self.height,
                self.width,
                config.height(),
                config.measurement_width()
            )));
        }
        Ok(Measurement::new(config, self.data)?)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
