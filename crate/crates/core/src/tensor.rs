//! Value types shared by every stage of the pipeline.
//!
//! All dense arrays are stored band-major: band slowest, then row, then
//! column. A cube of `H x W x C` keeps band `c` in the contiguous slice
//! `data[c*H*W .. (c+1)*H*W]`, row-major inside the band.
//!
//! Two widths appear throughout. Scene-domain arrays ([`HsiCube`],
//! [`CodedAperture`]) have width `W`. Detector-domain arrays
//! ([`ShiftedCube`], [`Measurement`]) have the dispersed width
//! `W' = W + d*(C-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

/// Scene geometry: spatial size, band count and dispersion step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    height: usize,
    width: usize,
    bands: usize,
    shift_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wavelengths: Option<Vec<f64>>,
}

impl SceneConfig {
    pub fn new(height: usize, width: usize, bands: usize, shift_step: usize) -> Result<Self> {
        let config = SceneConfig {
            height,
            width,
            bands,
            shift_step,
            wavelengths: None,
        };
        config.check()?;
        Ok(config)
    }

    /// Attach per-band wavelengths (nm). Metadata only; no operator reads it.
    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != self.bands {
            return Err(mismatch("wavelength list", self.bands, wavelengths.len()));
        }
        if let Some(offset) = wavelengths.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "wavelength list",
                offset,
            });
        }
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        for (name, value) in [
            ("height", self.height),
            ("width", self.width),
            ("bands", self.bands),
            ("shift_step", self.shift_step),
        ] {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn shift_step(&self) -> usize {
        self.shift_step
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    /// Detector width `W + d*(C-1)`.
    pub fn measurement_width(&self) -> usize {
        self.width + self.shift_step * (self.bands - 1)
    }

    /// Column offset of band `c` on the detector.
    #[inline]
    pub fn band_offset(&self, band: usize) -> usize {
        self.shift_step * band
    }

    /// Number of voxels in a scene cube.
    pub fn scene_len(&self) -> usize {
        self.height * self.width * self.bands
    }

    /// Number of detector pixels.
    pub fn measurement_len(&self) -> usize {
        self.height * self.measurement_width()
    }

    /// True when height, width, bands and shift step agree. Wavelength
    /// metadata is ignored.
    pub fn same_geometry(&self, other: &SceneConfig) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.bands == other.bands
            && self.shift_step == other.shift_step
    }

    fn describe(&self) -> String {
        format!(
            "H={} W={} C={} d={}",
            self.height, self.width, self.bands, self.shift_step
        )
    }
}

/// Position of voxel `(row, col, band)` of a detector-domain cube in the
/// vectorized `x` used by the dense sensing matrix.
///
/// Each band plane is stacked column by column (column-major), and the band
/// vectors are concatenated. The result lies in `[0, H*W'*C)`.
pub fn flatten_index(row: usize, col: usize, band: usize, config: &SceneConfig) -> Result<usize> {
    let h = config.height();
    let wp = config.measurement_width();
    if row >= h || col >= wp || band >= config.bands() {
        return Err(Error::IndexOutOfRange { row, col, band });
    }
    Ok(band * h * wp + col * h + row)
}

/// Position of detector pixel `(row, col)` in the vectorized `y`.
pub fn flatten_pixel(row: usize, col: usize, config: &SceneConfig) -> Result<usize> {
    flatten_index(row, col, 0, config)
}

fn check_finite(what: &'static str, data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(offset) => Err(Error::NonFiniteValue { what, offset }),
        None => Ok(()),
    }
}

/// Shape and finiteness check against a scene configuration.
pub trait Validate {
    fn validate(&self, config: &SceneConfig) -> Result<()>;
}

/// Free-function form of [`Validate::validate`].
pub fn validate<T: Validate + ?Sized>(config: &SceneConfig, value: &T) -> Result<()> {
    value.validate(config)
}

macro_rules! banded_accessors {
    ($ty:ident, $width:ident, $what:literal) => {
        impl $ty {
            pub fn config(&self) -> &SceneConfig {
                &self.config
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            /// Row-major slice of band `c`.
            pub fn band(&self, c: usize) -> &[f64] {
                let plane = self.config.height() * self.config.$width();
                &self.data[c * plane..(c + 1) * plane]
            }

            pub(crate) fn band_mut(&mut self, c: usize) -> &mut [f64] {
                let plane = self.config.height() * self.config.$width();
                &mut self.data[c * plane..(c + 1) * plane]
            }

            #[inline]
            pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
                let w = self.config.$width();
                self.data[(band * self.config.height() + row) * w + col]
            }

            /// Plane width of this array.
            pub fn plane_width(&self) -> usize {
                self.config.$width()
            }

            pub fn zeros(config: &SceneConfig) -> Self {
                let len = config.height() * config.$width() * config.bands();
                $ty {
                    config: config.clone(),
                    data: vec![0.0; len],
                }
            }

            pub fn new(config: &SceneConfig, data: Vec<f64>) -> Result<Self> {
                let value = $ty {
                    config: config.clone(),
                    data,
                };
                value.validate(config)?;
                Ok(value)
            }

            /// Build from a function of `(row, col, band)`.
            pub fn from_fn(
                config: &SceneConfig,
                mut f: impl FnMut(usize, usize, usize) -> f64,
            ) -> Result<Self> {
                let (h, w) = (config.height(), config.$width());
                let mut data = Vec::with_capacity(h * w * config.bands());
                for c in 0..config.bands() {
                    for u in 0..h {
                        for v in 0..w {
                            data.push(f(u, v, c));
                        }
                    }
                }
                Self::new(config, data)
            }

            /// Element-wise map; the result is re-validated.
            pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
                Self::new(&self.config, self.data.iter().map(|&v| f(v)).collect())
            }

            pub fn max_abs(&self) -> f64 {
                self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }

            pub fn norm(&self) -> f64 {
                self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
            }

            pub fn dot(&self, other: &Self) -> f64 {
                self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
            }
        }

        impl Validate for $ty {
            fn validate(&self, config: &SceneConfig) -> Result<()> {
                if !self.config.same_geometry(config) {
                    return Err(mismatch($what, config.describe(), self.config.describe()));
                }
                let expected = config.height() * config.$width() * config.bands();
                if self.data.len() != expected {
                    return Err(mismatch($what, expected, self.data.len()));
                }
                check_finite($what, &self.data)
            }
        }

        impl std::ops::Add for &$ty {
            type Output = $ty;

            fn add(self, rhs: &$ty) -> $ty {
                assert!(self.config.same_geometry(&rhs.config), "geometry mismatch");
                $ty {
                    config: self.config.clone(),
                    data: self
                        .data
                        .iter()
                        .zip(&rhs.data)
                        .map(|(a, b)| a + b)
                        .collect(),
                }
            }
        }

        impl std::ops::Sub for &$ty {
            type Output = $ty;

            fn sub(self, rhs: &$ty) -> $ty {
                assert!(self.config.same_geometry(&rhs.config), "geometry mismatch");
                $ty {
                    config: self.config.clone(),
                    data: self
                        .data
                        .iter()
                        .zip(&rhs.data)
                        .map(|(a, b)| a - b)
                        .collect(),
                }
            }
        }

        impl std::ops::Mul<f64> for &$ty {
            type Output = $ty;

            fn mul(self, k: f64) -> $ty {
                $ty {
                    config: self.config.clone(),
                    data: self.data.iter().map(|a| a * k).collect(),
                }
            }
        }
    };
}

/// Scene-domain spectral cube, `H x W x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    config: SceneConfig,
    data: Vec<f64>,
}

banded_accessors!(HsiCube, width, "hyperspectral cube");

/// Detector-domain cube, `H x W' x C`. Band `c` is supported on columns
/// `[d*c, d*c + W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCube {
    config: SceneConfig,
    data: Vec<f64>,
}

banded_accessors!(ShiftedCube, measurement_width, "shifted cube");

impl ShiftedCube {
    /// Column range of band `c` that overlaps the scene.
    pub fn support(&self, band: usize) -> std::ops::Range<usize> {
        let off = self.config.band_offset(band);
        off..off + self.config.width()
    }
}

/// Detector image, `H x W'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    config: SceneConfig,
    data: Vec<f64>,
}

impl Measurement {
    pub fn new(config: &SceneConfig, data: Vec<f64>) -> Result<Self> {
        let meas = Measurement {
            config: config.clone(),
            data,
        };
        meas.validate(config)?;
        Ok(meas)
    }

    pub fn zeros(config: &SceneConfig) -> Self {
        Measurement {
            config: config.clone(),
            data: vec![0.0; config.measurement_len()],
        }
    }

    pub fn from_fn(config: &SceneConfig, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let wp = config.measurement_width();
        let data = (0..config.height())
            .flat_map(|u| (0..wp).map(move |v| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self::new(config, data)
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.config.measurement_width() + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |self - other|`.
    pub fn max_abs_diff(&self, other: &Measurement) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn sub(&self, other: &Measurement) -> Measurement {
        assert!(
            self.config.same_geometry(&other.config),
            "geometry mismatch"
        );
        Measurement {
            config: self.config.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Validate for Measurement {
    fn validate(&self, config: &SceneConfig) -> Result<()> {
        if !self.config.same_geometry(config) {
            return Err(mismatch(
                "measurement",
                config.describe(),
                self.config.describe(),
            ));
        }
        if self.data.len() != config.measurement_len() {
            return Err(mismatch(
                "measurement",
                config.measurement_len(),
                self.data.len(),
            ));
        }
        check_finite("measurement", &self.data)
    }
}

/// Two-dimensional coded aperture pattern. Values are nonnegative; binary
/// masks are the usual case.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedAperture {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl CodedAperture {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig(
                "mask dimensions must be at least 1".into(),
            ));
        }
        if data.len() != height * width {
            return Err(mismatch("coded aperture", height * width, data.len()));
        }
        check_finite("coded aperture", &data)?;
        if let Some(offset) = data.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "coded aperture value at offset {offset} is negative"
            )));
        }
        Ok(CodedAperture {
            height,
            width,
            data,
        })
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![1.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

impl Validate for CodedAperture {
    fn validate(&self, config: &SceneConfig) -> Result<()> {
        if self.height != config.height() || self.width != config.width() {
            return Err(mismatch(
                "coded aperture",
                format!("{}x{}", config.height(), config.width()),
                format!("{}x{}", self.height, self.width),
            ));
        }
        check_finite("coded aperture", &self.data)
    }
}
