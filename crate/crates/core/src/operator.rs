//! Matrix-free CASSI sensing operator.
//!
//! The sensing matrix `Phi` of a CASSI system is a horizontal stack of
//! diagonal blocks, one per band, so `Phi Phi^T` is itself diagonal with
//! entries `sigma(u, v) = sum_c M(u, v, c)^2`. Every operator here is a
//! couple of element-wise passes over the shifted mask and that diagonal;
//! the dense matrix is never formed.
//!
//! Per-pixel sums over bands always run in ascending band order, so results
//! are bitwise reproducible.

use crate::error::{Error, Result};
use crate::tensor::{CodedAperture, HsiCube, Measurement, SceneConfig, ShiftedCube, Validate};

/// Translate each band of the mask right by `d*c` columns.
pub fn shift_mask(mask: &CodedAperture, config: &SceneConfig) -> Result<ShiftedCube> {
    mask.validate(config)?;
    let (h, w) = (config.height(), config.width());
    let wp = config.measurement_width();
    let mut out = ShiftedCube::zeros(config);
    for c in 0..config.bands() {
        let off = config.band_offset(c);
        let band = out.band_mut(c);
        for u in 0..h {
            band[u * wp + off..u * wp + off + w].copy_from_slice(&mask.data()[u * w..(u + 1) * w]);
        }
    }
    Ok(out)
}

/// Disperse a scene cube onto detector coordinates: band `c` moves right by
/// `d*c` columns, zero elsewhere.
pub fn shift_cube(cube: &HsiCube) -> ShiftedCube {
    let config = cube.config();
    let (h, w) = (config.height(), config.width());
    let wp = config.measurement_width();
    let mut out = ShiftedCube::zeros(config);
    for c in 0..config.bands() {
        let off = config.band_offset(c);
        let src = cube.band(c);
        let dst = out.band_mut(c);
        for u in 0..h {
            dst[u * wp + off..u * wp + off + w].copy_from_slice(&src[u * w..(u + 1) * w]);
        }
    }
    out
}

/// Left inverse of [`shift_cube`]: keep each band's supported columns.
pub fn unshift_cube(shifted: &ShiftedCube) -> HsiCube {
    let config = shifted.config();
    let (h, w) = (config.height(), config.width());
    let wp = config.measurement_width();
    let mut out = HsiCube::zeros(config);
    for c in 0..config.bands() {
        let off = config.band_offset(c);
        let src = shifted.band(c);
        let dst = out.band_mut(c);
        for u in 0..h {
            dst[u * w..(u + 1) * w].copy_from_slice(&src[u * wp + off..u * wp + off + w]);
        }
    }
    out
}

/// The sensing operator `Phi` in matrix-free form.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    config: SceneConfig,
    shifted_mask: ShiftedCube,
    sigma: Vec<f64>,
    sigma_inv: Vec<f64>,
}

/// Build the operator and its Gram diagonal.
///
/// Fails with [`Error::MaskDegenerate`] at the first detector pixel (row-major
/// order) where no band carries mask energy; such a `Phi` is rank deficient.
pub fn build_operator(mask: &CodedAperture, config: &SceneConfig) -> Result<SensingOperator> {
    SensingOperator::new(mask, config)
}

impl SensingOperator {
    pub fn new(mask: &CodedAperture, config: &SceneConfig) -> Result<Self> {
        let shifted_mask = shift_mask(mask, config)?;
        let plane = config.measurement_len();
        let mut sigma = vec![0.0; plane];
        for c in 0..config.bands() {
            for (s, m) in sigma.iter_mut().zip(shifted_mask.band(c)) {
                *s += m * m;
            }
        }
        let wp = config.measurement_width();
        if let Some(i) = sigma.iter().position(|&s| s <= 0.0) {
            return Err(Error::MaskDegenerate {
                row: i / wp,
                col: i % wp,
            });
        }
        let sigma_inv = sigma.iter().map(|s| 1.0 / s).collect();
        Ok(SensingOperator {
            config: config.clone(),
            shifted_mask,
            sigma,
            sigma_inv,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn shifted_mask(&self) -> &ShiftedCube {
        &self.shifted_mask
    }

    /// Diagonal of `Phi Phi^T`, row-major over the detector.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Element-wise reciprocal of [`Self::sigma`].
    pub fn sigma_inv(&self) -> &[f64] {
        &self.sigma_inv
    }

    /// Heap bytes held by the operator.
    pub fn memory_bytes(&self) -> usize {
        std::mem::size_of::<f64>()
            * (self.shifted_mask.data().len() + self.sigma.len() + self.sigma_inv.len())
    }

    /// Fault injection for oracle self-tests: scales the first stored
    /// `sigma^-1` entry so the pseudo-inverse is wrong.
    #[doc(hidden)]
    pub fn corrupt_sigma_for_testing(&mut self, factor: f64) {
        self.sigma_inv[0] *= factor;
    }

    fn check_cube(&self, cube: &HsiCube) -> Result<()> {
        cube.validate(&self.config)
    }

    fn check_meas(&self, meas: &Measurement) -> Result<()> {
        meas.validate(&self.config)
    }

    /// `y = Phi x` with `x` given in scene coordinates.
    pub fn phi_apply(&self, cube: &HsiCube) -> Result<Measurement> {
        self.check_cube(cube)?;
        let cfg = &self.config;
        let (h, w, wp) = (cfg.height(), cfg.width(), cfg.measurement_width());
        let mut y = vec![0.0; cfg.measurement_len()];
        for c in 0..cfg.bands() {
            let off = cfg.band_offset(c);
            let x = cube.band(c);
            let m = self.shifted_mask.band(c);
            for u in 0..h {
                let row = u * wp + off;
                for j in 0..w {
                    y[row + j] += x[u * w + j] * m[row + j];
                }
            }
        }
        Measurement::new(cfg, y)
    }

    /// `y = Phi x` with `x` in detector coordinates. Entries outside each
    /// band's support are multiplied by a zero mask and have no effect.
    pub fn phi_apply_shifted(&self, shifted: &ShiftedCube) -> Result<Measurement> {
        shifted.validate(&self.config)?;
        let mut y = vec![0.0; self.config.measurement_len()];
        for c in 0..self.config.bands() {
            for ((acc, x), m) in y
                .iter_mut()
                .zip(shifted.band(c))
                .zip(self.shifted_mask.band(c))
            {
                *acc += x * m;
            }
        }
        Measurement::new(&self.config, y)
    }

    /// Shared kernel of the transpose-like maps: returns, in scene
    /// coordinates, `M(u, j + d c, c) * weight(u, j + d c) * meas(u, j + d c)`.
    fn back_project(&self, meas: &[f64], weight: Option<&[f64]>) -> HsiCube {
        let cfg = &self.config;
        let (h, w, wp) = (cfg.height(), cfg.width(), cfg.measurement_width());
        let mut out = HsiCube::zeros(cfg);
        for c in 0..cfg.bands() {
            let off = cfg.band_offset(c);
            let m = self.shifted_mask.band(c);
            let dst = out.band_mut(c);
            for u in 0..h {
                let row = u * wp + off;
                let dst_row = &mut dst[u * w..(u + 1) * w];
                match weight {
                    Some(s) => {
                        for (j, o) in dst_row.iter_mut().enumerate() {
                            *o = m[row + j] * (meas[row + j] * s[row + j]);
                        }
                    }
                    None => {
                        for (j, o) in dst_row.iter_mut().enumerate() {
                            *o = m[row + j] * meas[row + j];
                        }
                    }
                }
            }
        }
        out
    }

    /// `Phi^T y`, returned in scene coordinates.
    pub fn phi_t_apply(&self, meas: &Measurement) -> Result<HsiCube> {
        self.check_meas(meas)?;
        Ok(self.back_project(meas.data(), None))
    }

    /// `Phi^T y` in detector coordinates (zero off support).
    pub fn phi_t_apply_shifted(&self, meas: &Measurement) -> Result<ShiftedCube> {
        self.check_meas(meas)?;
        let mut out = ShiftedCube::zeros(&self.config);
        for c in 0..self.config.bands() {
            let m = self.shifted_mask.band(c);
            for ((o, mv), y) in out.band_mut(c).iter_mut().zip(m).zip(meas.data()) {
                *o = mv * y;
            }
        }
        Ok(out)
    }

    /// `Phi^+ y = Phi^T (Sigma^-1 y)`: the minimum-norm solution of
    /// `Phi x = y`.
    pub fn pinv_apply(&self, meas: &Measurement) -> Result<HsiCube> {
        self.check_meas(meas)?;
        Ok(self.back_project(meas.data(), Some(&self.sigma_inv)))
    }

    /// `Phi^+ Phi x`, the orthogonal projection onto the row space of `Phi`.
    pub fn range_project(&self, cube: &HsiCube) -> Result<HsiCube> {
        let y = self.phi_apply(cube)?;
        self.pinv_apply(&y)
    }

    /// `(I - Phi^+ Phi) x`.
    pub fn null_project(&self, cube: &HsiCube) -> Result<HsiCube> {
        let range = self.range_project(cube)?;
        Ok(cube - &range)
    }

    /// `Phi^T(Sigma^-1 y) + [q - Phi^T Sigma^-1 (Phi q)]`.
    ///
    /// Keeps the null-space part of `q` and replaces its range-space part
    /// with the one fixed by `y`, so `Phi` of the result equals `y` for every
    /// `q`.
    pub fn rnd_combine(&self, meas: &Measurement, q: &HsiCube) -> Result<HsiCube> {
        self.check_meas(meas)?;
        let phi_q = self.phi_apply(q)?;
        let residual: Vec<f64> = meas
            .data()
            .iter()
            .zip(phi_q.data())
            .map(|(y, p)| y - p)
            .collect();
        let correction = self.back_project(&residual, Some(&self.sigma_inv));
        Ok(q + &correction)
    }
}
