//! Expanding a 2D measurement into a detector-domain starting cube.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::operator::unshift_cube;
use crate::tensor::{HsiCube, Measurement, SceneConfig, ShiftedCube, Validate};

/// How the measurement is replicated across bands for the first iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Replicate, then translate band `c` right by `d*c` with zero fill.
    Shift,
    /// Replicate verbatim.
    Repeat,
    /// Replicate, then cyclically rotate band `c` right by `d*c`.
    #[default]
    Roll,
}

impl InitStrategy {
    pub fn apply(self, meas: &Measurement, config: &SceneConfig) -> Result<ShiftedCube> {
        match self {
            InitStrategy::Shift => init_shift(meas, config),
            InitStrategy::Repeat => init_repeat(meas, config),
            InitStrategy::Roll => init_roll(meas, config),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Shift => "shift",
            InitStrategy::Repeat => "repeat",
            InitStrategy::Roll => "roll",
        }
    }
}

impl std::str::FromStr for InitStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shift" => Ok(InitStrategy::Shift),
            "repeat" => Ok(InitStrategy::Repeat),
            "roll" => Ok(InitStrategy::Roll),
            other => Err(format!(
                "unknown init strategy '{other}' (expected shift, repeat or roll)"
            )),
        }
    }
}

fn replicate(
    meas: &Measurement,
    config: &SceneConfig,
    mut row_fill: impl FnMut(&[f64], &mut [f64], usize),
) -> Result<ShiftedCube> {
    meas.validate(config)?;
    let wp = config.measurement_width();
    let mut out = ShiftedCube::zeros(config);
    for c in 0..config.bands() {
        let shift = config.band_offset(c);
        let band = out.band_mut(c);
        for (src, dst) in meas.data().chunks_exact(wp).zip(band.chunks_exact_mut(wp)) {
            row_fill(src, dst, shift);
        }
    }
    Ok(out)
}

/// `Z_s(u, v, c) = y(u, v - d c)` where `v - d c >= 0`, else 0.
pub fn init_shift(meas: &Measurement, config: &SceneConfig) -> Result<ShiftedCube> {
    replicate(meas, config, |src, dst, shift| {
        let n = src.len();
        dst[shift..].copy_from_slice(&src[..n - shift]);
    })
}

/// Every band equals the measurement.
pub fn init_repeat(meas: &Measurement, config: &SceneConfig) -> Result<ShiftedCube> {
    replicate(meas, config, |src, dst, _| dst.copy_from_slice(src))
}

/// `Z_r(u, v, c) = y(u, (v - d c) mod W')`.
///
/// The rotation is taken over the full detector width so every band is a
/// permutation of the measurement row.
pub fn init_roll(meas: &Measurement, config: &SceneConfig) -> Result<ShiftedCube> {
    replicate(meas, config, |src, dst, shift| {
        dst.copy_from_slice(src);
        dst.rotate_right(shift % src.len());
    })
}

/// Keep only the on-support `H x W x C` region of a detector-domain cube.
pub fn crop_to_scene(shifted: &ShiftedCube) -> HsiCube {
    unshift_cube(shifted)
}
