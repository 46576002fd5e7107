//! Seeded synthetic masks, scenes and detector noise.
//!
//! Every generator is a pure function of its parameters and seed. Streams
//! come from ChaCha8 seeded with `seed_from_u64`; uniform reals use the top
//! 53 bits of `next_u64`. That mapping is stable across platforms and is what
//! golden files depend on.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{CodedAperture, HsiCube, Measurement, SceneConfig, Validate};

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, n)` by multiply-shift.
fn below(rng: &mut impl RngCore, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// i.i.d. Bernoulli(`density`) binary mask.
pub fn gen_mask(height: usize, width: usize, density: f64, seed: u64) -> Result<CodedAperture> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "mask density {density} not in (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..height * width)
        .map(|_| if unit(&mut rng) < density { 1.0 } else { 0.0 })
        .collect();
    CodedAperture::new(height, width, data)
}

/// Make a mask usable as a full-row-rank sensing operator for `config`.
///
/// Every detector column `v < d` (and `v >= W' - d`) is reached by a single
/// band, so a random mask almost always leaves some detector pixel dark. For
/// each dark pixel, in row-major order, the mask pixel feeding it from the
/// lowest contributing band is set to 1. Returns the repaired mask and the
/// number of pixels changed.
pub fn repair_full_rank(
    mask: &CodedAperture,
    config: &SceneConfig,
) -> Result<(CodedAperture, usize)> {
    mask.validate(config)?;
    let (h, w, wp) = (config.height(), config.width(), config.measurement_width());
    let d = config.shift_step();
    let mut data = mask.data().to_vec();
    let mut changed = 0;
    for u in 0..h {
        for v in 0..wp {
            let bands = (0..config.bands()).filter(|&c| v >= d * c && v - d * c < w);
            let mut first = None;
            let mut lit = false;
            for c in bands {
                first.get_or_insert(c);
                if data[u * w + v - d * c] > 0.0 {
                    lit = true;
                    break;
                }
            }
            if !lit {
                let c = first.expect("every detector column is reached by some band");
                data[u * w + v - d * c] = 1.0;
                changed += 1;
            }
        }
    }
    Ok((CodedAperture::new(h, w, data)?, changed))
}

/// Uniformly placed `size x size` window of `mask`.
pub fn crop_mask(mask: &CodedAperture, size: usize, seed: u64) -> Result<CodedAperture> {
    let (h, w) = (mask.height(), mask.width());
    if size == 0 || size > h || size > w {
        return Err(Error::CropTooLarge {
            size,
            height: h,
            width: w,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = below(&mut rng, h - size + 1);
    let left = below(&mut rng, w - size + 1);
    let mut data = Vec::with_capacity(size * size);
    for u in top..top + size {
        data.extend_from_slice(&mask.data()[u * w + left..u * w + left + size]);
    }
    CodedAperture::new(size, size, data)
}

/// Piecewise-smooth test scene.
///
/// A constant background plus `complexity` axis-aligned rectangles. Each
/// rectangle carries a quadratic spectral profile over the normalized band
/// index and a gentle linear spatial ramp. Values are clamped to `[0, 1]`.
pub fn gen_scene(config: &SceneConfig, complexity: usize, seed: u64) -> Result<HsiCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, bands) = (config.height(), config.width(), config.bands());
    let background = 0.1 + 0.2 * unit(&mut rng);
    let mut data = vec![background; h * w * bands];

    for _ in 0..complexity {
        let rh = 1 + below(&mut rng, h.div_ceil(2).max(1));
        let rw = 1 + below(&mut rng, w.div_ceil(2).max(1));
        let top = below(&mut rng, h - rh.min(h) + 1);
        let left = below(&mut rng, w - rw.min(w) + 1);
        let a0 = 0.2 + 0.6 * unit(&mut rng);
        let a1 = 0.6 * (unit(&mut rng) - 0.5);
        let a2 = 0.6 * (unit(&mut rng) - 0.5);
        let ramp_u = 0.1 * (unit(&mut rng) - 0.5);
        let ramp_v = 0.1 * (unit(&mut rng) - 0.5);
        for c in 0..bands {
            let t = if bands > 1 {
                c as f64 / (bands - 1) as f64
            } else {
                0.0
            };
            let level = a0 + a1 * t + a2 * t * t;
            for u in top..(top + rh).min(h) {
                let fu = (u - top) as f64 / rh as f64;
                for v in left..(left + rw).min(w) {
                    let fv = (v - left) as f64 / rw as f64;
                    data[(c * h + u) * w + v] = (level + ramp_u * fu + ramp_v * fv).clamp(0.0, 1.0);
                }
            }
        }
    }
    HsiCube::new(config, data)
}

/// Detector shot-noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Detector bit depth; the full-scale value maps to `2^bits - 1` counts.
    pub shot_bits: u32,
    pub seed: u64,
    /// Fixed full-scale value. When `None` the measurement maximum is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_scale: Option<f64>,
}

impl NoiseSpec {
    pub fn new(shot_bits: u32, seed: u64) -> Result<Self> {
        let spec = NoiseSpec {
            shot_bits,
            seed,
            full_scale: None,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=16).contains(&self.shot_bits) {
            return Err(Error::InvalidConfig(format!(
                "shot_bits {} not in [1, 16]",
                self.shot_bits
            )));
        }
        if let Some(fs) = self.full_scale {
            if !(fs > 0.0 && fs.is_finite()) {
                return Err(Error::InvalidConfig("full_scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Poisson photon noise.
///
/// The measurement is scaled so the full-scale value maps to
/// `2^shot_bits - 1` counts, each pixel is replaced by a Poisson draw with
/// that mean, and the result is scaled back. Pixel `i` draws from ChaCha8
/// stream `i` of the seed, so the output does not depend on evaluation order.
pub fn add_shot_noise(meas: &Measurement, spec: &NoiseSpec) -> Result<Measurement> {
    spec.check()?;
    if let Some(offset) = meas.data().iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeMeasurement {
            offset,
            value: meas.data()[offset],
        });
    }
    let full_scale = spec.full_scale.unwrap_or_else(|| meas.max_abs());
    if full_scale == 0.0 {
        return Ok(meas.clone());
    }
    let counts = ((1u64 << spec.shot_bits) - 1) as f64;
    let gain = counts / full_scale;
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = meas
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let lambda = v * gain;
            if lambda <= 0.0 {
                return 0.0;
            }
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            let poisson = Poisson::new(lambda).expect("positive finite rate");
            poisson.sample(&mut rng) / gain
        })
        .collect();
    Measurement::new(meas.config(), data)
}

/// Fixed synthetic benchmark: `count` scenes sharing one mask.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub config: SceneConfig,
    pub mask: CodedAperture,
    pub scenes: Vec<HsiCube>,
}

/// Seeds and geometry of the bundled suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub shift_step: usize,
    pub scenes: usize,
    pub complexity: usize,
    pub mask_density: f64,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            height: 32,
            width: 32,
            bands: 8,
            shift_step: 2,
            scenes: 10,
            complexity: 6,
            mask_density: 0.5,
            seed: 2024,
        }
    }
}

impl SuiteSpec {
    pub fn config(&self) -> Result<SceneConfig> {
        SceneConfig::new(self.height, self.width, self.bands, self.shift_step)
    }

    /// Seed used for the `i`-th scene.
    pub fn scene_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64 + 1)
    }

    pub fn build(&self) -> Result<SyntheticSuite> {
        let mask = gen_mask(self.height, self.width, self.mask_density, self.seed)?;
        self.build_with_mask(mask)
    }

    /// Same scenes, caller-provided mask. The mask is passed through
    /// [`repair_full_rank`].
    pub fn build_with_mask(&self, mask: CodedAperture) -> Result<SyntheticSuite> {
        let config = self.config()?;
        let (mask, _) = repair_full_rank(&mask, &config)?;
        let scenes = (0..self.scenes)
            .map(|i| gen_scene(&config, self.complexity, self.scene_seed(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticSuite {
            config,
            mask,
            scenes,
        })
    }
}

/// Random generator used by tests that need extra seeded draws.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fill a cube with uniform values in `[lo, hi)`.
pub fn random_cube(config: &SceneConfig, lo: f64, hi: f64, seed: u64) -> Result<HsiCube> {
    let mut rng = seeded_rng(seed);
    HsiCube::from_fn(config, |_, _, _| lo + (hi - lo) * rng.random::<f64>())
}
