//! Reconstruction: candidate generation and range-null space correction.
//!
//! [`gap_solve`] is a generalized alternating projection loop that stands in
//! for a learned generator. Its output `q` is then passed through
//! [`SensingOperator::rnd_combine`], which keeps the null-space content of
//! `q` and forces the range-space content to agree with the measurement.

mod init;
mod tv;

pub use init::{crop_to_scene, init_repeat, init_roll, init_shift, InitStrategy};
pub use tv::{anisotropic_tv, tv_denoise, TvPrior};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::SensingOperator;
use crate::tensor::{HsiCube, Measurement, SceneConfig, ShiftedCube, Validate};

/// A denoiser used as an implicit image prior.
///
/// Implementations must preserve the input shape, return finite values, and
/// act as the identity when `strength` is zero. The input may be the
/// on-support scene cube or, when cropping is disabled, a cube spanning the
/// full detector width.
pub trait Prior: Sync {
    fn denoise(&self, cube: &HsiCube, strength: f64) -> Result<HsiCube>;
}

/// Prior that returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPrior;

impl Prior for IdentityPrior {
    fn denoise(&self, cube: &HsiCube, _strength: f64) -> Result<HsiCube> {
        Ok(cube.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub iterations: usize,
    pub tv_weight: f64,
    pub tv_inner_iterations: usize,
    pub init: InitStrategy,
    pub crop_denoiser_input: bool,
    /// Stop early once the relative change between iterates drops below
    /// this value. Zero runs every iteration.
    pub convergence_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            iterations: 60,
            tv_weight: 0.1,
            tv_inner_iterations: 20,
            init: InitStrategy::Roll,
            crop_denoiser_input: true,
            convergence_tol: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 || self.tv_inner_iterations == 0 {
            return Err(Error::InvalidConfig(
                "iteration counts must be at least 1".into(),
            ));
        }
        if !(self.tv_weight >= 0.0 && self.tv_weight.is_finite()) {
            return Err(Error::InvalidConfig(
                "tv_weight must be finite and nonnegative".into(),
            ));
        }
        if !(self.convergence_tol >= 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::InvalidConfig(
                "convergence_tol must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-run diagnostics from [`gap_solve_with_stats`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// `|y - Phi x_k|_2` after each iteration.
    pub residual_history: Vec<f64>,
    /// Voxels passed to the denoiser per iteration.
    pub denoised_voxels_per_iteration: usize,
}

/// Roll every band of a detector-domain cube left by `d*c` (cyclic over
/// `W'`), giving a scene-aligned `H x W' x C` cube whose first `W` columns are
/// the on-support region and whose last `W' - W` columns are the dispersed
/// margin.
fn roll_back(shifted: &ShiftedCube) -> Result<HsiCube> {
    let cfg = shifted.config();
    let wp = cfg.measurement_width();
    let wide = SceneConfig::new(cfg.height(), wp, cfg.bands(), cfg.shift_step())?;
    let mut data = shifted.data().to_vec();
    for (c, band) in data.chunks_exact_mut(cfg.height() * wp).enumerate() {
        for row in band.chunks_exact_mut(wp) {
            row.rotate_left(cfg.band_offset(c) % wp);
        }
    }
    HsiCube::new(&wide, data)
}

/// Inverse of [`roll_back`].
fn roll_forward(wide: HsiCube, config: &SceneConfig) -> Result<ShiftedCube> {
    let wp = config.measurement_width();
    let mut data = wide.into_data();
    for (c, band) in data.chunks_exact_mut(config.height() * wp).enumerate() {
        for row in band.chunks_exact_mut(wp) {
            row.rotate_right(config.band_offset(c) % wp);
        }
    }
    ShiftedCube::new(config, data)
}

/// Run the denoiser on the iterate, honoring the crop setting.
///
/// The denoiser always sees scene-aligned bands. Without cropping it gets the
/// full detector width, margin last. With cropping it gets only the `W`
/// on-support columns, and the margin of the pre-denoise iterate is kept.
fn denoise_step(x: &ShiftedCube, prior: &dyn Prior, cfg: &SolverConfig) -> Result<ShiftedCube> {
    let config = x.config();
    if cfg.crop_denoiser_input {
        let scene = crop_to_scene(x);
        let den = prior.denoise(&scene, cfg.tv_weight)?;
        den.validate(config)?;
        let (h, w, wp) = (config.height(), config.width(), config.measurement_width());
        let mut data = x.data().to_vec();
        for c in 0..config.bands() {
            let off = config.band_offset(c);
            let band = &mut data[c * h * wp..(c + 1) * h * wp];
            let src = den.band(c);
            for u in 0..h {
                band[u * wp + off..u * wp + off + w].copy_from_slice(&src[u * w..(u + 1) * w]);
            }
        }
        ShiftedCube::new(config, data)
    } else {
        let wide = roll_back(x)?;
        let den = prior.denoise(&wide, cfg.tv_weight)?;
        den.validate(wide.config())?;
        roll_forward(den, config)
    }
}

/// Starting cube for the solver: the chosen init applied to the
/// per-pixel normalized measurement `y / sigma`.
///
/// Normalizing puts the start on the scale of scene values; a raw
/// measurement sums roughly `C` bands per pixel.
pub fn initial_iterate(
    op: &SensingOperator,
    meas: &Measurement,
    strategy: InitStrategy,
) -> Result<ShiftedCube> {
    meas.validate(op.config())?;
    let normalized: Vec<f64> = meas
        .data()
        .iter()
        .zip(op.sigma_inv())
        .map(|(y, s)| y * s)
        .collect();
    let normalized = Measurement::new(op.config(), normalized)?;
    strategy.apply(&normalized, op.config())
}

/// A non-finite intermediate inside the solver means the iterate blew up.
fn diverged_at(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFiniteValue { .. } => Error::Diverged { iteration },
        other => other,
    }
}

/// GAP iteration from the configured initialization.
pub fn gap_solve(
    op: &SensingOperator,
    meas: &Measurement,
    prior: &dyn Prior,
    cfg: &SolverConfig,
) -> Result<HsiCube> {
    gap_solve_with_stats(op, meas, prior, cfg).map(|(x, _)| x)
}

pub fn gap_solve_with_stats(
    op: &SensingOperator,
    meas: &Measurement,
    prior: &dyn Prior,
    cfg: &SolverConfig,
) -> Result<(HsiCube, SolveStats)> {
    let x0 = initial_iterate(op, meas, cfg.init).map_err(|e| diverged_at(e, 0))?;
    gap_solve_from(op, meas, prior, cfg, x0)
}

/// GAP iteration from an explicit detector-domain starting point:
///
/// ```text
/// x <- denoise(x + Phi^T (Sigma^-1 (y - Phi x)))
/// ```
pub fn gap_solve_from(
    op: &SensingOperator,
    meas: &Measurement,
    prior: &dyn Prior,
    cfg: &SolverConfig,
    x0: ShiftedCube,
) -> Result<(HsiCube, SolveStats)> {
    cfg.check()?;
    meas.validate(op.config())?;
    x0.validate(op.config())?;
    let config = op.config();
    let denoised_voxels = if cfg.crop_denoiser_input {
        config.scene_len()
    } else {
        config.measurement_len() * config.bands()
    };
    let mut stats = SolveStats {
        denoised_voxels_per_iteration: denoised_voxels,
        ..SolveStats::default()
    };

    let mut x = x0;
    for k in 0..cfg.iterations {
        let step = || -> Result<ShiftedCube> {
            let residual = meas.sub(&op.phi_apply_shifted(&x)?);
            let weighted: Vec<f64> = residual
                .data()
                .iter()
                .zip(op.sigma_inv())
                .map(|(r, s)| r * s)
                .collect();
            let correction = op.phi_t_apply_shifted(&Measurement::new(config, weighted)?)?;
            denoise_step(&(&x + &correction), prior, cfg)
        };
        let next = step().map_err(|e| diverged_at(e, k))?;
        if next.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: k });
        }

        let change = (&next - &x).norm();
        let scale = next.norm();
        x = next;
        stats.iterations = k + 1;
        stats
            .residual_history
            .push(meas.sub(&op.phi_apply_shifted(&x)?).norm());

        if cfg.convergence_tol > 0.0 && change <= cfg.convergence_tol * scale.max(f64::MIN_POSITIVE)
        {
            break;
        }
    }
    Ok((crop_to_scene(&x), stats))
}

/// GAP candidate followed by the range-null space correction, so the output
/// reproduces `meas` exactly (to rounding) regardless of the prior.
pub fn rnd_reconstruct(
    op: &SensingOperator,
    meas: &Measurement,
    prior: &dyn Prior,
    cfg: &SolverConfig,
) -> Result<HsiCube> {
    rnd_reconstruct_with_stats(op, meas, prior, cfg).map(|(x, _)| x)
}

pub fn rnd_reconstruct_with_stats(
    op: &SensingOperator,
    meas: &Measurement,
    prior: &dyn Prior,
    cfg: &SolverConfig,
) -> Result<(HsiCube, SolveStats)> {
    let (q, stats) = gap_solve_with_stats(op, meas, prior, cfg)?;
    Ok((op.rnd_combine(meas, &q)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_operator, shift_cube};
    use crate::tensor::CodedAperture;

    fn instance() -> (SensingOperator, HsiCube, Measurement) {
        let cfg = SceneConfig::new(4, 4, 2, 1).unwrap();
        let mask = CodedAperture::new(
            4,
            4,
            vec![
                1., 0., 1., 1., 1., 1., 0., 1., 1., 1., 0., 1., 1., 0., 1., 1.,
            ],
        )
        .unwrap();
        let op = build_operator(&mask, &cfg).unwrap();
        let x = HsiCube::from_fn(&cfg, |u, v, c| {
            0.1 + 0.05 * (u * 4 + v) as f64 + 0.2 * c as f64
        })
        .unwrap();
        let y = op.phi_apply(&x).unwrap();
        (op, x, y)
    }

    #[test]
    fn identity_prior_residual_is_non_increasing() {
        let (op, _, y) = instance();
        for init in [
            InitStrategy::Shift,
            InitStrategy::Repeat,
            InitStrategy::Roll,
        ] {
            let cfg = SolverConfig {
                iterations: 8,
                init,
                ..SolverConfig::default()
            };
            let (_, stats) = gap_solve_with_stats(&op, &y, &IdentityPrior, &cfg).unwrap();
            let tol = 1e-12 * y.norm();
            for pair in stats.residual_history.windows(2) {
                assert!(pair[1] <= pair[0] + tol, "{:?}", stats.residual_history);
            }
            assert!(*stats.residual_history.last().unwrap() <= tol);
        }
    }

    #[test]
    fn identity_prior_from_pinv_is_fixed_point() {
        let (op, _, y) = instance();
        let x0 = op.pinv_apply(&y).unwrap();
        let cfg = SolverConfig {
            iterations: 5,
            ..SolverConfig::default()
        };
        let (x, _) = gap_solve_from(&op, &y, &IdentityPrior, &cfg, shift_cube(&x0)).unwrap();
        assert!((&x - &x0).max_abs() <= 1e-12 * x0.max_abs());
    }

    struct NanPrior;

    impl Prior for NanPrior {
        fn denoise(&self, cube: &HsiCube, _: f64) -> Result<HsiCube> {
            let mut data = cube.data().to_vec();
            data[0] = f64::NAN;
            HsiCube::new(cube.config(), data)
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (op, _, y) = instance();
        let err = gap_solve(&op, &y, &NanPrior, &SolverConfig::default()).unwrap_err();
        assert_eq!(err, Error::Diverged { iteration: 0 });
    }

    #[test]
    fn overflowing_normalization_is_divergence() {
        // Sigma is subnormal, so Sigma^-1 overflows before the first step.
        let cfg = SceneConfig::new(2, 2, 2, 1).unwrap();
        let op = build_operator(&CodedAperture::new(2, 2, vec![1e-160; 4]).unwrap(), &cfg).unwrap();
        let y = Measurement::new(&cfg, vec![1.0; 6]).unwrap();
        let err = gap_solve(&op, &y, &IdentityPrior, &SolverConfig::default()).unwrap_err();
        assert_eq!(err, Error::Diverged { iteration: 0 });
    }

    struct ZeroPrior;

    impl Prior for ZeroPrior {
        fn denoise(&self, cube: &HsiCube, _: f64) -> Result<HsiCube> {
            Ok(HsiCube::zeros(cube.config()))
        }
    }

    #[test]
    fn rnd_with_zero_candidate_is_pinv() {
        let (op, _, y) = instance();
        let out = rnd_reconstruct(&op, &y, &ZeroPrior, &SolverConfig::default()).unwrap();
        assert!((&out - &op.pinv_apply(&y).unwrap()).max_abs() <= 1e-14);
    }

    #[test]
    fn rnd_output_is_data_consistent() {
        let (op, _, y) = instance();
        for crop in [true, false] {
            let cfg = SolverConfig {
                iterations: 10,
                tv_weight: 0.2,
                crop_denoiser_input: crop,
                ..SolverConfig::default()
            };
            let out = rnd_reconstruct(&op, &y, &TvPrior::default(), &cfg).unwrap();
            let r = op.phi_apply(&out).unwrap().max_abs_diff(&y);
            assert!(r <= 1e-8 * y.max_abs());
        }
    }

    #[test]
    fn convergence_tol_stops_early() {
        let (op, _, y) = instance();
        let cfg = SolverConfig {
            iterations: 50,
            convergence_tol: 1e-6,
            ..SolverConfig::default()
        };
        let (_, stats) = gap_solve_with_stats(&op, &y, &IdentityPrior, &cfg).unwrap();
        assert!(stats.iterations < 50);
    }

    #[test]
    fn denoised_voxel_count_follows_crop() {
        let (op, _, y) = instance();
        let mut cfg = SolverConfig {
            iterations: 1,
            ..SolverConfig::default()
        };
        let (_, cropped) = gap_solve_with_stats(&op, &y, &IdentityPrior, &cfg).unwrap();
        cfg.crop_denoiser_input = false;
        let (_, full) = gap_solve_with_stats(&op, &y, &IdentityPrior, &cfg).unwrap();
        assert_eq!(cropped.denoised_voxels_per_iteration, 4 * 4 * 2);
        assert_eq!(full.denoised_voxels_per_iteration, 4 * 5 * 2);
    }

    #[test]
    fn roll_back_aligns_support_first() {
        let cfg = SceneConfig::new(2, 3, 3, 1).unwrap();
        let x = HsiCube::from_fn(&cfg, |u, v, c| (1 + u * 10 + v + 100 * c) as f64).unwrap();
        let shifted = shift_cube(&x);
        let wide = roll_back(&shifted).unwrap();
        for c in 0..3 {
            for u in 0..2 {
                for v in 0..3 {
                    assert_eq!(wide.get(u, v, c), x.get(u, v, c));
                }
                assert_eq!(wide.get(u, 3, c), 0.0);
                assert_eq!(wide.get(u, 4, c), 0.0);
            }
        }
        assert_eq!(roll_forward(wide, &cfg).unwrap(), shifted);
    }

    #[test]
    fn bad_solver_config_rejected() {
        let (op, _, y) = instance();
        let cfg = SolverConfig {
            iterations: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            gap_solve(&op, &y, &IdentityPrior, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
