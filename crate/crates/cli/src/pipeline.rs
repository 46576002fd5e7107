//! Reconstruction dispatch and synthetic-suite evaluation shared by the
//! `reconstruct` and `ablate` commands.

use cassi_core::metrics::evaluate;
use cassi_core::recon::{gap_solve_with_stats, InitStrategy, SolverConfig, TvPrior};
use cassi_core::sim::{add_shot_noise, NoiseSpec, SyntheticSuite};
use cassi_core::{HsiCube, Measurement, Result, SensingOperator};
use rayon::prelude::*;

use crate::config::Method;

/// Output of one reconstruction plus its data-consistency figures.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub cube: HsiCube,
    pub iterations: usize,
    pub denoised_voxels_per_iteration: usize,
    pub residual_l2: f64,
    pub residual_inf: f64,
    pub measurement_inf: f64,
}

impl Outcome {
    /// `|y - Phi x|_inf / |y|_inf`.
    pub fn residual_rel_inf(&self) -> f64 {
        if self.measurement_inf > 0.0 {
            self.residual_inf / self.measurement_inf
        } else {
            self.residual_inf
        }
    }
}

fn outcome(
    op: &SensingOperator,
    meas: &Measurement,
    cube: HsiCube,
    iterations: usize,
    voxels: usize,
) -> Result<Outcome> {
    let residual = meas.sub(&op.phi_apply(&cube)?);
    Ok(Outcome {
        residual_l2: residual.norm(),
        residual_inf: residual.max_abs(),
        measurement_inf: meas.max_abs(),
        cube,
        iterations,
        denoised_voxels_per_iteration: voxels,
    })
}

pub fn reconstruct(
    op: &SensingOperator,
    meas: &Measurement,
    method: Method,
    cfg: &SolverConfig,
) -> Result<Outcome> {
    let prior = TvPrior {
        inner_iterations: cfg.tv_inner_iterations,
    };
    match method {
        Method::Pinv => {
            let x = op.pinv_apply(meas)?;
            outcome(op, meas, x, 0, 0)
        }
        Method::GapTv => {
            let (x, stats) = gap_solve_with_stats(op, meas, &prior, cfg)?;
            outcome(
                op,
                meas,
                x,
                stats.iterations,
                stats.denoised_voxels_per_iteration,
            )
        }
        Method::RndGapTv => {
            let (q, stats) = gap_solve_with_stats(op, meas, &prior, cfg)?;
            let x = op.rnd_combine(meas, &q)?;
            outcome(
                op,
                meas,
                x,
                stats.iterations,
                stats.denoised_voxels_per_iteration,
            )
        }
    }
}

/// Shot noise applied to suite measurements; scene `i` uses `seed + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteNoise {
    pub shot_bits: u32,
    pub seed: u64,
}

pub fn suite_measurements(
    op: &SensingOperator,
    suite: &SyntheticSuite,
    noise: Option<SuiteNoise>,
) -> Result<Vec<Measurement>> {
    suite
        .scenes
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let y = op.phi_apply(x)?;
            match noise {
                None => Ok(y),
                Some(n) => add_shot_noise(
                    &y,
                    &NoiseSpec::new(n.shot_bits, n.seed.wrapping_add(i as u64))?,
                ),
            }
        })
        .collect()
}

/// Aggregate scores over the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteScore {
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub per_scene_psnr: Vec<f64>,
    /// `|y - Phi x|_inf / |y|_inf` per scene.
    pub per_scene_residual_rel: Vec<f64>,
    /// Worst of `per_scene_residual_rel`.
    pub max_residual_rel: f64,
    pub denoised_voxels_per_iteration: usize,
}

fn score(suite: &SyntheticSuite, outcomes: &[Outcome]) -> Result<SuiteScore> {
    let mut per_scene_psnr = Vec::with_capacity(outcomes.len());
    let mut ssim_total = 0.0;
    for (x, o) in suite.scenes.iter().zip(outcomes) {
        let m = evaluate(x, &o.cube)?;
        per_scene_psnr.push(m.psnr_db);
        ssim_total += m.ssim;
    }
    let n = outcomes.len() as f64;
    Ok(SuiteScore {
        mean_psnr: per_scene_psnr.iter().sum::<f64>() / n,
        mean_ssim: ssim_total / n,
        per_scene_psnr,
        per_scene_residual_rel: outcomes.iter().map(Outcome::residual_rel_inf).collect(),
        max_residual_rel: outcomes
            .iter()
            .map(Outcome::residual_rel_inf)
            .fold(0.0, f64::max),
        denoised_voxels_per_iteration: outcomes
            .first()
            .map_or(0, |o| o.denoised_voxels_per_iteration),
    })
}

/// Reconstruct every scene (in parallel, order preserved) and score it.
pub fn evaluate_suite(
    suite: &SyntheticSuite,
    method: Method,
    cfg: &SolverConfig,
    noise: Option<SuiteNoise>,
) -> Result<SuiteScore> {
    let op = SensingOperator::new(&suite.mask, &suite.config)?;
    let meas = suite_measurements(&op, suite, noise)?;
    let outcomes = meas
        .par_iter()
        .map(|y| reconstruct(&op, y, method, cfg))
        .collect::<Result<Vec<_>>>()?;
    score(suite, &outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub crop: bool,
    pub init: InitStrategy,
    pub rnd: bool,
    pub score: SuiteScore,
}

pub const ABLATION_CSV_HEADER: &str =
    "crop,init,rnd,psnr_db,ssim,residual_rel_inf,denoised_voxels_per_iter";

impl AblationRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:e},{}",
            self.crop,
            self.init.name(),
            self.rnd,
            self.score.mean_psnr,
            self.score.mean_ssim,
            self.score.max_residual_rel,
            self.score.denoised_voxels_per_iteration
        )
    }
}

/// Full crop x init x RND grid. Each (crop, init) cell runs the solver once;
/// the RND row reuses that candidate.
pub fn ablation_grid(suite: &SyntheticSuite, base: &SolverConfig) -> Result<Vec<AblationRow>> {
    let op = SensingOperator::new(&suite.mask, &suite.config)?;
    let meas = suite_measurements(&op, suite, None)?;
    let mut rows = Vec::with_capacity(12);
    for crop in [true, false] {
        for init in [
            InitStrategy::Shift,
            InitStrategy::Repeat,
            InitStrategy::Roll,
        ] {
            let cfg = SolverConfig {
                init,
                crop_denoiser_input: crop,
                ..base.clone()
            };
            let gap = meas
                .par_iter()
                .map(|y| reconstruct(&op, y, Method::GapTv, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let rnd = gap
                .iter()
                .zip(&meas)
                .map(|(o, y)| {
                    let x = op.rnd_combine(y, &o.cube)?;
                    outcome(&op, y, x, o.iterations, o.denoised_voxels_per_iteration)
                })
                .collect::<Result<Vec<_>>>()?;
            for (is_rnd, outcomes) in [(false, &gap), (true, &rnd)] {
                rows.push(AblationRow {
                    crop,
                    init,
                    rnd: is_rnd,
                    score: score(suite, outcomes)?,
                });
            }
        }
    }
    Ok(rows)
}
