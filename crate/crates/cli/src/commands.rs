use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cassi_core::dense::OracleInstance;
use cassi_core::metrics::{evaluate, MetricReport};
use cassi_core::recon::InitStrategy;
use cassi_core::sim::{
    add_shot_noise, crop_mask, gen_mask, gen_scene, random_cube, repair_full_rank, NoiseSpec,
    SuiteSpec,
};
use cassi_core::{HsiCube, SceneConfig, SensingOperator};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{Method, RunConfig};
use crate::cubefile::{write_atomic, CubeFile, Dtype};
use crate::error::CliError;
use crate::pipeline::{ablation_grid, reconstruct, ABLATION_CSV_HEADER};
use crate::report::Report;

/// Coded-aperture snapshot spectral imaging toolkit.
///
/// Exit codes: 0 success, 2 usage/parse/dimension error, 3 degenerate mask,
/// 4 solver divergence, 5 oracle tolerance breach.
#[derive(Debug, Parser)]
#[command(name = "cassi", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Form a detector measurement from a cube and a mask.
    Simulate(SimulateArgs),
    /// Reconstruct cubes from one or more measurements.
    Reconstruct(ReconstructArgs),
    /// PSNR and SSIM between two cubes.
    Metrics(MetricsArgs),
    /// Compare the matrix-free operator with the dense SVD oracle.
    OracleCheck(OracleArgs),
    /// Time the core kernels and report operator memory.
    Bench(BenchArgs),
    /// Generate, crop or repair coded apertures.
    #[command(subcommand)]
    Mask(MaskCommand),
    /// Generate a synthetic piecewise-smooth cube.
    Scene(SceneArgs),
    /// Write each band of a cube as an 8-bit PGM image.
    Export(ExportArgs),
    /// Run the crop x init x RND grid on the synthetic suite.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub shift_step: Option<usize>,
    /// Detector bit depth for Poisson shot noise; omit for a noiseless measurement.
    #[arg(long)]
    pub shot_noise_bits: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Value mapped to full detector scale (default: measurement maximum).
    #[arg(long)]
    pub full_scale: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Measurement file; repeat for a batch (processed concurrently).
    #[arg(long, required = true)]
    pub meas: Vec<PathBuf>,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub shift_step: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub tv_iters: Option<usize>,
    #[arg(long)]
    pub init: Option<InitStrategy>,
    /// Denoise the full detector-width cube instead of the on-support region.
    #[arg(long)]
    pub no_crop: bool,
    #[arg(long)]
    pub convergence_tol: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
    /// Output cube; one per --meas, in the same order.
    #[arg(long, required = true)]
    pub out: Vec<PathBuf>,
    /// Report file; if given, one per --meas.
    #[arg(long)]
    pub report: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum MetricsFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricsFormat::Json)]
    pub format: MetricsFormat,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub bands: usize,
    #[arg(long)]
    pub shift_step: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub density: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Fault injection: scale one stored sigma^-1 entry by this factor.
    #[arg(long, hide = true)]
    pub corrupt_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 28)]
    pub bands: usize,
    #[arg(long, default_value_t = 2)]
    pub shift_step: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum MaskCommand {
    /// Bernoulli(density) binary mask.
    Gen {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random size x size window.
    Crop {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Light the fewest mask pixels needed so no detector pixel is dark.
    Repair {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bands: usize,
        #[arg(long)]
        shift_step: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub bands: usize,
    #[arg(long, default_value_t = 6)]
    pub complexity: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Dtype::F64)]
    pub dtype: Dtype,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "band")]
    pub prefix: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub tv_iters: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Metrics(a) => metrics(a, stdout),
        Command::OracleCheck(a) => oracle_check(a, stdout),
        Command::Bench(a) => bench(a, stdout),
        Command::Mask(m) => mask(m),
        Command::Scene(a) => scene(a),
        Command::Export(a) => export(a),
        Command::Ablate(a) => ablate(a, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let flags = RunConfig {
        shift_step: a.shift_step,
        shot_noise_bits: a.shot_noise_bits,
        seed: a.seed,
        full_scale: a.full_scale,
        dtype: a.dtype,
        ..RunConfig::default()
    };
    let cfg = RunConfig::load(a.config.as_deref())?.overlay(&flags);
    let cube = CubeFile::read(&a.cube)?.into_cube(cfg.shift_step()?)?;
    let mask = CubeFile::read(&a.mask)?.into_mask()?;
    let op = SensingOperator::new(&mask, cube.config())?;
    let mut meas = op.phi_apply(&cube)?;
    if let Some(bits) = cfg.shot_noise_bits {
        let spec = NoiseSpec {
            shot_bits: bits,
            seed: cfg.seed.unwrap_or(0),
            full_scale: cfg.full_scale,
        };
        meas = add_shot_noise(&meas, &spec)?;
    }
    CubeFile::from_measurement(&meas, cfg.dtype.unwrap_or_default()).write(&a.out)
}

/// Scene geometry implied by a measurement `H x W'`, a mask `H x W` and `d`.
pub fn infer_config(
    meas: &CubeFile,
    mask_h: usize,
    mask_w: usize,
    d: usize,
) -> Result<SceneConfig, CliError> {
    if meas.bands != 1 {
        return Err(CliError::usage(format!(
            "measurement must have C = 1, found {}",
            meas.bands
        )));
    }
    if meas.height != mask_h {
        return Err(CliError::usage(format!(
            "measurement height {} does not match mask height {mask_h}",
            meas.height
        )));
    }
    if meas.width < mask_w || !(meas.width - mask_w).is_multiple_of(d) {
        return Err(CliError::usage(format!(
            "measurement width {} is not mask width {mask_w} plus a multiple of shift step {d}",
            meas.width
        )));
    }
    Ok(SceneConfig::new(
        mask_h,
        mask_w,
        (meas.width - mask_w) / d + 1,
        d,
    )?)
}

struct Job<'a> {
    meas: &'a Path,
    out: &'a Path,
    report: Option<&'a Path>,
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<(), CliError> {
    if a.out.len() != a.meas.len() {
        return Err(CliError::usage(format!(
            "{} --meas but {} --out",
            a.meas.len(),
            a.out.len()
        )));
    }
    if !a.report.is_empty() && a.report.len() != a.meas.len() {
        return Err(CliError::usage(format!(
            "{} --meas but {} --report",
            a.meas.len(),
            a.report.len()
        )));
    }
    let flags = RunConfig {
        shift_step: a.shift_step,
        method: a.method,
        iterations: a.iters,
        tv_weight: a.tv_weight,
        tv_inner_iterations: a.tv_iters,
        init: a.init,
        crop_denoiser_input: a.no_crop.then_some(false),
        convergence_tol: a.convergence_tol,
        dtype: a.dtype,
        ..RunConfig::default()
    };
    let cfg = RunConfig::load(a.config.as_deref())?.overlay(&flags);
    let d = cfg.shift_step()?;
    let method = cfg.method.unwrap_or_default();
    let solver = cfg.solver();
    solver.check()?;
    let mask = CubeFile::read(&a.mask)?.into_mask()?;

    let jobs: Vec<Job> = (0..a.meas.len())
        .map(|i| Job {
            meas: &a.meas[i],
            out: &a.out[i],
            report: a.report.get(i).map(PathBuf::as_path),
        })
        .collect();
    let results: Vec<Result<(), CliError>> = jobs
        .par_iter()
        .map(|job| {
            let file = CubeFile::read(job.meas)?;
            let config = infer_config(&file, mask.height(), mask.width(), d)?;
            let meas = file.into_measurement(&config)?;
            let op = SensingOperator::new(&mask, &config)?;
            let start = Instant::now();
            let result = reconstruct(&op, &meas, method, &solver)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            CubeFile::from_cube(&result.cube, cfg.dtype.unwrap_or_default()).write(job.out)?;
            if let Some(path) = job.report {
                let mut r = Report::new();
                r.push("measurement", job.meas.display())
                    .push("mask", a.mask.display())
                    .push("output", job.out.display())
                    .push("method", method.name())
                    .push("height", config.height())
                    .push("width", config.width())
                    .push("bands", config.bands())
                    .push("shift_step", d)
                    .push("measurement_width", config.measurement_width())
                    .push("iterations", solver.iterations)
                    .push("tv_weight", solver.tv_weight)
                    .push("tv_inner_iterations", solver.tv_inner_iterations)
                    .push("init", solver.init.name())
                    .push("crop_denoiser_input", solver.crop_denoiser_input)
                    .push("convergence_tol", solver.convergence_tol)
                    .push(
                        "dtype",
                        format!("{:?}", cfg.dtype.unwrap_or_default()).to_lowercase(),
                    )
                    .push("iterations_run", result.iterations)
                    .push(
                        "denoised_voxels_per_iteration",
                        result.denoised_voxels_per_iteration,
                    )
                    .push("residual_l2", result.residual_l2)
                    .push("residual_inf", result.residual_inf)
                    .push("measurement_inf", result.measurement_inf)
                    .push("residual_rel_inf", result.residual_rel_inf())
                    .push("wall_time_ms", format!("{wall_ms:.3}"));
                write_atomic(path, r.render().as_bytes())?;
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect()
}

fn band_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0)).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

/// CSV layout: `scope,psnr_db,ssim,mse`, one row per band (scope = band
/// index) followed by a `mean` row. The `mean` row's mse is over the whole
/// cube.
pub fn metrics_csv(reference: &HsiCube, test: &HsiCube, report: &MetricReport) -> String {
    let mut s = String::from("scope,psnr_db,ssim,mse\n");
    for c in 0..report.per_band_psnr.len() {
        s.push_str(&format!(
            "{c},{},{},{}\n",
            report.per_band_psnr[c],
            report.per_band_ssim[c],
            band_mse(reference.band(c), test.band(c))
        ));
    }
    s.push_str(&format!(
        "mean,{},{},{}\n",
        report.psnr_db, report.ssim, report.mse
    ));
    s
}

fn metrics(a: MetricsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    // Metrics do not depend on the shift step; any valid value will do.
    let reference = CubeFile::read(&a.reference)?.into_cube(1)?;
    let test = CubeFile::read(&a.test)?.into_cube(1)?;
    let report = evaluate(&reference, &test)?;
    let text = match a.format {
        MetricsFormat::Json => {
            serde_json::to_string_pretty(&report).map_err(|e| CliError::usage(e.to_string()))?
                + "\n"
        }
        MetricsFormat::Csv => metrics_csv(&reference, &test, &report),
    };
    emit(stdout, &text)
}

fn oracle_check(a: OracleArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = SceneConfig::new(a.height, a.width, a.bands, a.shift_step)?;
    let mut instance = OracleInstance::random(&config, a.density, a.seed)?;
    if let Some(f) = a.corrupt_sigma {
        instance.op.corrupt_sigma_for_testing(f);
    }
    let cmp = instance.compare()?;
    let mut text = String::new();
    for (name, err) in cmp.entries() {
        text.push_str(&format!("{name} = {err:e}\n"));
    }
    text.push_str(&format!("max = {:e}\n", cmp.max()));
    emit(stdout, &text)?;
    match cmp.first_breach(a.tolerance) {
        Some((operation, error)) => Err(CliError::OracleBreach {
            operation,
            error,
            tolerance: a.tolerance,
        }),
        None => Ok(()),
    }
}

/// Median and 95th percentile (nearest rank) of `samples`.
pub fn median_p95(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    (median, s[rank - 1])
}

fn time_ms<T>(
    reps: usize,
    mut f: impl FnMut() -> cassi_core::Result<T>,
) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(f()?);
        out.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(out)
}

fn bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if a.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let config = SceneConfig::new(a.height, a.width, a.bands, a.shift_step)?;
    let (mask, _) = repair_full_rank(&gen_mask(a.height, a.width, 0.5, a.seed)?, &config)?;
    let op = SensingOperator::new(&mask, &config)?;
    let x = random_cube(&config, 0.0, 1.0, a.seed.wrapping_add(1))?;
    let y = op.phi_apply(&x)?;
    let q = HsiCube::zeros(&config);

    let rows = [
        ("phi_apply", time_ms(a.reps, || op.phi_apply(&x))?),
        ("pinv_apply", time_ms(a.reps, || op.pinv_apply(&y))?),
        ("rnd_combine", time_ms(a.reps, || op.rnd_combine(&y, &q))?),
    ];
    let mut text = String::new();
    if a.reps == 1 {
        text.push_str("op,time_ms\n");
        for (name, t) in &rows {
            text.push_str(&format!("{name},{:.3}\n", t[0]));
        }
    } else {
        text.push_str("op,reps,median_ms,p95_ms\n");
        for (name, t) in &rows {
            let (median, p95) = median_p95(t);
            text.push_str(&format!("{name},{},{median:.3},{p95:.3}\n", a.reps));
        }
    }
    let dense_entries =
        config.measurement_len() as f64 * config.measurement_len() as f64 * config.bands() as f64;
    let mut r = Report::new();
    r.push("height", a.height)
        .push("width", a.width)
        .push("bands", a.bands)
        .push("shift_step", a.shift_step)
        .push("operator_bytes", op.memory_bytes())
        .push(
            "operator_mib",
            format!("{:.2}", op.memory_bytes() as f64 / (1u64 << 20) as f64),
        )
        .push("shifted_mask_f32_bytes", op.shifted_mask().data().len() * 4)
        .push("dense_phi_f32_bytes", format!("{dense_entries:.0}"))
        .push(
            "dense_phi_f32_gib",
            format!("{:.1}", dense_entries * 4.0 / (1u64 << 30) as f64),
        );
    text.push_str(&r.render());
    emit(stdout, &text)
}

fn mask(m: MaskCommand) -> Result<(), CliError> {
    match m {
        MaskCommand::Gen {
            height,
            width,
            density,
            seed,
            out,
        } => CubeFile::from_mask(&gen_mask(height, width, density, seed)?, Dtype::F64).write(&out),
        MaskCommand::Crop {
            input,
            size,
            seed,
            out,
        } => {
            let file = CubeFile::read(&input)?;
            let dtype = file.dtype;
            let cropped = crop_mask(&file.into_mask()?, size, seed)?;
            CubeFile::from_mask(&cropped, dtype).write(&out)
        }
        MaskCommand::Repair {
            input,
            bands,
            shift_step,
            out,
        } => {
            let file = CubeFile::read(&input)?;
            let dtype = file.dtype;
            let mask = file.into_mask()?;
            let config = SceneConfig::new(mask.height(), mask.width(), bands, shift_step)?;
            let (fixed, _) = repair_full_rank(&mask, &config)?;
            CubeFile::from_mask(&fixed, dtype).write(&out)
        }
    }
}

fn scene(a: SceneArgs) -> Result<(), CliError> {
    let config = SceneConfig::new(a.height, a.width, a.bands, 1)?;
    CubeFile::from_cube(&gen_scene(&config, a.complexity, a.seed)?, a.dtype).write(&a.out)
}

/// Binary PGM (P5), values clamped to `[0, 1]` and mapped to `0..=255`.
pub fn pgm_bytes(plane: &[f64], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        plane
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

fn export(a: ExportArgs) -> Result<(), CliError> {
    let file = CubeFile::read(&a.input)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let plane = file.height * file.width;
    for c in 0..file.bands {
        let path = a.out_dir.join(format!("{}_{c:02}.pgm", a.prefix));
        write_atomic(
            &path,
            &pgm_bytes(
                &file.data[c * plane..(c + 1) * plane],
                file.height,
                file.width,
            ),
        )?;
    }
    Ok(())
}

fn ablate(a: AblateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let defaults = SuiteSpec::default();
    let spec = SuiteSpec {
        scenes: a.scenes.unwrap_or(defaults.scenes),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let flags = RunConfig {
        iterations: a.iters,
        tv_weight: a.tv_weight,
        tv_inner_iterations: a.tv_iters,
        ..RunConfig::default()
    };
    let solver = flags.solver();
    solver.check()?;
    let suite = spec.build()?;
    let rows = ablation_grid(&suite, &solver)?;
    let mut text = format!("{ABLATION_CSV_HEADER}\n");
    for row in &rows {
        text.push_str(&row.csv());
        text.push('\n');
    }
    match a.out {
        Some(path) => write_atomic(&path, text.as_bytes()),
        None => emit(stdout, &text),
    }
}
