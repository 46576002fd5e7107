//! `--config` files.
//!
//! A flat TOML document; every key is optional and unknown keys are
//! rejected. Command-line flags override the file, and the file overrides the
//! built-in defaults.
//!
//! ```toml
//! shift_step = 2
//! method = "rnd-gap-tv"        # pinv | gap-tv | rnd-gap-tv
//! iterations = 60
//! tv_weight = 0.1
//! tv_inner_iterations = 20
//! init = "roll"                # shift | repeat | roll
//! crop_denoiser_input = true
//! convergence_tol = 0.0
//! shot_noise_bits = 12         # simulate only; absent means noiseless
//! seed = 0                     # simulate only
//! full_scale = 1.0             # simulate only; absent means measurement max
//! dtype = "f64"                # f32 | f64, output files
//! ```

use std::path::Path;

use cassi_core::recon::{InitStrategy, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::cubefile::Dtype;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pinv,
    GapTv,
    #[default]
    RndGapTv,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pinv => "pinv",
            Method::GapTv => "gap-tv",
            Method::RndGapTv => "rnd-gap-tv",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub shift_step: Option<usize>,
    pub method: Option<Method>,
    pub iterations: Option<usize>,
    pub tv_weight: Option<f64>,
    pub tv_inner_iterations: Option<usize>,
    pub init: Option<InitStrategy>,
    pub crop_denoiser_input: Option<bool>,
    pub convergence_tol: Option<f64>,
    pub shot_noise_bits: Option<u32>,
    pub seed: Option<u64>,
    pub full_scale: Option<f64>,
    pub dtype: Option<Dtype>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                RunConfig::parse(&text)
                    .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Layer `overrides` (the command-line flags) on top of `self`.
    pub fn overlay(&self, overrides: &RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: overrides.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(
            shift_step,
            method,
            iterations,
            tv_weight,
            tv_inner_iterations,
            init,
            crop_denoiser_input,
            convergence_tol,
            shot_noise_bits,
            seed,
            full_scale,
            dtype
        )
    }

    pub fn solver(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            iterations: self.iterations.unwrap_or(d.iterations),
            tv_weight: self.tv_weight.unwrap_or(d.tv_weight),
            tv_inner_iterations: self.tv_inner_iterations.unwrap_or(d.tv_inner_iterations),
            init: self.init.unwrap_or(d.init),
            crop_denoiser_input: self.crop_denoiser_input.unwrap_or(d.crop_denoiser_input),
            convergence_tol: self.convergence_tol.unwrap_or(d.convergence_tol),
        }
    }

    pub fn shift_step(&self) -> Result<usize, CliError> {
        match self.shift_step {
            Some(0) => Err(CliError::usage("shift step must be at least 1")),
            Some(d) => Ok(d),
            None => Err(CliError::usage(
                "--shift-step is required (flag or config file)",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.solver(), SolverConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("iterations = 3\nbogus = 1\n").is_err());
    }

    #[test]
    fn values_parse() {
        let cfg = RunConfig::parse(
            "method = \"gap-tv\"\ninit = \"shift\"\ntv_weight = 0.05\ncrop_denoiser_input = false\ndtype = \"f32\"\n",
        )
        .unwrap();
        assert_eq!(cfg.method, Some(Method::GapTv));
        assert_eq!(cfg.dtype, Some(Dtype::F32));
        let s = cfg.solver();
        assert_eq!(s.init, InitStrategy::Shift);
        assert_eq!(s.tv_weight, 0.05);
        assert!(!s.crop_denoiser_input);
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::parse("iterations = 5\ntv_weight = 0.3\n").unwrap();
        let flags = RunConfig {
            iterations: Some(9),
            ..RunConfig::default()
        };
        let merged = file.overlay(&flags);
        assert_eq!(merged.iterations, Some(9));
        assert_eq!(merged.tv_weight, Some(0.3));
        assert_eq!(merged.solver().tv_inner_iterations, 20);
    }

    #[test]
    fn shift_step_required() {
        assert!(RunConfig::default().shift_step().is_err());
        assert!(RunConfig {
            shift_step: Some(0),
            ..RunConfig::default()
        }
        .shift_step()
        .is_err());
    }
}
