//! Pipeline configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! epsilon = 1e-4
//! lambda = 0.15
//! iterations = 30
//! denoise = grid          # grid | bilateral | off
//! grid = 8,8,8            # depth,rows,cols
//! sigma_s = 2
//! sigma_r = 0.1
//! restore = true
//! alpha = 0.8
//! rho = 2
//! levels = 3
//! correct = true
//! color_matrix = identity # identity | fit | <path to matrix file>
//! pool = 4
//! ridge = 1e-6
//! gamma = 0.5             # <float> | auto
//! seed = 0
//! timing = true
//! ```

use std::path::Path;

use crate::adjust::AdjustParams;
use crate::cdm::GridDims;
use crate::decomp::{DecomposeParams, DEFAULT_EPSILON, DEFAULT_ITERATIONS, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::pcm::{ColorMatrix, DEFAULT_POOL, DEFAULT_RIDGE};
use crate::rpm::{RpmParams, DEFAULT_ALPHA, DEFAULT_LEVELS, DEFAULT_RHO};

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DenoiseMode {
    Grid,
    Bilateral,
    Off,
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ColorSource {
    Identity,
    /// One matrix used for both the coarse and the fine pass.
    Matrix(ColorMatrix),
    /// Fit both matrices against the reference image's reflectance.
    FitFromReference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub epsilon: f32,
    pub lambda: f64,
    pub iterations: usize,
    pub denoise: DenoiseMode,
    pub grid: GridDims,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub restore: bool,
    pub alpha: f64,
    pub rho: f64,
    pub levels: usize,
    pub correct: bool,
    pub color: ColorSource,
    pub pool: usize,
    pub ridge: f64,
    pub adjust: AdjustParams,
    pub seed: u64,
    /// Record wall time in evaluation reports. Off makes reports
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            lambda: DEFAULT_LAMBDA,
            iterations: DEFAULT_ITERATIONS,
            denoise: DenoiseMode::Grid,
            grid: GridDims::default(),
            sigma_s: 2.0,
            sigma_r: 0.1,
            restore: true,
            alpha: DEFAULT_ALPHA,
            rho: DEFAULT_RHO,
            levels: DEFAULT_LEVELS,
            correct: true,
            color: ColorSource::Identity,
            pool: DEFAULT_POOL,
            ridge: DEFAULT_RIDGE,
            adjust: AdjustParams::Gamma(DEFAULT_GAMMA),
            seed: 0,
            timing: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl PipelineConfig {
    /// Everything switched to its identity setting except decomposition.
    pub fn neutral() -> Self {
        Self {
            lambda: 0.0,
            denoise: DenoiseMode::Off,
            alpha: 0.0,
            rho: 0.0,
            color: ColorSource::Identity,
            pool: 1,
            adjust: AdjustParams::Gamma(1.0),
            ..Self::default()
        }
    }

    pub fn decompose_params(&self) -> DecomposeParams {
        DecomposeParams {
            epsilon: self.epsilon,
            lambda: self.lambda,
            iterations: self.iterations,
        }
    }

    pub fn rpm_params(&self) -> RpmParams {
        RpmParams {
            alpha: self.alpha,
            rho: self.rho,
            levels: self.levels,
        }
    }

    /// Applies one `key = value` setting. Relative matrix paths resolve
    /// against `base_dir` when given.
    pub fn set(&mut self, key: &str, value: &str, base_dir: Option<&Path>) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "iterations" => self.iterations = parse_num(key, value)?,
            "denoise" => {
                self.denoise = match value {
                    "grid" => DenoiseMode::Grid,
                    "bilateral" => DenoiseMode::Bilateral,
                    "off" | "none" => DenoiseMode::Off,
                    _ => return Err(Error::Config(format!("denoise: unknown mode {value:?}"))),
                }
            }
            "grid" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| parse_num(key, p.trim()))
                    .collect::<Result<_>>()?;
                let [depth, rows, cols] = parts[..] else {
                    return Err(Error::Config(format!("grid: expected depth,rows,cols, got {value:?}")));
                };
                self.grid = GridDims { depth, rows, cols };
            }
            "sigma_s" => self.sigma_s = parse_num(key, value)?,
            "sigma_r" => self.sigma_r = parse_num(key, value)?,
            "restore" => self.restore = parse_bool(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "rho" => self.rho = parse_num(key, value)?,
            "levels" => self.levels = parse_num(key, value)?,
            "correct" => self.correct = parse_bool(key, value)?,
            "color_matrix" => {
                self.color = match value {
                    "identity" => ColorSource::Identity,
                    "fit" => ColorSource::FitFromReference,
                    path => {
                        let path = match base_dir {
                            Some(dir) => dir.join(path),
                            None => path.into(),
                        };
                        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
                        ColorSource::Matrix(text.parse()?)
                    }
                }
            }
            "pool" => self.pool = parse_num(key, value)?,
            "ridge" => self.ridge = parse_num(key, value)?,
            "gamma" => {
                self.adjust = if value == "auto" {
                    AdjustParams::Auto
                } else {
                    AdjustParams::Gamma(parse_num(key, value)?)
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, base_dir: Option<&Path>) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value, base_dir)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path.parent())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.grid.depth == 0 || self.grid.rows == 0 || self.grid.cols == 0 {
            return bad(format!("grid dimensions must be >= 1, got {:?}", self.grid));
        }
        if !(self.sigma_s > 0.0) || !(self.sigma_r > 0.0) {
            return bad("sigma_s and sigma_r must be > 0".into());
        }
        if !(self.alpha >= 0.0) || !(self.rho >= 0.0) {
            return bad("alpha and rho must be >= 0".into());
        }
        if self.levels == 0 {
            return bad("levels must be >= 1".into());
        }
        if self.pool == 0 {
            return bad("pool must be >= 1".into());
        }
        if !(self.ridge >= 0.0) {
            return bad(format!("ridge must be >= 0, got {}", self.ridge));
        }
        if let AdjustParams::Gamma(g) = self.adjust {
            if !(g > 0.0) || !g.is_finite() {
                return bad(format!("gamma must be > 0, got {g}"));
            }
        }
        Ok(())
    }
}
