//! Experiment configuration: defaults, flat `key=value` files and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gmc_core::chaos::Gamma;
use gmc_core::estimators::Statistic;
use gmc_core::sampler::GridSpec;
use gmc_core::spectral::nyquist_limit;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(HarnessError::Config(format!("unknown format '{s}'"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gamma: f64,
    /// Truncation depth of the field.
    pub m: u32,
    /// Grid points `G`.
    pub grid: usize,
    pub n_max: usize,
    /// Sobolev weight for the `l^q` norm probe; `None` skips it.
    pub tau: Option<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub statistic: Statistic,
    /// Frequency range `[block_lo, block_hi)` of slope fits.
    pub block_lo: usize,
    pub block_hi: usize,
    /// Depths at which `||M_m||_q^p` is recorded when `tau` is set.
    pub norm_depths: Vec<u32>,
    /// Skips the `m >= log2(n_max) + 2` depth rule; the Nyquist rule still applies.
    pub allow_shallow: bool,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            m: 14,
            grid: 1 << 15,
            n_max: 1 << 12,
            tau: None,
            replicas: 200,
            seed: 0,
            statistic: Statistic::Median,
            block_lo: 16,
            block_hi: 1 << 12,
            norm_depths: Vec::new(),
            allow_shallow: false,
            output: None,
            format: Format::Json,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| HarnessError::Config(format!("{key}={value}: {e}")))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "gamma" => self.gamma = parse(key, v)?,
            "m" | "depth" => self.m = parse(key, v)?,
            "grid" | "G" => self.grid = parse(key, v)?,
            "n_max" | "nmax" => self.n_max = parse(key, v)?,
            "tau" => self.tau = if v.is_empty() || v == "none" { None } else { Some(parse(key, v)?) },
            "replicas" | "reps" => self.replicas = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "statistic" | "stat" => self.statistic = parse(key, v)?,
            "block_lo" => self.block_lo = parse(key, v)?,
            "block_hi" => self.block_hi = parse(key, v)?,
            "norm_depths" => {
                self.norm_depths = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "allow_shallow" => self.allow_shallow = parse(key, v)?,
            "output" | "out" => self.output = Some(PathBuf::from(v)),
            "format" => self.format = parse(key, v)?,
            other => return Err(HarnessError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        self.apply_text(&text)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn gamma(&self) -> Result<Gamma<f64>> {
        Gamma::new(self.gamma).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Depths at which the norm probe runs.
    pub fn effective_norm_depths(&self) -> Vec<u32> {
        match (self.tau, self.norm_depths.is_empty()) {
            (None, _) => Vec::new(),
            (Some(_), true) => vec![self.m],
            (Some(_), false) => self.norm_depths.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let grid = self.grid_spec()?;
        self.gamma()?;
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        let limit = nyquist_limit(grid);
        if self.n_max == 0 || self.n_max > limit {
            return bad(format!("n_max {} must lie in [1, G/8 = {limit}]", self.n_max));
        }
        let need = (self.n_max as f64).log2().ceil() as u32 + 2;
        if !self.allow_shallow && self.m < need {
            return bad(format!("m = {} < log2(n_max) + 2 = {need}; pass allow_shallow to override", self.m));
        }
        if let Some(tau) = self.tau {
            if !(0.0..1.0).contains(&tau) {
                return bad(format!("tau {tau} outside [0, 1)"));
            }
        }
        let depths = self.effective_norm_depths();
        if depths.windows(2).any(|w| w[0] >= w[1]) || depths.iter().any(|&d| d > self.m) {
            return bad(format!("norm_depths {depths:?} must increase and not exceed m = {}", self.m));
        }
        if !self.block_lo.is_power_of_two() || !self.block_hi.is_power_of_two() || self.block_lo >= self.block_hi {
            return bad(format!("block range [{}, {}) must be powers of two", self.block_lo, self.block_hi));
        }
        if self.block_hi - 1 > self.n_max {
            return bad(format!("block_hi {} exceeds n_max + 1", self.block_hi));
        }
        Ok(())
    }

    /// Whether two results built from these configs may be merged: every
    /// field except the replica count and output settings must agree.
    pub fn compatible(&self, other: &Self) -> bool {
        let strip = |c: &Self| Self { replicas: 0, output: None, format: Format::Json, ..c.clone() };
        strip(self) == strip(other)
    }
}
