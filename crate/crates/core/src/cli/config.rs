//! `key = value` job settings.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use crate::estimate::{EstimationConfig, Solver};
use crate::gamma::GammaFitConfig;
use crate::probe::DEFAULT_NOISE_FLOOR;
use crate::relight::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Pfm,
    Png,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Pfm => "pfm",
            OutputFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobConfig {
    pub gamma: GammaFitConfig,
    pub loss: LossWeights,
    pub estimation: EstimationConfig,
    pub output_format: OutputFormat,
    pub noise_floor: f64,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            gamma: GammaFitConfig::default(),
            loss: LossWeights::default(),
            estimation: EstimationConfig::default(),
            output_format: OutputFormat::Pfm,
            noise_floor: DEFAULT_NOISE_FLOOR,
        }
    }
}

pub const KEYS: [&str; 11] = [
    "gamma_min",
    "gamma_max",
    "lambda1",
    "lambda2",
    "lambda_prior",
    "blend_temperature",
    "iterations",
    "step_size",
    "solver",
    "output_format",
    "noise_floor",
];

fn number<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

impl JobConfig {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// `auto` resets the optional settings to their data-driven defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = JobConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).with_context(|| format!("line {}", lineno + 1))?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(JobConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                JobConfig::parse(&text).with_context(|| format!("config {}", p.display()))
            }
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "gamma_min" => self.gamma.lower = number(key, value)?,
            "gamma_max" => self.gamma.upper = number(key, value)?,
            "lambda1" => self.loss.lambda1 = number(key, value)?,
            "lambda2" => self.loss.lambda2 = number(key, value)?,
            "lambda_prior" => self.estimation.lambda_prior = number(key, value)?,
            "blend_temperature" => {
                self.estimation.blend_temperature = if value == "auto" {
                    None
                } else {
                    Some(number(key, value)?)
                }
            }
            "iterations" => self.estimation.iterations = number(key, value)?,
            "step_size" => {
                self.estimation.step_size = if value == "auto" {
                    None
                } else {
                    Some(number(key, value)?)
                }
            }
            "solver" => {
                self.estimation.solver = match value {
                    "ridge" => Solver::Ridge,
                    "iterative" => Solver::Iterative,
                    other => bail!("solver: expected ridge or iterative, got {other:?}"),
                }
            }
            "output_format" => {
                self.output_format = match value {
                    "pfm" => OutputFormat::Pfm,
                    "png" => OutputFormat::Png,
                    other => bail!("output_format: expected pfm or png, got {other:?}"),
                }
            }
            "noise_floor" => self.noise_floor = number(key, value)?,
            other => bail!("unknown config key {other:?} (known keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        self.gamma.validate()?;
        LossWeights::new(self.loss.lambda1, self.loss.lambda2)?;
        self.estimation.validate()?;
        if !(0.0..1.0).contains(&self.noise_floor) {
            bail!("noise_floor must be in [0, 1), got {}", self.noise_floor);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let cfg = JobConfig::parse(
            "# job\n gamma_min = 0.3\ngamma_max=4\nlambda1 = 0.5\nlambda2 = 2\nlambda_prior = 0.01 # weak\n\
             blend_temperature = 0.2\niterations = 7\nstep_size = 0.05\nsolver = iterative\n\
             output_format = png\nnoise_floor = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.gamma.lower, 0.3);
        assert_eq!(cfg.gamma.upper, 4.0);
        assert_eq!(cfg.loss, LossWeights::new(0.5, 2.0).unwrap());
        assert_eq!(cfg.estimation.lambda_prior, 0.01);
        assert_eq!(cfg.estimation.blend_temperature, Some(0.2));
        assert_eq!(cfg.estimation.iterations, 7);
        assert_eq!(cfg.estimation.step_size, Some(0.05));
        assert_eq!(cfg.estimation.solver, Solver::Iterative);
        assert_eq!(cfg.output_format, OutputFormat::Png);
        assert_eq!(cfg.noise_floor, 0.1);
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(JobConfig::parse("\n# nothing\n").unwrap(), JobConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = JobConfig::parse("lambda_prior = 1\nlamda2 = 3\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("lamda2"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn bad_values_rejected() {
        for text in [
            "iterations = -1",
            "solver = newton",
            "lambda1 = x",
            "noise_floor = 2",
            "gamma_min = 3\ngamma_max = 1",
            "novalue",
        ] {
            assert!(JobConfig::parse(text).is_err(), "{text}");
        }
    }
}
