//! Run configuration: a line-oriented `key=value` file plus flag overrides.

use std::fmt::Write as _;
use std::path::Path;

use hazard_core::{validate_params, ModelParams};
use serde::Serialize;

use crate::CliError;

pub const KEYS: [&str; 9] = [
    "r",
    "T",
    "sigma",
    "s0",
    "lambda_plus",
    "lambda_minus",
    "steps",
    "n_paths",
    "seed",
];

pub const MIN_STEPS: usize = 10;
pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub params: ModelParams,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::reference(),
            steps: 2000,
            n_paths: 100_000,
            seed: 7,
        }
    }
}

/// Flag values that replace whatever the file says.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub steps: Option<usize>,
}

impl RunConfig {
    /// Defaults, then the file (if any), then the flags.
    pub fn load(file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(n) = flags.n_paths {
            cfg.n_paths = n;
        }
        if let Some(n) = flags.steps {
            cfg.steps = n;
        }
        cfg.validate()
    }

    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| CliError::Usage(format!("config line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(bad(format!("unknown key {key:?}")));
            }
            if seen.contains(&key) {
                return Err(bad(format!("key {key:?} given twice")));
            }
            seen.push(key);
            let float = || value.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
            let int = || value.parse::<u64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "r" => cfg.params.r = float()?,
                "T" => cfg.params.maturity = float()?,
                "sigma" => cfg.params.sigma = float()?,
                "s0" => cfg.params.s0 = float()?,
                "lambda_plus" => cfg.params.lambda_plus = float()?,
                "lambda_minus" => cfg.params.lambda_minus = float()?,
                "steps" => cfg.steps = int()? as usize,
                "n_paths" => cfg.n_paths = int()? as usize,
                _ => cfg.seed = int()?,
            }
        }
        Ok(cfg)
    }

    pub fn validate(self) -> Result<Self, CliError> {
        validate_params(self.params).map_err(|e| CliError::Usage(format!("invalid model parameters: {e}")))?;
        if self.steps < MIN_STEPS {
            return Err(CliError::Usage(format!(
                "steps must be >= {MIN_STEPS}, got {}",
                self.steps
            )));
        }
        if self.n_paths < MIN_PATHS {
            return Err(CliError::Usage(format!(
                "n_paths must be >= {MIN_PATHS}, got {}",
                self.n_paths
            )));
        }
        Ok(self)
    }

    /// The config as a file `parse` reads back to the same value. Floats
    /// use the shortest representation that round-trips.
    pub fn echo(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        for (k, v) in [
            ("r", p.r),
            ("T", p.maturity),
            ("sigma", p.sigma),
            ("s0", p.s0),
            ("lambda_plus", p.lambda_plus),
            ("lambda_minus", p.lambda_minus),
        ] {
            let _ = writeln!(out, "{k}={v:?}");
        }
        let _ = writeln!(out, "steps={}", self.steps);
        let _ = writeln!(out, "n_paths={}", self.n_paths);
        let _ = writeln!(out, "seed={}", self.seed);
        out
    }
}
