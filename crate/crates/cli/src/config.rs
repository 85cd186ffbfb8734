//! Flat `key = value` run configuration with per-command key validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed configuration: ordered key-value map plus the canonical text used
/// for the manifest hash.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

const COMMON_KEYS: &[&str] = &[
    "region.kind",
    "region.r1",
    "region.r2",
    "region.theta1",
    "region.theta2",
    "region.rmax",
    "grid.h",
    "grid.box",
    "weights.kind",
    "weights.sigma",
    "weights.s",
    "weights.alpha",
    "weights.q",
    "weights.beta",
    "cutoff.t0",
    "cutoff.t1",
    "solver.tol",
    "solver.max_iter",
    "solver.strict",
    "output.formats",
    "seed",
];

pub fn allowed_keys(command: &str) -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = COMMON_KEYS.to_vec();
    match command {
        "glue-maxwell" => keys.extend(["problem.e1", "problem.e2", "problem.flux_tol"]),
        "glue-scalar" => keys.extend([
            "problem.epsilon",
            "problem.max_iter",
            "problem.defect_tol",
            "problem.smallness",
        ]),
        "constraints" => keys.extend(["problem.metric", "problem.mass", "problem.k_trace"]),
        "kids" => keys.extend(["problem.metric", "problem.mass", "problem.candidate"]),
        "mass" => keys.extend(["problem.mass", "problem.radii", "problem.n_theta"]),
        "constants" => keys.extend(["problem.rmax_sweep"]),
        _ => {}
    }
    keys
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError(format!("line {}: empty key or value", lineno + 1)));
            }
            values.insert(key, value);
        }
        Ok(RunConfig { values })
    }

    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects key=value, got '{assignment}'")))?;
        self.values
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    /// Reject keys outside the command's schema.
    pub fn validate_keys(&self, command: &str) -> Result<(), ConfigError> {
        let allowed = allowed_keys(command);
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError(format!(
                    "unknown key '{key}' for command {command}"
                )));
            }
        }
        Ok(())
    }

    /// Canonical text for hashing: sorted "key = value" lines.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| ConfigError(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(ConfigError(format!(
                "key '{key}': '{v}' is not true/false"
            ))),
        }
    }

    /// Comma-separated floats.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| ConfigError(format!("key '{key}': '{t}' is not a number")))
                })
                .collect(),
        }
    }
}
