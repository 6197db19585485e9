//! Run configuration: defaults, JSON config files, flag overrides, and the
//! resolved configuration echoed into reports.

use crate::models::{ChartSpec, Model, T3K3Spec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0}: {1}")]
    File(String, String),
    #[error("unknown model '{0}' (expected flat7, full35, or t3k3)")]
    UnknownModel(String),
    #[error("unknown suite '{0}' (expected {1})")]
    UnknownSuite(String, String),
    #[error("unknown format '{0}' (expected json or csv)")]
    UnknownFormat(String),
    #[error("invalid value for {0}: {1}")]
    BadValue(&'static str, String),
    #[error("invalid chart: {0}")]
    BadChart(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(ConfigError::UnknownFormat(other.to_string())),
        }
    }
}

pub const SUITE_NAMES: [&str; 6] = ["kernel", "g2", "flat7", "full35", "t3k3", "period"];

/// On-disk JSON configuration; every field optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub suite: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub fd_levels: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub format: Option<String>,
    /// Optional explicit T3xK3 chart (dims, intersection forms, base point).
    #[serde(default)]
    pub t3k3: Option<T3K3Spec>,
}

/// Command-line values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub model: Option<String>,
    pub suite: Option<String>,
    pub seed: Option<u64>,
    pub fd_step: Option<f64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub suites: Vec<String>,
    pub seed: u64,
    pub fd_step: Option<f64>,
    pub fd_levels: Option<usize>,
    /// Multiplicative scale applied to every check tolerance.
    pub tol_scale: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub t3k3: Option<T3K3Spec>,
}

impl RunConfig {
    /// Defaults: model flat7, suite all, seed 0 (or G2LAB_SEED), json.
    pub fn resolve(
        file: Option<&FileConfig>,
        flags: &FlagOverrides,
        env_seed: Option<u64>,
    ) -> Result<RunConfig, ConfigError> {
        let empty = FileConfig::default();
        let file = file.unwrap_or(&empty);
        let model = flags
            .model
            .clone()
            .or_else(|| file.model.clone())
            .unwrap_or_else(|| "flat7".to_string());
        if !["flat7", "full35", "t3k3"].contains(&model.as_str()) {
            return Err(ConfigError::UnknownModel(model));
        }
        let suite_sel = flags
            .suite
            .clone()
            .or_else(|| file.suite.clone())
            .unwrap_or_else(|| "all".to_string());
        let suites = parse_suites(&suite_sel)?;
        let seed = flags.seed.or(file.seed).or(env_seed).unwrap_or(0);
        let fd_step = flags.fd_step.or(file.fd_step);
        if let Some(s) = fd_step {
            if !(s.is_finite() && s > 0.0) {
                return Err(ConfigError::BadValue("fd_step", s.to_string()));
            }
        }
        let fd_levels = file.fd_levels;
        let tol_scale = flags.tol.or(file.tol).unwrap_or(1.0);
        if !(tol_scale.is_finite() && tol_scale > 0.0) {
            return Err(ConfigError::BadValue("tol", tol_scale.to_string()));
        }
        let out = flags
            .out
            .clone()
            .or_else(|| file.out.as_ref().map(PathBuf::from));
        let format = match flags.format.as_deref().or(file.format.as_deref()) {
            Some(s) => OutputFormat::parse(s)?,
            None => OutputFormat::Json,
        };
        Ok(RunConfig {
            model,
            suites,
            seed,
            fd_step,
            fd_levels,
            tol_scale,
            out,
            format,
            t3k3: file.t3k3.clone(),
        })
    }

    /// The selected model chart and its base point.
    pub fn build_model(&self) -> Result<(Model, Vec<f64>), ConfigError> {
        let spec = ChartSpec {
            model: self.model.clone(),
            t3k3: self.t3k3.clone(),
        };
        spec.build().map_err(|e| ConfigError::BadChart(e.to_string()))
    }

    /// Resolved values echoed verbatim into reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "suite": self.suites.join(","),
            "seed": self.seed,
            "fd_step": self.fd_step,
            "fd_levels": self.fd_levels,
            "tol": self.tol_scale,
            "out": self.out.as_ref().map(|p| p.display().to_string()),
            "format": match self.format { OutputFormat::Json => "json", OutputFormat::Csv => "csv" },
            "t3k3": self.t3k3,
        })
    }
}

fn parse_suites(selector: &str) -> Result<Vec<String>, ConfigError> {
    let mut out = Vec::new();
    for part in selector.split(',') {
        let name = part.trim();
        if name == "all" {
            for s in SUITE_NAMES {
                if !out.iter().any(|v| v == s) {
                    out.push(s.to_string());
                }
            }
        } else if SUITE_NAMES.contains(&name) {
            if !out.iter().any(|v| v == name) {
                out.push(name.to_string());
            }
        } else {
            return Err(ConfigError::UnknownSuite(
                name.to_string(),
                format!("all, {}", SUITE_NAMES.join(", ")),
            ));
        }
    }
    if out.is_empty() {
        return Err(ConfigError::UnknownSuite(
            String::new(),
            format!("all, {}", SUITE_NAMES.join(", ")),
        ));
    }
    Ok(out)
}

/// Load a JSON config file; unknown keys and malformed JSON are errors that
/// name the offending key.
pub fn load_file(path: &std::path::Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::File(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text)
        .map_err(|e| ConfigError::File(path.display().to_string(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(None, &FlagOverrides::default(), None).unwrap();
        assert_eq!(cfg.model, "flat7");
        assert_eq!(cfg.suites, SUITE_NAMES.map(String::from).to_vec());
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.tol_scale, 1.0);
        assert_eq!(cfg.format, OutputFormat::Json);
    }

    #[test]
    fn precedence_flags_over_file_over_env() {
        let file = FileConfig {
            seed: Some(5),
            fd_step: Some(0.01),
            suite: Some("kernel".to_string()),
            ..Default::default()
        };
        let flags = FlagOverrides {
            seed: Some(9),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(Some(&file), &flags, Some(3)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.fd_step, Some(0.01));
        assert_eq!(cfg.suites, vec!["kernel".to_string()]);
        // env used only when neither flag nor file sets the seed
        let file2 = FileConfig::default();
        let cfg2 = RunConfig::resolve(Some(&file2), &FlagOverrides::default(), Some(3)).unwrap();
        assert_eq!(cfg2.seed, 3);
        // echo reflects overrides
        assert_eq!(cfg.echo()["fd_step"], serde_json::json!(0.01));
    }

    #[test]
    fn unknown_key_named() {
        let err = serde_json::from_str::<FileConfig>("{\"modle\": \"flat7\"}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("modle"), "{err}");
    }

    #[test]
    fn suite_selector() {
        assert_eq!(
            parse_suites("kernel,period").unwrap(),
            vec!["kernel".to_string(), "period".to_string()]
        );
        assert_eq!(parse_suites("all").unwrap().len(), 6);
        assert!(parse_suites("nope").is_err());
        let flags = FlagOverrides {
            suite: Some("bogus".to_string()),
            ..Default::default()
        };
        let err = RunConfig::resolve(None, &flags, None).unwrap_err().to_string();
        assert!(err.contains("bogus"));
    }

    #[test]
    fn model_validation() {
        let flags = FlagOverrides {
            model: Some("flat9".to_string()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(None, &flags, None).is_err());
        let cfg = RunConfig::resolve(None, &FlagOverrides::default(), None).unwrap();
        let (model, base) = cfg.build_model().unwrap();
        assert_eq!(model.family().dimension(), 7);
        assert_eq!(base, vec![1.0; 7]);
    }
}
