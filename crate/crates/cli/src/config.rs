use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Survival,
    Asympt,
    Pickands,
    Bounds,
    Fpt,
    Ratio,
    VerifyBonferroni,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Survival => "survival",
            Command::Asympt => "asympt",
            Command::Pickands => "pickands",
            Command::Bounds => "bounds",
            Command::Fpt => "fpt",
            Command::Ratio => "ratio",
            Command::VerifyBonferroni => "verify-bonferroni",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain Monte Carlo.
    Crude,
    /// Importance sampling.
    Is,
    /// Accept/reject conditioning.
    Rejection,
}

/// Everything that determines a run's output. Output path, thread count and
/// the config path itself are deliberately absent: they do not change results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub alpha1: f64,
    pub alpha2: f64,
    pub r: f64,
    /// Steps per horizon.
    pub n: usize,
    pub horizon: f64,
    /// Grid points below this time are dropped.
    pub t_min: f64,
    pub u: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
    pub format: Format,
    /// `None` picks the subcommand's default.
    pub method: Option<Method>,
    pub alpha: f64,
    pub b: f64,
    pub interval: (f64, f64),
    pub delta: Option<f64>,
    pub sweep_t: Vec<f64>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    /// `(s_lo, s_hi, t_lo, t_hi)`.
    pub region: (f64, f64, f64, f64),
    /// `None` estimates the centering constant.
    pub mu: Option<f64>,
    /// `None` calibrates the Piterbarg constant.
    pub c: Option<f64>,
    pub mu_reps: u64,
    pub mu_n: usize,
    pub target: usize,
    pub spaces: usize,
    pub outcomes: usize,
    pub events: usize,
    pub dump_paths: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::Survival,
            alpha1: 1.0,
            alpha2: 1.0,
            r: 0.0,
            n: 1024,
            horizon: 1.0,
            t_min: 0.0,
            u: vec![2.0],
            reps: 100_000,
            seed: 0,
            format: Format::Csv,
            method: None,
            alpha: 1.0,
            b: 0.0,
            interval: (0.0, 1.0),
            delta: None,
            sweep_t: Vec::new(),
            h1: None,
            h2: None,
            region: (0.0, 1.0, 0.0, 1.0),
            mu: None,
            c: None,
            mu_reps: 10_000,
            mu_n: 128,
            target: 20_000,
            spaces: 1000,
            outcomes: 16,
            events: 4,
            dump_paths: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig {
            command: Command::Bounds,
            r: -0.25,
            u: vec![1.5, 2.0, 2.5],
            method: Some(Method::Is),
            delta: Some(0.005),
            sweep_t: vec![5.0, 10.0],
            mu: Some(0.7),
            dump_paths: Some("paths.csv".into()),
            ..Default::default()
        };
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        c = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_use_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"r": 0.5, "u": [3.0]}"#).unwrap();
        assert_eq!(c.r, 0.5);
        assert_eq!(c.u, vec![3.0]);
        assert_eq!(c.n, 1024);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"rr": 0.5}"#).is_err());
    }
}
