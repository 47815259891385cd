//! Experiment configuration: strict JSON, unknown keys rejected.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attack::AttackDescription;
use crate::bell::Pauli;
use crate::checking::ProtocolConfig;
use crate::error::{Error, Result};

/// The verification suites the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RunProtocol,
    VerifyClassicalization,
    VerifyLocalEquivalence,
    VerifySecurityBounds,
    SiftSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RunProtocol => "run-protocol",
            ExperimentKind::VerifyClassicalization => "verify-classicalization",
            ExperimentKind::VerifyLocalEquivalence => "verify-local-equivalence",
            ExperimentKind::VerifySecurityBounds => "verify-security-bounds",
            ExperimentKind::SiftSweep => "sift-sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    Both,
}

/// Comparison tolerances; the defaults match the verification contracts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Exact-identity checks (distribution and state deviations).
    pub identity: f64,
    /// Width of the Monte Carlo acceptance band, in standard errors.
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-10,
            mc_sigmas: 3.0,
        }
    }
}

/// Which Pauli the sift-sweep plants on the illegitimate pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IllegitimateKind {
    #[default]
    X,
    Y,
    Z,
}

impl IllegitimateKind {
    pub fn pauli(self) -> Pauli {
        match self {
            IllegitimateKind::X => Pauli::X,
            IllegitimateKind::Y => Pauli::Y,
            IllegitimateKind::Z => Pauli::Z,
        }
    }
}

/// Extra knobs for the sift-sweep suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SiftSweepConfig {
    pub illegitimate_kind: IllegitimateKind,
    /// Illegitimate-pair counts to sweep; all of `0..=2n` when omitted.
    pub m_values: Option<Vec<usize>>,
}

/// Top-level experiment description (the `--config` file).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackDescription>,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub report_format: ReportFormat,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sift: Option<SiftSweepConfig>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.tolerances.identity <= 0.0 || self.tolerances.mc_sigmas <= 0.0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        match self.experiment {
            ExperimentKind::RunProtocol => {
                let attack = self.attack.as_ref().ok_or_else(|| {
                    Error::Config("run-protocol requires an attack description".into())
                })?;
                if attack.n_pairs != self.protocol.n_pairs_total {
                    return Err(Error::Config(format!(
                        "attack distributes {} pairs but the protocol expects {}",
                        attack.n_pairs, self.protocol.n_pairs_total
                    )));
                }
            }
            ExperimentKind::SiftSweep => {
                if self.attack.is_some() {
                    return Err(Error::Config(
                        "sift-sweep plants its own patterns; remove the attack field".into(),
                    ));
                }
                if let Some(sift) = &self.sift {
                    if let Some(ms) = &sift.m_values {
                        if ms.is_empty() {
                            return Err(Error::Config("sift.m_values is empty".into()));
                        }
                        if let Some(&m) = ms.iter().find(|&&m| m > self.protocol.n_pairs_total) {
                            return Err(Error::Config(format!(
                                "sift.m_values entry {m} exceeds n_pairs_total = {}",
                                self.protocol.n_pairs_total
                            )));
                        }
                    }
                }
            }
            ExperimentKind::VerifyClassicalization
            | ExperimentKind::VerifyLocalEquivalence
            | ExperimentKind::VerifySecurityBounds => {
                if let Some(attack) = &self.attack {
                    if attack.terms.is_none() {
                        return Err(Error::Config(format!(
                            "{} needs a term-form (pure) attack when one is given",
                            self.experiment
                        )));
                    }
                }
            }
        }
        if self.sift.is_some() && self.experiment != ExperimentKind::SiftSweep {
            return Err(Error::Config(
                "the sift section only applies to sift-sweep".into(),
            ));
        }
        Ok(())
    }

    /// Effective output directory (`out` unless configured or overridden).
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(experiment: &str) -> String {
        format!(
            r#"{{
                "experiment": "{experiment}",
                "protocol": {{"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10}}
            }}"#
        )
    }

    #[test]
    fn parses_minimal_verify_config() {
        let config = ExperimentConfig::from_json(&minimal("verify-classicalization")).unwrap();
        assert_eq!(config.experiment, ExperimentKind::VerifyClassicalization);
        assert_eq!(config.tolerances, Tolerances::default());
        assert_eq!(config.report_format, ReportFormat::Both);
    }

    #[test]
    fn rejects_unknown_keys_anywhere() {
        let json = r#"{
            "experiment": "sift-sweep",
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10},
            "mystery": true
        }"#;
        assert!(ExperimentConfig::from_json(json).is_err());

        let nested = r#"{
            "experiment": "sift-sweep",
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10, "extra": 4}
        }"#;
        assert!(ExperimentConfig::from_json(nested).is_err());
    }

    #[test]
    fn run_protocol_requires_a_matching_attack() {
        assert!(ExperimentConfig::from_json(&minimal("run-protocol")).is_err());

        let mismatched = r#"{
            "experiment": "run-protocol",
            "attack": {"n_pairs": 4, "named": {"kind": "none"}},
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10}
        }"#;
        assert!(ExperimentConfig::from_json(mismatched).is_err());

        let good = r#"{
            "experiment": "run-protocol",
            "attack": {"n_pairs": 8, "named": {"kind": "none"}},
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10}
        }"#;
        assert!(ExperimentConfig::from_json(good).is_ok());
    }

    #[test]
    fn sift_sweep_validation() {
        let with_attack = r#"{
            "experiment": "sift-sweep",
            "attack": {"n_pairs": 8, "named": {"kind": "none"}},
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10}
        }"#;
        assert!(ExperimentConfig::from_json(with_attack).is_err());

        let bad_m = r#"{
            "experiment": "sift-sweep",
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10},
            "sift": {"m_values": [9]}
        }"#;
        assert!(ExperimentConfig::from_json(bad_m).is_err());

        let good = r#"{
            "experiment": "sift-sweep",
            "protocol": {"n_pairs_total": 8, "e_check": 0.04, "e_cor": 0.05, "seed": 1, "trials": 10},
            "sift": {"illegitimate_kind": "y", "m_values": [0, 4, 8]}
        }"#;
        let config = ExperimentConfig::from_json(good).unwrap();
        assert_eq!(config.sift.unwrap().illegitimate_kind.pauli(), Pauli::Y);
    }
}
