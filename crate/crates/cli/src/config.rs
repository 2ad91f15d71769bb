//! `--config` files and the merge of file values with command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use subopt_core::fluid::PerturbationKind;
use subopt_core::network::{builtin_example, NetworkDocument};
use subopt_core::sim::ArrivalKind;

use crate::error::CliError;

/// Everything a command can read from a JSON config. Flags win over file values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub builtin: Option<u32>,
    pub network: Option<PathBuf>,
    #[serde(alias = "n")]
    pub n_list: Option<Vec<u64>>,
    pub reps: Option<u64>,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    #[serde(alias = "epsilon")]
    pub eps: Option<f64>,
    pub sigma: Option<f64>,
    pub step: Option<f64>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
    #[serde(alias = "perturbation")]
    pub pert: Option<PerturbationKind>,
    pub arrivals: Option<ArrivalKind>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Reads the config if one was given, otherwise starts empty.
    pub fn from_flag(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Where the network comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    Builtin(u32),
    File(PathBuf),
}

impl NetworkSource {
    pub fn resolve(
        builtin: Option<u32>,
        file: Option<PathBuf>,
        cfg: &RunConfig,
    ) -> Result<Self, CliError> {
        match (builtin, file) {
            (Some(_), Some(_)) => Err(CliError::Usage(
                "give either --builtin or --network, not both".into(),
            )),
            (Some(id), None) => Ok(Self::Builtin(id)),
            (None, Some(path)) => Ok(Self::File(path)),
            (None, None) => match (cfg.builtin, cfg.network.clone()) {
                (Some(_), Some(_)) => Err(CliError::Usage(
                    "config names both a builtin and a network file".into(),
                )),
                (Some(id), None) => Ok(Self::Builtin(id)),
                (None, Some(path)) => Ok(Self::File(path)),
                (None, None) => Err(CliError::Usage(
                    "no network: pass --builtin <id> or --network <file>".into(),
                )),
            },
        }
    }

    pub fn document(&self) -> Result<NetworkDocument, CliError> {
        match self {
            Self::Builtin(id) => Ok(builtin_example(*id)
                .map_err(|e| CliError::Usage(e.to_string()))?
                .into()),
            Self::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                NetworkDocument::parse(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
            }
        }
    }
}

pub fn positive(name: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Usage(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_fields_and_aliases() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"builtin": 2, "n_list": [100, 400], "T": 5, "epsilon": 0.001, "pert": "sinusoid", "arrivals": "uniform"}"#,
        )
        .unwrap();
        assert_eq!(cfg.builtin, Some(2));
        assert_eq!(cfg.horizon, Some(5.0));
        assert_eq!(cfg.eps, Some(1e-3));
        assert_eq!(cfg.pert, Some(PerturbationKind::Sinusoid));
        assert_eq!(cfg.arrivals, Some(ArrivalKind::Uniform));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn flags_beat_config() {
        let cfg = RunConfig {
            builtin: Some(1),
            ..RunConfig::default()
        };
        assert_eq!(
            NetworkSource::resolve(Some(2), None, &cfg).unwrap(),
            NetworkSource::Builtin(2)
        );
        assert_eq!(
            NetworkSource::resolve(None, None, &cfg).unwrap(),
            NetworkSource::Builtin(1)
        );
        assert!(NetworkSource::resolve(None, None, &RunConfig::default()).is_err());
        assert!(positive("T", 0.0).is_err());
    }
}
