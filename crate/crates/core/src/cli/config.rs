//! Run configuration: a JSON file and command-line flags, flags winning.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::angle::parse_angle;
use crate::bell::{paper_optimal_settings, BellSettings};
use crate::experiment::DetectorBank;
use crate::io::{parse_setting, read_settings_csv};
use crate::qkd::{EveModel, ProtocolMode, ThreePartyBasis};
use crate::qstate::{canonical_psi4, ghz4, Arm, MeasurementSetting, StateVector4};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// The four-photon state
    #[default]
    Psi4,
    /// Four-qubit GHZ state
    Ghz,
}

impl Model {
    pub fn state(self) -> StateVector4 {
        match self {
            Model::Psi4 => canonical_psi4(),
            Model::Ghz => ghz4(),
        }
    }
}

/// Detector bank given either as a path to a JSON file or inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BankSource {
    Path(PathBuf),
    Inline(DetectorBank),
}

/// Every option of every subcommand. Unset fields fall back to per-command
/// defaults when the run is resolved.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub events: Option<u64>,
    pub visibility: Option<f64>,
    pub bank: Option<BankSource>,
    pub settings: Option<String>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub mode: Option<String>,
    pub eve: Option<String>,
    pub key_fraction: Option<f64>,
    pub model: Option<Model>,

    pub check_oracle: Option<bool>,
    pub phases: Option<String>,
    pub scan: Option<bool>,
    pub steps: Option<usize>,
    pub exact: Option<bool>,
    pub search: Option<bool>,
    pub resolution: Option<String>,
    pub corrected: Option<bool>,
    pub frames: Option<PathBuf>,
    pub basis: Option<String>,
    pub simulate: Option<bool>,
    pub reveal: Option<String>,
    pub three_party_basis: Option<ThreePartyBasis>,
    pub k_sigma: Option<f64>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // bank paths in a config file are relative to the file
        if let Some(BankSource::Path(p)) = &cfg.bank {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.bank = Some(BankSource::Path(dir.join(p)));
                }
            }
        }
        Ok(cfg)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        overlay_fields!(self, other;
            command, seed, events, visibility, bank, settings, format, out, mode, eve,
            key_fraction, model, check_oracle, phases, scan, steps, exact, search,
            resolution, corrected, frames, basis, simulate, reveal, three_party_basis, k_sigma);
        self
    }

    pub fn flag(&self, v: Option<bool>) -> bool {
        v.unwrap_or(false)
    }

    pub fn require_seed(&self, what: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("{what} is stochastic and needs --seed")))
    }

    pub fn visibility(&self) -> Result<f64, CliError> {
        let v = self.visibility.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Config(format!(
                "visibility {v} is outside [0, 1]"
            )));
        }
        Ok(v)
    }

    pub fn bank(&self) -> Result<DetectorBank, CliError> {
        let bank = match &self.bank {
            None => return Ok(DetectorBank::ideal()),
            Some(BankSource::Inline(b)) => *b,
            Some(BankSource::Path(p)) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<DetectorBank>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        DetectorBank::new(bank.efficiencies).map_err(|e| CliError::Config(e.to_string()))
    }

    /// `paper` (the default) or a settings CSV.
    pub fn settings(&self) -> Result<BellSettings, CliError> {
        match self.settings.as_deref() {
            None | Some("paper") => Ok(paper_optimal_settings()),
            Some(path) => {
                let file =
                    fs::File::open(path).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
                read_settings_csv(file).map_err(|e| CliError::Config(format!("{path}: {e}")))
            }
        }
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn mode(&self) -> Result<ProtocolMode, CliError> {
        match &self.mode {
            None => Ok(ProtocolMode::FourParty),
            Some(m) => ProtocolMode::parse(m).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn eve(&self) -> Result<EveModel, CliError> {
        match self.eve.as_deref() {
            None | Some("none") => Ok(EveModel::None),
            Some(spec) => parse_eve(spec).map_err(CliError::Config),
        }
    }

    pub fn reveal(&self) -> Result<[Arm; 2], CliError> {
        let spec = self.reveal.as_deref().unwrap_or("b,b'");
        let arms = spec
            .split(',')
            .map(|s| Arm::parse(s.trim()))
            .collect::<crate::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        match arms.as_slice() {
            [x, y] if x != y => Ok([*x, *y]),
            _ => Err(CliError::Config(format!(
                "--reveal needs two distinct arms, got `{spec}`"
            ))),
        }
    }

    pub fn basis(&self) -> Result<MeasurementSetting, CliError> {
        let spec = self.basis.as_deref().unwrap_or("HV");
        match spec.to_ascii_lowercase().as_str() {
            "pm45" | "diagonal" => Ok(MeasurementSetting::Equatorial(0.0)),
            _ => parse_setting(spec).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn resolution(&self) -> Result<f64, CliError> {
        match &self.resolution {
            None => Ok(std::f64::consts::FRAC_PI_4),
            Some(s) => parse_angle(s).map_err(|e| CliError::Config(e.to_string())),
        }
    }
}

/// `arm:basis`, e.g. `a:HV`, `b:pi/4`.
pub fn parse_eve(spec: &str) -> Result<EveModel, String> {
    let (arm, basis) = spec
        .split_once(':')
        .ok_or_else(|| format!("--eve expects arm:basis, got `{spec}`"))?;
    let arm = Arm::parse(arm.trim()).map_err(|e| e.to_string())?;
    let basis = parse_setting(basis).map_err(|e| e.to_string())?;
    Ok(EveModel::InterceptResend { arm, basis })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<RunConfig>("{\"seed\": 1,\n \"sede\": 2}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sede") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn flags_override_file() {
        let file: RunConfig =
            serde_json::from_str(r#"{"seed": 1, "events": 600, "visibility": 0.9}"#).unwrap();
        let flags = RunConfig {
            seed: Some(7),
            ..Default::default()
        };
        let cfg = file.overlay(flags);
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.events, Some(600));
        assert_eq!(cfg.visibility, Some(0.9));
    }

    #[test]
    fn inline_bank() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"bank": {"efficiencies": [[1, 0.5], [1, 0.5], [1, 0.5], [1, 0.5]]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.bank().unwrap().efficiencies[3], [1.0, 0.5]);
        let bad: RunConfig = serde_json::from_str(
            r#"{"bank": {"efficiencies": [[1, 1.5], [1, 1], [1, 1], [1, 1]]}}"#,
        )
        .unwrap();
        assert!(bad.bank().is_err());
    }

    #[test]
    fn eve_specs() {
        assert_eq!(
            parse_eve("a:HV").unwrap(),
            EveModel::InterceptResend {
                arm: Arm::A,
                basis: MeasurementSetting::Computational
            }
        );
        assert!(matches!(
            parse_eve("b':pi/4").unwrap(),
            EveModel::InterceptResend {
                arm: Arm::BPrime,
                ..
            }
        ));
        assert!(parse_eve("a").is_err());
        assert!(parse_eve("c:HV").is_err());
    }
}
