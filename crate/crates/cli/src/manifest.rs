use std::path::PathBuf;
use std::time::Duration;

use aqmsim_core::aqm::AqmKind;
use aqmsim_core::netsim::{Preset, ScenarioConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Csv,
    Json,
    #[default]
    Both,
}

impl Emit {
    pub fn csv(self) -> bool {
        matches!(self, Emit::Csv | Emit::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Emit::Json | Emit::Both)
    }
}

/// A batch of replications of one scenario. Replication `i` runs with seed
/// `base_seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: ScenarioConfig,
    pub replications: u32,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit: Emit,
    /// Replications run concurrently; 0 means one per available core.
    #[serde(default)]
    pub jobs: usize,
}

impl RunManifest {
    pub fn seed_for(&self, replication: u32) -> u64 {
        self.base_seed.wrapping_add(u64::from(replication))
    }

    pub fn scenario_for(&self, replication: u32) -> ScenarioConfig {
        ScenarioConfig {
            seed: self.seed_for(replication),
            replication,
            ..self.scenario.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replications == 0 {
            return Err(CliError::Config("at least one replication is required".into()));
        }
        self.scenario
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Fields that choose the preset a scenario file starts from.
#[derive(Debug, Clone, Copy, Default)]
pub struct PresetChoice {
    pub preset: Option<Preset>,
    pub aqm: Option<AqmKind>,
    pub bottleneck_owd: Option<Duration>,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Builds a scenario from a preset, then overrides it with the keys of a
/// JSON object (`file`), then with `choice` for anything the caller pinned.
/// The preset, AQM and bottleneck delay are taken from `choice` first, then
/// from the file, then from the defaults.
pub fn load_scenario(file: Option<&str>, choice: PresetChoice) -> Result<ScenarioConfig, CliError> {
    let overrides: Map<String, Value> = match file {
        None => Map::new(),
        Some(text) => match serde_json::from_str(text).map_err(config_err)? {
            Value::Object(map) => map,
            _ => return Err(CliError::Config("scenario file must hold a JSON object".into())),
        },
    };
    let from_file = |key: &str| overrides.get(key).cloned();
    let preset = match (choice.preset, from_file("preset")) {
        (Some(p), _) => p,
        (None, Some(v)) => serde_json::from_value(v).map_err(config_err)?,
        (None, None) => Preset::ProofOfConcept,
    };
    let aqm = match (choice.aqm, from_file("aqm")) {
        (Some(a), _) => a,
        (None, Some(v)) => serde_json::from_value(v).map_err(config_err)?,
        (None, None) => AqmKind::Pie,
    };
    let owd = match (choice.bottleneck_owd, from_file("bottleneck_owd")) {
        (Some(d), _) => d,
        (None, Some(Value::String(s))) => aqmsim_core::units::parse_duration(&s).map_err(config_err)?,
        (None, Some(Value::Number(n))) => Duration::from_nanos(
            n.as_u64()
                .ok_or_else(|| config_err("bottleneck_owd must be a non-negative integer of ns"))?,
        ),
        (None, Some(_)) => return Err(config_err("bottleneck_owd must be a string or integer")),
        (None, None) => Duration::from_millis(48),
    };
    let base = ScenarioConfig::preset(preset, aqm, owd);
    let Value::Object(mut merged) = serde_json::to_value(&base).map_err(config_err)? else {
        unreachable!("a scenario serializes to an object");
    };
    merged.extend(overrides);
    let mut cfg: ScenarioConfig = serde_json::from_value(Value::Object(merged)).map_err(config_err)?;
    cfg.preset = preset;
    cfg.aqm = aqm;
    cfg.bottleneck_owd = owd;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_the_preset() {
        let cfg = load_scenario(
            Some(r#"{"preset": "traffic_mix", "aqm": "madpie", "n_sf": 3, "duration": "20s"}"#),
            PresetChoice::default(),
        )
        .unwrap();
        assert_eq!(cfg.preset, Preset::TrafficMix);
        assert_eq!(cfg.aqm, AqmKind::Madpie);
        assert_eq!(cfg.n_sf, 3);
        assert_eq!(cfg.n_cbr, 4);
        assert_eq!(cfg.duration, Duration::from_secs(20));
        assert_eq!(cfg.madpie_tau_dd, Some(Duration::from_millis(25)));
    }

    #[test]
    fn explicit_choice_beats_the_file() {
        let choice = PresetChoice {
            aqm: Some(AqmKind::Codel),
            bottleneck_owd: Some(Duration::from_millis(248)),
            ..PresetChoice::default()
        };
        let cfg = load_scenario(Some(r#"{"aqm": "pie", "bottleneck_owd": "48ms"}"#), choice).unwrap();
        assert_eq!(cfg.aqm, AqmKind::Codel);
        assert_eq!(cfg.bottleneck_owd, Duration::from_millis(248));
    }

    #[test]
    fn bad_files_are_config_errors() {
        for text in ["[1, 2]", "{", r#"{"n_voip": 1}"#, r#"{"duration": "5 parsecs"}"#] {
            assert!(matches!(
                load_scenario(Some(text), PresetChoice::default()),
                Err(CliError::Config(_))
            ));
        }
    }

    #[test]
    fn seeds_are_additive() {
        let m = RunManifest {
            scenario: ScenarioConfig::default(),
            replications: 3,
            base_seed: 40,
            output_dir: PathBuf::from("out"),
            emit: Emit::Both,
            jobs: 1,
        };
        assert_eq!(m.scenario_for(2).seed, 42);
        assert_eq!(m.scenario_for(2).replication, 2);
    }
}
