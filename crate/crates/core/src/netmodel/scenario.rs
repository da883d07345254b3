use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_flows, FlowSchedule, FlowSpec, RoadNetwork};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Vehicle and driver parameters for the microsimulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// m/s^2
    pub start_accel: f64,
    /// m/s^2, magnitude
    pub stop_decel: f64,
    /// seconds
    pub reaction_time: f64,
    /// meters
    pub vehicle_length: f64,
    /// meters, bumper to bumper at standstill
    pub min_gap: f64,
    /// Relative standard deviation of per-vehicle desired speed.
    pub speed_deviation: f64,
    /// Speeds at or below this (m/s) count as waiting.
    #[serde(default = "default_wait_threshold")]
    pub wait_threshold: f64,
    /// Steps a signal spends in yellow before a new phase activates.
    #[serde(default = "default_yellow_steps")]
    pub yellow_steps: u32,
}

fn default_wait_threshold() -> f64 {
    0.1
}

fn default_yellow_steps() -> u32 {
    3
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            start_accel: 2.0,
            stop_decel: 4.5,
            reaction_time: 0.8,
            vehicle_length: 4.5,
            min_gap: 1.5,
            speed_deviation: 0.2,
            wait_threshold: default_wait_threshold(),
            yellow_steps: default_yellow_steps(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("start_accel", self.start_accel),
            ("stop_decel", self.stop_decel),
            ("reaction_time", self.reaction_time),
            ("vehicle_length", self.vehicle_length),
            ("min_gap", self.min_gap),
            ("wait_threshold", self.wait_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "sim_params.{name} must be > 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.speed_deviation) {
            return Err(Error::invalid(format!(
                "sim_params.speed_deviation must be in [0, 1), got {}",
                self.speed_deviation
            )));
        }
        if self.yellow_steps == 0 {
            return Err(Error::invalid("sim_params.yellow_steps must be >= 1"));
        }
        Ok(())
    }

    /// Space one stopped vehicle occupies in a queue.
    pub fn vehicle_spacing(&self) -> f64 {
        self.vehicle_length + self.min_gap
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: RoadNetwork,
    pub flows: Vec<FlowSpec>,
    pub sim_params: SimParams,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.sim_params.validate()?;
        for f in &self.flows {
            f.validate()?;
        }
        Ok(())
    }

    /// Departures of all flows, each flow seeded from the scenario seed.
    pub fn schedule(&self) -> Result<FlowSchedule> {
        let parts = self
            .flows
            .iter()
            .enumerate()
            .map(|(k, f)| generate_flows(&self.network, f, self.seed.wrapping_add(k as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowSchedule::merge(parts))
    }

    /// Same scenario with every flow's horizon replaced.
    pub fn with_horizon(&self, horizon: u32) -> Scenario {
        let mut s = self.clone();
        for f in &mut s.flows {
            f.horizon = horizon;
        }
        s
    }
}

#[derive(Serialize)]
struct ScenarioFileOut<'a> {
    schema_version: u32,
    seed: u64,
    sim_params: &'a SimParams,
    flows: &'a [FlowSpec],
    network: &'a RoadNetwork,
}

#[derive(Deserialize)]
struct ScenarioFileIn {
    schema_version: u32,
    seed: u64,
    sim_params: Option<SimParams>,
    #[serde(default)]
    flows: Vec<FlowSpec>,
    network: RoadNetwork,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    /// True when the file had no `sim_params` table and defaults were used.
    pub defaulted_sim_params: bool,
}

pub fn scenario_to_string(scenario: &Scenario) -> Result<String> {
    let out = ScenarioFileOut {
        schema_version: SCHEMA_VERSION,
        seed: scenario.seed,
        sim_params: &scenario.sim_params,
        flows: &scenario.flows,
        network: &scenario.network,
    };
    toml::to_string(&out).map_err(|e| Error::Parse(e.to_string()))
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scenario_to_string(scenario)?)?;
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario> {
    let probe: VersionProbe = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    match probe.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: SCHEMA_VERSION,
            })
        }
        None => return Err(Error::Parse("missing field `schema_version`".into())),
    }
    let raw: ScenarioFileIn = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    debug_assert_eq!(raw.schema_version, SCHEMA_VERSION);
    let defaulted_sim_params = raw.sim_params.is_none();
    let scenario = Scenario {
        network: raw.network,
        flows: raw.flows,
        sim_params: raw.sim_params.unwrap_or_default(),
        seed: raw.seed,
    };
    scenario.validate().map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::Parse(msg),
        other => other,
    })?;
    Ok(LoadedScenario {
        scenario,
        defaulted_sim_params,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_grid_map;

    fn grid_scenario() -> Scenario {
        Scenario {
            network: build_grid_map(3, 5, &[200.0, 180.0, 240.0], 4).unwrap(),
            flows: vec![FlowSpec::new(1.0, 1000), FlowSpec::new(0.8, 1000)],
            sim_params: SimParams::default(),
            seed: 7,
        }
    }

    #[test]
    fn round_trip() {
        let s = grid_scenario();
        let text = scenario_to_string(&s).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert!(!back.defaulted_sim_params);
        assert_eq!(back.scenario, s);
    }

    #[test]
    fn negative_length_names_the_lane() {
        let mut s = grid_scenario();
        s.network.lanes[3].length = -10.0;
        let text = scenario_to_string(&s).unwrap();
        let err = parse_scenario(&text).unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("lane 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_sim_params_uses_defaults() {
        let s = grid_scenario();
        let text = scenario_to_string(&s).unwrap();
        let mut kept = Vec::new();
        let mut skipping = false;
        for line in text.lines() {
            if line.starts_with('[') {
                skipping = line.trim() == "[sim_params]";
            }
            if !skipping {
                kept.push(line);
            }
        }
        let back = parse_scenario(&kept.join("\n")).unwrap();
        assert!(back.defaulted_sim_params);
        assert_eq!(back.scenario.sim_params.start_accel, 2.0);
        assert_eq!(back.scenario.sim_params.stop_decel, 4.5);
        assert_eq!(back.scenario.sim_params.reaction_time, 0.8);
    }

    #[test]
    fn version_mismatch() {
        let text = scenario_to_string(&grid_scenario())
            .unwrap()
            .replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::Version {
                found: 9,
                expected: 1
            })
        ));
    }

    #[test]
    fn malformed_file_reports_position() {
        let err = parse_scenario("schema_version = 1\nseed = \"x\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }
}
