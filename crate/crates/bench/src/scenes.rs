//! The desk-scale scene set: small grids under three demand levels.

use trafficrl::netmodel::{build_grid_map, FlowSpec, Scenario, SimParams};

use crate::error::Result;

pub const GRIDS: [(usize, usize); 4] = [(1, 1), (2, 2), (3, 3), (3, 5)];
/// Seconds between departures.
pub const FLOW_PERIODS: [f64; 3] = [0.8, 1.0, 1.2];
pub const LANE_PROFILE: [f64; 1] = [200.0];
pub const PHASES: usize = 4;
/// Flow horizon of the seen split.
pub const SEEN_HORIZON: u32 = 1000;

pub fn grid_scenario(
    rows: usize,
    cols: usize,
    lane_profile: &[f64],
    period: f64,
    horizon: u32,
    seed: u64,
) -> Result<Scenario> {
    let scenario = Scenario {
        network: build_grid_map(rows, cols, lane_profile, PHASES)?,
        flows: vec![FlowSpec::new(period, horizon)],
        sim_params: SimParams::default(),
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Default scene: uniform 200 m lanes, the seen-split horizon, seed 1.
pub fn default_scene(rows: usize, cols: usize, period: f64) -> Result<Scenario> {
    grid_scenario(rows, cols, &LANE_PROFILE, period, SEEN_HORIZON, 1)
}

pub fn scene_name(rows: usize, cols: usize) -> String {
    format!("grid{rows}x{cols}")
}

/// Label of a scenario's demand, e.g. `p1.0`.
pub fn flow_name(scenario: &Scenario) -> String {
    match scenario.flows.as_slice() {
        [] => "none".into(),
        [f] => format!("p{:.1}", f.period),
        many => many
            .iter()
            .map(|f| format!("p{:.1}", f.period))
            .collect::<Vec<_>>()
            .join("+"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_set_builds() {
        for (r, c) in GRIDS {
            for p in FLOW_PERIODS {
                let s = default_scene(r, c, p).unwrap();
                assert_eq!(s.network.intersection_count(), r * c);
            }
        }
        assert_eq!(flow_name(&default_scene(1, 1, 1.0).unwrap()), "p1.0");
        assert_eq!(scene_name(3, 5), "grid3x5");
    }
}
