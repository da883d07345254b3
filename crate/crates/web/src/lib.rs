//! WebAssembly front for the simulator: a steppable grid demo, the
//! intersection adjacency, and a controller comparison.
//!
//! The pure-Rust halves (`Demo`, `adjacency_matrix`, `compare`) are usable
//! natively; the `#[wasm_bindgen]` wrappers only convert errors.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use trafficrl::agents::{evaluate, Controller};
use trafficrl::env::{compute_cost, Env, EnvConfig};
use trafficrl::netmodel::{
    build_grid_map, compute_adjacency, Approach, FlowSpec, Node, RoadNetwork, Scenario, SimParams,
};
use trafficrl::{Error, Result};
use wasm_bindgen::prelude::*;

const PHASES: usize = 4;
/// Drawn length of perimeter lanes, in network meters.
const STUB: f64 = 60.0;
/// Sideways offset separating the two directions of a road.
const LANE_OFFSET: f64 = 4.0;
/// Lane colour codes returned by [`GridDemo::lane_signals`].
pub const RED: u8 = 0;
pub const GREEN: u8 = 1;
pub const YELLOW: u8 = 2;
pub const UNSIGNALIZED: u8 = 3;

pub fn controller_named(name: &str) -> Result<Controller> {
    Ok(match name {
        "random" => Controller::Random,
        "fixed" => Controller::Fixed { dwell: 20 },
        "auction" => Controller::Auction { probes: 32 },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown controller `{other}` (random, fixed, auction)"
            )))
        }
    })
}

pub fn grid(
    rows: usize,
    cols: usize,
    lane_length: f64,
    period: f64,
    horizon: u32,
    seed: u64,
) -> Result<Scenario> {
    if rows * cols > 64 {
        return Err(Error::InvalidArgument(
            "the demo is limited to 64 intersections".into(),
        ));
    }
    let s = Scenario {
        network: build_grid_map(rows, cols, &[lane_length], PHASES)?,
        flows: vec![FlowSpec::new(period, horizon)],
        sim_params: SimParams::default(),
        seed,
    };
    s.validate()?;
    Ok(s)
}

fn unit(a: Approach) -> (f64, f64) {
    // Direction pointing from the intersection towards where traffic comes from.
    match a {
        Approach::North => (0.0, -1.0),
        Approach::South => (0.0, 1.0),
        Approach::West => (-1.0, 0.0),
        Approach::East => (1.0, 0.0),
    }
}

/// Straight-line drawing of every lane as `[x0, y0, x1, y1]`, shifted to the
/// right of its direction of travel.
pub fn lane_geometry(net: &RoadNetwork) -> Vec<[f64; 4]> {
    let pos = |i: usize| net.intersections[i].position;
    // Perimeter points, keyed by source/sink index.
    let mut boundary = std::collections::HashMap::new();
    for l in &net.lanes {
        if let (Node::Source(k), Node::Intersection(i), Some(a)) = (l.from, l.to, l.approach) {
            let (x, y) = pos(i);
            let (ux, uy) = unit(a);
            boundary.insert(k, (x + ux * STUB, y + uy * STUB));
        }
    }
    net.lanes
        .iter()
        .map(|l| {
            let at = |n: Node| match n {
                Node::Intersection(i) => pos(i),
                Node::Source(k) | Node::Sink(k) => boundary.get(&k).copied().unwrap_or((0.0, 0.0)),
            };
            let ((x0, y0), (x1, y1)) = (at(l.from), at(l.to));
            let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(1e-9);
            // Right-hand normal in screen coordinates (y grows downwards).
            let (nx, ny) = (-(y1 - y0) / len, (x1 - x0) / len);
            [
                x0 + nx * LANE_OFFSET,
                y0 + ny * LANE_OFFSET,
                x1 + nx * LANE_OFFSET,
                y1 + ny * LANE_OFFSET,
            ]
        })
        .collect()
}

/// A running simulation under one controller.
pub struct Demo {
    env: Env,
    controller: Controller,
    rng: ChaCha8Rng,
    geometry: Vec<[f64; 4]>,
}

impl Demo {
    pub fn new(scenario: Scenario, controller: Controller, seed: u64) -> Result<Demo> {
        let geometry = lane_geometry(&scenario.network);
        let env = Env::new(
            Arc::new(scenario),
            EnvConfig {
                episode_length: u32::MAX,
                ..Default::default()
            },
        )?;
        Ok(Demo {
            env,
            controller,
            rng: ChaCha8Rng::seed_from_u64(seed),
            geometry,
        })
    }

    pub fn set_controller(&mut self, controller: Controller) {
        self.controller = controller;
    }

    pub fn step(&mut self, n: u32) -> Result<f64> {
        for _ in 0..n {
            let a = self.controller.act(&self.env, &mut self.rng)?;
            self.env.step(&a)?;
        }
        Ok(self.cost())
    }

    pub fn clock(&self) -> u32 {
        self.env.sim().clock()
    }

    /// Accumulated waiting time of vehicles in the network, seconds.
    pub fn cost(&self) -> f64 {
        compute_cost(self.env.sim())
    }

    pub fn arrivals(&self) -> u64 {
        self.env.sim().counters().arrived
    }

    pub fn active(&self) -> usize {
        self.env.sim().active_count()
    }

    pub fn geometry(&self) -> &[[f64; 4]] {
        &self.geometry
    }

    /// `(x, y, waiting)` per vehicle, `waiting` being 1 at or below the
    /// waiting threshold.
    pub fn vehicles(&self) -> Vec<[f64; 3]> {
        let sim = self.env.sim();
        let threshold = sim.params().wait_threshold;
        sim.vehicles()
            .map(|v| {
                let lane = v.lane();
                let [x0, y0, x1, y1] = self.geometry[lane];
                let f = (v.pos / sim.network().lanes[lane].length).clamp(0.0, 1.0);
                let waiting = if v.speed <= threshold { 1.0 } else { 0.0 };
                [x0 + (x1 - x0) * f, y0 + (y1 - y0) * f, waiting]
            })
            .collect()
    }

    /// Colour code per lane for its stop line.
    pub fn lane_signals(&self) -> Vec<u8> {
        let sim = self.env.sim();
        sim.network()
            .lanes
            .iter()
            .map(|l| match l.to {
                Node::Intersection(i) if sim.signals()[i].in_yellow => YELLOW,
                Node::Intersection(_) if sim.is_green(l.id) => GREEN,
                Node::Intersection(_) => RED,
                _ => UNSIGNALIZED,
            })
            .collect()
    }
}

/// Row-normalized weighted adjacency `rownorm(A + I)`, row-major.
pub fn adjacency_matrix(rows: usize, cols: usize, lane_lengths: &[f64]) -> Result<Vec<f64>> {
    let net = build_grid_map(rows, cols, lane_lengths, PHASES)?;
    Ok(compute_adjacency(&net).normalized)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub controller: String,
    pub cost_wt_hours: f64,
    pub stop_time_hours: f64,
    pub arrivals: u64,
}

/// Runs each baseline controller for `steps` from the same start.
pub fn compare(
    rows: usize,
    cols: usize,
    lane_length: f64,
    period: f64,
    steps: u32,
    seed: u64,
) -> Result<Vec<Comparison>> {
    if steps == 0 || steps > 20_000 {
        return Err(Error::InvalidArgument("steps must be in 1..=20000".into()));
    }
    let scenario = Arc::new(grid(rows, cols, lane_length, period, steps, seed)?);
    ["random", "fixed", "auction"]
        .into_iter()
        .map(|name| {
            let m = evaluate(
                Arc::clone(&scenario),
                &controller_named(name)?,
                steps,
                1.0,
                seed,
            )?;
            Ok(Comparison {
                controller: name.to_string(),
                cost_wt_hours: m.cost_total() / 3600.0,
                stop_time_hours: m.total_stop_time / 3600.0,
                arrivals: m.arrivals,
            })
        })
        .collect()
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct GridDemo {
    inner: Demo,
}

#[wasm_bindgen]
impl GridDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        rows: usize,
        cols: usize,
        lane_length: f64,
        period: f64,
        controller: &str,
        seed: u32,
    ) -> std::result::Result<GridDemo, JsError> {
        let scenario =
            grid(rows, cols, lane_length, period, 100_000, u64::from(seed)).map_err(js)?;
        let c = controller_named(controller).map_err(js)?;
        Ok(GridDemo {
            inner: Demo::new(scenario, c, u64::from(seed)).map_err(js)?,
        })
    }

    pub fn set_controller(&mut self, name: &str) -> std::result::Result<(), JsError> {
        self.inner
            .set_controller(controller_named(name).map_err(js)?);
        Ok(())
    }

    /// Advances `n` steps; returns the current waiting-time cost in seconds.
    pub fn step(&mut self, n: u32) -> std::result::Result<f64, JsError> {
        self.inner.step(n).map_err(js)
    }

    pub fn clock(&self) -> u32 {
        self.inner.clock()
    }

    pub fn arrivals(&self) -> f64 {
        self.inner.arrivals() as f64
    }

    pub fn active(&self) -> usize {
        self.inner.active()
    }

    /// Flat `[x0, y0, x1, y1, ...]`, one quadruple per lane.
    pub fn lanes(&self) -> Vec<f64> {
        self.inner.geometry().iter().flatten().copied().collect()
    }

    /// Flat `[x, y, waiting, ...]`, one triple per vehicle.
    pub fn vehicles(&self) -> Vec<f64> {
        self.inner.vehicles().into_iter().flatten().collect()
    }

    pub fn lane_signals(&self) -> Vec<u8> {
        self.inner.lane_signals()
    }
}

#[wasm_bindgen(js_name = adjacency)]
pub fn adjacency_js(
    rows: usize,
    cols: usize,
    lane_lengths: Vec<f64>,
) -> std::result::Result<Vec<f64>, JsError> {
    adjacency_matrix(rows, cols, &lane_lengths).map_err(js)
}

/// JSON array of per-controller results.
#[wasm_bindgen(js_name = compareControllers)]
pub fn compare_js(
    rows: usize,
    cols: usize,
    lane_length: f64,
    period: f64,
    steps: u32,
    seed: u32,
) -> std::result::Result<String, JsError> {
    let rows = compare(rows, cols, lane_length, period, steps, u64::from(seed)).map_err(js)?;
    serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
}
