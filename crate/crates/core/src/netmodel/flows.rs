use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LaneId, Node, RoadNetwork};
use crate::error::{Error, Result};

/// Length of one simulation step in seconds.
pub const STEP_SECONDS: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePolicy {
    /// Origin and destination lanes drawn at random, boundary lanes weighted
    /// by `fringe_weight` against 1 for internal lanes; shortest path between.
    #[default]
    FringeWeighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    /// Seconds between consecutive departures.
    pub period: f64,
    /// Last step at which a departure may be scheduled.
    pub horizon: u32,
    #[serde(default)]
    pub route_policy: RoutePolicy,
    pub fringe_weight: f64,
    pub max_route_attempts: u32,
}

impl FlowSpec {
    pub fn new(period: f64, horizon: u32) -> Self {
        FlowSpec {
            period,
            horizon,
            route_policy: RoutePolicy::FringeWeighted,
            fringe_weight: 10.0,
            max_route_attempts: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::invalid(format!(
                "flow period must be > 0, got {}",
                self.period
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("flow horizon must be > 0"));
        }
        if self.max_route_attempts == 0 {
            return Err(Error::invalid("max_route_attempts must be >= 1"));
        }
        if !(self.fringe_weight.is_finite() && self.fringe_weight > 0.0) {
            return Err(Error::invalid("fringe_weight must be > 0"));
        }
        Ok(())
    }

    /// Departure times `0, period, 2*period, ...` up to the horizon, in steps.
    pub fn departure_steps(&self) -> Vec<u32> {
        let horizon_s = f64::from(self.horizon) * STEP_SECONDS;
        (0u64..)
            .map(|k| k as f64 * self.period)
            .take_while(|t| *t <= horizon_s + 1e-9)
            .map(|t| (t / STEP_SECONDS).round() as u32)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Departure {
    pub step: u32,
    /// `None` when no route meeting the distance constraint was found.
    pub route: Option<Vec<LaneId>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub departures: Vec<Departure>,
    /// Departures dropped because route sampling failed.
    pub skipped: usize,
}

impl FlowSchedule {
    pub fn merge(schedules: impl IntoIterator<Item = FlowSchedule>) -> FlowSchedule {
        let mut out = FlowSchedule::default();
        for s in schedules {
            out.departures.extend(s.departures);
            out.skipped += s.skipped;
        }
        out.departures.sort_by_key(|d| d.step);
        out
    }
}

/// Samples the departure schedule for one flow. Deterministic in `rng_seed`.
///
/// A sampled trip is accepted when its shortest route crosses at least
/// `min(2, intersection_count)` intersections; otherwise it is resampled,
/// up to `max_route_attempts` times, before the vehicle is skipped.
pub fn generate_flows(
    network: &RoadNetwork,
    spec: &FlowSpec,
    rng_seed: u64,
) -> Result<FlowSchedule> {
    spec.validate()?;
    let origins: Vec<(LaneId, f64)> = network
        .lanes
        .iter()
        .filter(|l| !matches!(l.to, Node::Sink(_)))
        .map(|l| {
            (
                l.id,
                if matches!(l.from, Node::Source(_)) {
                    spec.fringe_weight
                } else {
                    1.0
                },
            )
        })
        .collect();
    let destinations: Vec<(LaneId, f64)> = network
        .lanes
        .iter()
        .filter(|l| !matches!(l.from, Node::Source(_)))
        .map(|l| {
            (
                l.id,
                if matches!(l.to, Node::Sink(_)) {
                    spec.fringe_weight
                } else {
                    1.0
                },
            )
        })
        .collect();
    if !network.sources().any(|_| true) || !network.sinks().any(|_| true) {
        return Err(Error::invalid(
            "network needs at least one source and one sink",
        ));
    }
    let origin_dist = WeightedIndex::new(origins.iter().map(|o| o.1))
        .map_err(|e| Error::invalid(format!("origin weights: {e}")))?;
    let dest_dist = WeightedIndex::new(destinations.iter().map(|d| d.1))
        .map_err(|e| Error::invalid(format!("destination weights: {e}")))?;
    let min_crossings = network.intersection_count().min(2);

    let mut router = Router::new(network);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut schedule = FlowSchedule::default();
    for step in spec.departure_steps() {
        let mut route = None;
        for _ in 0..spec.max_route_attempts {
            let from = origins[origin_dist.sample(&mut rng)].0;
            let to = destinations[dest_dist.sample(&mut rng)].0;
            if from == to {
                continue;
            }
            if let Some(path) = router.shortest(from, to) {
                if path.len() > min_crossings {
                    route = Some(path);
                    break;
                }
            }
        }
        if route.is_none() {
            schedule.skipped += 1;
        }
        schedule.departures.push(Departure { step, route });
    }
    Ok(schedule)
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    lane: LaneId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.lane.cmp(&self.lane))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the lane graph with per-origin shortest-path trees cached.
struct Router<'a> {
    network: &'a RoadNetwork,
    trees: Vec<Option<Vec<Option<LaneId>>>>,
}

impl<'a> Router<'a> {
    fn new(network: &'a RoadNetwork) -> Self {
        Router {
            network,
            trees: vec![None; network.lanes.len()],
        }
    }

    fn shortest(&mut self, from: LaneId, to: LaneId) -> Option<Vec<LaneId>> {
        let network = self.network;
        let tree = self.trees[from].get_or_insert_with(|| {
            let n = network.lanes.len();
            let mut dist = vec![f64::INFINITY; n];
            let mut parent = vec![None; n];
            let mut heap = BinaryHeap::new();
            dist[from] = 0.0;
            heap.push(Frontier {
                cost: 0.0,
                lane: from,
            });
            while let Some(Frontier { cost, lane }) = heap.pop() {
                if cost > dist[lane] {
                    continue;
                }
                for next in network.successors(lane) {
                    let c = cost + network.lanes[next].length;
                    if c < dist[next] {
                        dist[next] = c;
                        parent[next] = Some(lane);
                        heap.push(Frontier {
                            cost: c,
                            lane: next,
                        });
                    }
                }
            }
            parent
        });
        tree[to]?;
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = tree[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}
