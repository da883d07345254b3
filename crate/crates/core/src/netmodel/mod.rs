//! Road networks, scenarios and their generators.
//!
//! A [`RoadNetwork`] is a set of signalized intersections joined by
//! single-lane directed roads. Every road whose downstream end is an
//! intersection is a *controlled lane*: it has a stop line governed by that
//! intersection's phase program. Roads entering from the boundary start at a
//! [`Node::Source`]; roads leaving the network end at a [`Node::Sink`].

mod adjacency;
mod flows;
mod grid;
mod scenario;

pub use adjacency::{
    compute_adjacency, compute_adjacency_with, AdjacencyOptions, Normalization, WeightedAdjacency,
};
pub use flows::{generate_flows, Departure, FlowSchedule, FlowSpec, RoutePolicy, STEP_SECONDS};
pub use grid::build_grid_map;
pub use scenario::{
    load_scenario, parse_scenario, save_scenario, scenario_to_string, LoadedScenario, Scenario,
    SimParams, SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LaneId = usize;
pub type IntersectionId = usize;

/// Default urban speed limit, 50 km/h.
pub const DEFAULT_SPEED_LIMIT: f64 = 13.89;
/// Default detector coverage measured back from the stop line.
pub const DEFAULT_DETECTOR_ZONE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Intersection(IntersectionId),
    /// Boundary entry point. A source and a sink with the same index sit on
    /// the same perimeter approach.
    Source(usize),
    Sink(usize),
}

impl Node {
    pub fn intersection(self) -> Option<IntersectionId> {
        match self {
            Node::Intersection(i) => Some(i),
            _ => None,
        }
    }

    /// True when two nodes denote the same physical place.
    fn same_place(self, other: Node) -> bool {
        match (self, other) {
            (Node::Source(a) | Node::Sink(a), Node::Source(b) | Node::Sink(b)) => a == b,
            (Node::Intersection(a), Node::Intersection(b)) => a == b,
            _ => false,
        }
    }
}

/// The side of an intersection a lane arrives from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    North,
    East,
    South,
    West,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::North,
        Approach::East,
        Approach::South,
        Approach::West,
    ];

    pub fn crosses(self, other: Approach) -> bool {
        use Approach::*;
        matches!(
            (self, other),
            (North | South, East | West) | (East | West, North | South)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub from: Node,
    pub to: Node,
    pub length: f64,
    pub speed_limit: f64,
    pub detector_zone: f64,
    /// Side of the downstream intersection this lane enters from; `None`
    /// for lanes ending at a sink.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approach: Option<Approach>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: IntersectionId,
    pub position: (f64, f64),
    /// Incoming lanes in approach order.
    pub incoming: Vec<LaneId>,
    pub outgoing: Vec<LaneId>,
    /// Green lane sets, one per phase.
    pub phases: Vec<Vec<LaneId>>,
}

impl Intersection {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub intersections: Vec<Intersection>,
    pub lanes: Vec<Lane>,
    /// Pairs of incoming lanes whose movements cross and may not share a phase.
    #[serde(default)]
    pub conflicts: Vec<(LaneId, LaneId)>,
}

impl RoadNetwork {
    pub fn intersection_count(&self) -> usize {
        self.intersections.len()
    }

    pub fn max_phase_count(&self) -> usize {
        self.intersections
            .iter()
            .map(Intersection::phase_count)
            .max()
            .unwrap_or(0)
    }

    /// Largest number of incoming lanes at any intersection.
    pub fn max_incoming(&self) -> usize {
        self.intersections
            .iter()
            .map(|i| i.incoming.len())
            .max()
            .unwrap_or(0)
    }

    /// Controlled lanes in observation order: by intersection, then approach order.
    pub fn controlled_lanes(&self) -> Vec<LaneId> {
        self.intersections
            .iter()
            .flat_map(|i| i.incoming.iter().copied())
            .collect()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Lane> {
        self.lanes
            .iter()
            .filter(|l| matches!(l.from, Node::Source(_)))
    }

    pub fn sinks(&self) -> impl Iterator<Item = &Lane> {
        self.lanes.iter().filter(|l| matches!(l.to, Node::Sink(_)))
    }

    /// Lanes a vehicle on `lane` may continue onto (no U-turns).
    pub fn successors(&self, lane: LaneId) -> impl Iterator<Item = LaneId> + '_ {
        let l = &self.lanes[lane];
        let outgoing: &[LaneId] = match l.to {
            Node::Intersection(i) => &self.intersections[i].outgoing,
            _ => &[],
        };
        outgoing
            .iter()
            .copied()
            .filter(move |&o| !self.lanes[o].to.same_place(l.from))
    }

    /// Checks structural invariants: lane geometry, phase coverage, and
    /// that no phase turns two conflicting lanes green together.
    pub fn validate(&self) -> Result<()> {
        if self.intersections.is_empty() {
            return Err(Error::invalid("network has no intersections"));
        }
        for (idx, lane) in self.lanes.iter().enumerate() {
            if lane.id != idx {
                return Err(Error::invalid(format!(
                    "lane {} stored at index {idx}",
                    lane.id
                )));
            }
            if !(lane.length.is_finite() && lane.length > 0.0) {
                return Err(Error::invalid(format!(
                    "lane {idx}: length must be > 0, got {}",
                    lane.length
                )));
            }
            if !(lane.speed_limit.is_finite() && lane.speed_limit > 0.0) {
                return Err(Error::invalid(format!(
                    "lane {idx}: speed_limit must be > 0"
                )));
            }
            if !(lane.detector_zone >= 0.0 && lane.detector_zone <= lane.length) {
                return Err(Error::invalid(format!(
                    "lane {idx}: detector_zone must lie within the lane"
                )));
            }
            for node in [lane.from, lane.to] {
                if let Node::Intersection(i) = node {
                    if i >= self.intersections.len() {
                        return Err(Error::invalid(format!(
                            "lane {idx}: unknown intersection {i}"
                        )));
                    }
                }
            }
        }
        for (idx, inter) in self.intersections.iter().enumerate() {
            if inter.id != idx {
                return Err(Error::invalid(format!(
                    "intersection {} stored at index {idx}",
                    inter.id
                )));
            }
            if inter.phase_count() < 2 {
                return Err(Error::invalid(format!(
                    "intersection {idx}: needs at least 2 phases"
                )));
            }
            for &l in inter.incoming.iter().chain(&inter.outgoing) {
                if l >= self.lanes.len() {
                    return Err(Error::invalid(format!(
                        "intersection {idx}: unknown lane {l}"
                    )));
                }
            }
            for &l in &inter.incoming {
                if self.lanes[l].to != Node::Intersection(idx) {
                    return Err(Error::invalid(format!(
                        "intersection {idx}: lane {l} does not end here"
                    )));
                }
                if !inter.phases.iter().any(|p| p.contains(&l)) {
                    return Err(Error::invalid(format!(
                        "intersection {idx}: lane {l} is never green"
                    )));
                }
            }
            for (p, green) in inter.phases.iter().enumerate() {
                for &l in green {
                    if !inter.incoming.contains(&l) {
                        return Err(Error::invalid(format!(
                            "intersection {idx} phase {p}: lane {l} is not an incoming lane"
                        )));
                    }
                }
                for &(a, b) in &self.conflicts {
                    if green.contains(&a) && green.contains(&b) {
                        return Err(Error::invalid(format!(
                            "intersection {idx} phase {p}: conflicting lanes {a} and {b} both green"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
