use super::{
    Approach, Intersection, IntersectionId, Lane, LaneId, Node, RoadNetwork, DEFAULT_DETECTOR_ZONE,
    DEFAULT_SPEED_LIMIT,
};
use crate::error::{Error, Result};

/// Builds a `rows x cols` grid of signalized intersections.
///
/// Neighbouring intersections are joined by a pair of opposing lanes and
/// every perimeter approach gets its own source and sink. Lane lengths are
/// taken from `lane_length_profile` cyclically: internal edges first
/// (horizontal, then vertical, both lanes of a pair sharing a length),
/// then boundary lanes.
///
/// Phase programs: phase 0 serves north/south, phase 1 east/west, and any
/// further phases are protected single-approach phases cycling N, E, S, W.
pub fn build_grid_map(
    rows: usize,
    cols: usize,
    lane_length_profile: &[f64],
    phase_count: usize,
) -> Result<RoadNetwork> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "grid dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if lane_length_profile.is_empty() {
        return Err(Error::invalid("lane length profile is empty"));
    }
    if let Some(bad) = lane_length_profile
        .iter()
        .find(|l| !(l.is_finite() && **l > 0.0))
    {
        return Err(Error::invalid(format!(
            "lane lengths must be > 0, got {bad}"
        )));
    }
    if phase_count < 2 {
        return Err(Error::invalid(format!(
            "cannot build a conflict-free program with {phase_count} phase(s); need at least 2"
        )));
    }

    let id = |r: usize, c: usize| -> IntersectionId { r * cols + c };
    let mut profile = lane_length_profile.iter().copied().cycle();
    let mut lanes: Vec<Lane> = Vec::new();
    let mut push_lane = |from: Node, to: Node, length: f64, approach: Option<Approach>| -> LaneId {
        let lid = lanes.len();
        lanes.push(Lane {
            id: lid,
            from,
            to,
            length,
            speed_limit: DEFAULT_SPEED_LIMIT,
            detector_zone: DEFAULT_DETECTOR_ZONE.min(length),
            approach,
        });
        lid
    };

    let mut h_len = vec![0.0; rows * cols.saturating_sub(1)];
    let mut v_len = vec![0.0; rows.saturating_sub(1) * cols];
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            let len = profile.next().unwrap_or(1.0);
            h_len[r * (cols - 1) + c] = len;
            let (a, b) = (id(r, c), id(r, c + 1));
            push_lane(
                Node::Intersection(a),
                Node::Intersection(b),
                len,
                Some(Approach::West),
            );
            push_lane(
                Node::Intersection(b),
                Node::Intersection(a),
                len,
                Some(Approach::East),
            );
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            let len = profile.next().unwrap_or(1.0);
            v_len[r * cols + c] = len;
            let (a, b) = (id(r, c), id(r + 1, c));
            push_lane(
                Node::Intersection(a),
                Node::Intersection(b),
                len,
                Some(Approach::North),
            );
            push_lane(
                Node::Intersection(b),
                Node::Intersection(a),
                len,
                Some(Approach::South),
            );
        }
    }

    let mut boundary = 0;
    for r in 0..rows {
        for c in 0..cols {
            let i = id(r, c);
            for side in Approach::ALL {
                let on_perimeter = match side {
                    Approach::North => r == 0,
                    Approach::South => r == rows - 1,
                    Approach::West => c == 0,
                    Approach::East => c == cols - 1,
                };
                if !on_perimeter {
                    continue;
                }
                let len = profile.next().unwrap_or(1.0);
                push_lane(
                    Node::Source(boundary),
                    Node::Intersection(i),
                    len,
                    Some(side),
                );
                push_lane(Node::Intersection(i), Node::Sink(boundary), len, None);
                boundary += 1;
            }
        }
    }

    // Cosmetic coordinates: cumulative edge lengths along the first row/column.
    let xs: Vec<f64> = (0..cols)
        .scan(0.0, |x, c| {
            let here = *x;
            if c + 1 < cols {
                *x += h_len[c];
            }
            Some(here)
        })
        .collect();
    let ys: Vec<f64> = (0..rows)
        .scan(0.0, |y, r| {
            let here = *y;
            if r + 1 < rows {
                *y += v_len[r * cols];
            }
            Some(here)
        })
        .collect();

    let mut intersections: Vec<Intersection> = (0..rows * cols)
        .map(|i| Intersection {
            id: i,
            position: (xs[i % cols], ys[i / cols]),
            incoming: Vec::new(),
            outgoing: Vec::new(),
            phases: Vec::new(),
        })
        .collect();
    for lane in &lanes {
        if let Node::Intersection(i) = lane.to {
            intersections[i].incoming.push(lane.id);
        }
        if let Node::Intersection(i) = lane.from {
            intersections[i].outgoing.push(lane.id);
        }
    }

    let mut conflicts = Vec::new();
    for inter in &mut intersections {
        inter
            .incoming
            .sort_by_key(|&l| approach_rank(lanes[l].approach));
        let lane_at = |side: Approach| -> Vec<LaneId> {
            inter
                .incoming
                .iter()
                .copied()
                .filter(|&l| lanes[l].approach == Some(side))
                .collect()
        };
        let mut phases = vec![
            [lane_at(Approach::North), lane_at(Approach::South)].concat(),
            [lane_at(Approach::East), lane_at(Approach::West)].concat(),
        ];
        for k in 2..phase_count {
            phases.push(lane_at(Approach::ALL[(k - 2) % 4]));
        }
        inter.phases = phases;
        for (x, &a) in inter.incoming.iter().enumerate() {
            for &b in &inter.incoming[x + 1..] {
                let (sa, sb) = (lanes[a].approach, lanes[b].approach);
                if let (Some(sa), Some(sb)) = (sa, sb) {
                    if sa.crosses(sb) {
                        conflicts.push((a, b));
                    }
                }
            }
        }
    }

    let network = RoadNetwork {
        intersections,
        lanes,
        conflicts,
    };
    network.validate()?;
    Ok(network)
}

fn approach_rank(a: Option<Approach>) -> usize {
    a.and_then(|a| Approach::ALL.iter().position(|&x| x == a))
        .unwrap_or(usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_intersection_grid() {
        let net = build_grid_map(3, 5, &[200.0], 4).unwrap();
        assert_eq!(net.intersection_count(), 15);
        assert!(net
            .intersections
            .iter()
            .all(|i| i.phase_count() == 4 && i.incoming.len() == 4));
    }

    #[test]
    fn single_intersection_has_only_boundary_lanes() {
        let net = build_grid_map(1, 1, &[200.0], 4).unwrap();
        assert_eq!(net.intersections[0].incoming.len(), 4);
        let internal = net
            .lanes
            .iter()
            .filter(|l| l.from.intersection().is_some() && l.to.intersection().is_some())
            .count();
        assert_eq!(internal, 0);
        assert_eq!(net.sources().count(), 4);
        assert_eq!(net.sinks().count(), 4);
    }

    #[test]
    fn two_by_two_internal_lanes() {
        // Edges: (0,1), (2,3) horizontal; (0,2), (1,3) vertical. Two lanes each.
        let net = build_grid_map(2, 2, &[100.0, 200.0], 4).unwrap();
        assert_eq!(net.intersection_count(), 4);
        let internal: Vec<&Lane> = net
            .lanes
            .iter()
            .filter(|l| l.from.intersection().is_some() && l.to.intersection().is_some())
            .collect();
        assert_eq!(internal.len(), 8);
        let lengths: Vec<f64> = internal.iter().map(|l| l.length).collect();
        assert_eq!(
            lengths,
            vec![100.0, 100.0, 200.0, 200.0, 100.0, 100.0, 200.0, 200.0]
        );
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(matches!(
            build_grid_map(0, 3, &[200.0], 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            build_grid_map(2, 2, &[200.0], 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            build_grid_map(2, 2, &[-5.0], 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            build_grid_map(2, 2, &[], 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn phases_never_green_crossing_movements() {
        for k in 2..=7 {
            let net = build_grid_map(2, 3, &[150.0, 250.0], k).unwrap();
            net.validate().unwrap();
        }
    }

    #[test]
    fn no_u_turn_successors() {
        let net = build_grid_map(2, 2, &[200.0], 4).unwrap();
        for lane in &net.lanes {
            for s in net.successors(lane.id) {
                assert!(!net.lanes[s].to.same_place(lane.from));
            }
        }
    }
}
