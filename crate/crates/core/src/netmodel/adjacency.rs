use serde::{Deserialize, Serialize};

use super::RoadNetwork;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `rownorm(A + I)`.
    #[default]
    SelfLoopsThenRowNorm,
    /// `rownorm(A) + I`.
    RowNormThenSelfLoops,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyOptions {
    pub normalization: Normalization,
    /// When false every connected pair gets weight 1.
    pub edge_weights: bool,
}

impl Default for AdjacencyOptions {
    fn default() -> Self {
        AdjacencyOptions {
            normalization: Normalization::default(),
            edge_weights: true,
        }
    }
}

/// Intersection graph with lane-length edge weights, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedAdjacency {
    pub n: usize,
    pub entries: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl WeightedAdjacency {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn normalized_at(&self, i: usize, j: usize) -> f64 {
        self.normalized[i * self.n + j]
    }
}

pub fn compute_adjacency(network: &RoadNetwork) -> WeightedAdjacency {
    compute_adjacency_with(network, AdjacencyOptions::default())
}

/// `A[i][j] = max_len / len(i -> j)` where `max_len` is the longest lane
/// joining two intersections, followed by the chosen normalization.
pub fn compute_adjacency_with(network: &RoadNetwork, opts: AdjacencyOptions) -> WeightedAdjacency {
    let n = network.intersection_count();
    let links: Vec<(usize, usize, f64)> = network
        .lanes
        .iter()
        .filter_map(|l| Some((l.from.intersection()?, l.to.intersection()?, l.length)))
        .filter(|(a, b, _)| a != b)
        .collect();
    let max_len = links.iter().map(|l| l.2).fold(0.0, f64::max);

    let mut entries = vec![0.0; n * n];
    for &(a, b, len) in &links {
        let w = if opts.edge_weights {
            max_len / len
        } else {
            1.0
        };
        // Parallel lanes keep the strongest (shortest) link.
        let slot = &mut entries[a * n + b];
        *slot = f64::max(*slot, w);
    }
    let normalized = normalize(&entries, n, opts.normalization);
    WeightedAdjacency {
        n,
        entries,
        normalized,
    }
}

fn normalize(a: &[f64], n: usize, how: Normalization) -> Vec<f64> {
    let mut out = a.to_vec();
    let add_identity = |m: &mut [f64]| {
        for i in 0..n {
            m[i * n + i] += 1.0;
        }
    };
    let row_normalize = |m: &mut [f64]| {
        for row in m.chunks_mut(n.max(1)) {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
    };
    match how {
        Normalization::SelfLoopsThenRowNorm => {
            add_identity(&mut out);
            row_normalize(&mut out);
        }
        Normalization::RowNormThenSelfLoops => {
            row_normalize(&mut out);
            add_identity(&mut out);
        }
    }
    out
}
