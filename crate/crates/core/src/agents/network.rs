use std::sync::Arc;

use rand::Rng;

use super::ActionMatrix;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::netmodel::{RoadNetwork, SimParams};
use crate::tensor::{argmax_valid, Matrix, ParamId, ParamStore, Tape, Var};

/// Waiting-time sums are divided by this before entering the network.
const WAIT_FEATURE_SCALE: f64 = 100.0;

/// Width of one intersection's feature row: per-lane counts, per-lane
/// waiting sums (both padded to the widest intersection) and a one-hot of
/// the committed phase.
pub fn node_width(network: &RoadNetwork) -> usize {
    2 * network.max_incoming() + network.max_phase_count()
}

/// Maps detector observations to per-intersection feature rows.
#[derive(Clone, Debug)]
pub struct FeatureLayout {
    lanes: usize,
    phases: usize,
    /// Offset of each intersection's first lane in observation order.
    offsets: Vec<usize>,
    incoming: Vec<usize>,
    /// Vehicles that fit on each controlled lane.
    capacity: Vec<f64>,
}

impl FeatureLayout {
    pub fn new(network: &RoadNetwork, params: &SimParams) -> FeatureLayout {
        let mut offsets = Vec::with_capacity(network.intersection_count());
        let mut acc = 0;
        for inter in &network.intersections {
            offsets.push(acc);
            acc += inter.incoming.len();
        }
        let spacing = params.vehicle_spacing();
        FeatureLayout {
            lanes: network.max_incoming(),
            phases: network.max_phase_count(),
            offsets,
            incoming: network
                .intersections
                .iter()
                .map(|i| i.incoming.len())
                .collect(),
            capacity: network
                .controlled_lanes()
                .iter()
                .map(|&l| (network.lanes[l].length / spacing).max(1.0))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        2 * self.lanes + self.phases
    }
}

/// Concatenated feature rows of `nodes`, in the given order.
pub fn encode_state(layout: &FeatureLayout, obs: &Observation, nodes: &[usize]) -> Vec<f64> {
    let w = layout.width();
    let mut out = vec![0.0; nodes.len() * w];
    for (row, &i) in out.chunks_mut(w).zip(nodes) {
        let base = layout.offsets[i];
        for k in 0..layout.incoming[i] {
            row[k] = f64::from(obs.s_num[base + k]) / layout.capacity[base + k];
            row[layout.lanes + k] = obs.s_wt[base + k] / WAIT_FEATURE_SCALE;
        }
        // The committed phase rather than the displayed one: during yellow
        // the displayed phase hides the switch that is already under way.
        if let Some(&p) = obs.committed.get(i) {
            row[2 * layout.lanes + p] = 1.0;
        }
    }
    out
}

/// Intersections ordered column by column (west to east, then north to
/// south within a column) and cut into consecutive groups of `size`.
pub fn proximity_groups(network: &RoadNetwork, size: usize) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = (0..network.intersection_count()).collect();
    ids.sort_by(|&a, &b| {
        let (pa, pb) = (
            network.intersections[a].position,
            network.intersections[b].position,
        );
        pa.0.total_cmp(&pb.0)
            .then(pa.1.total_cmp(&pb.1))
            .then(a.cmp(&b))
    });
    ids.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    /// Node rows concatenated into one flat vector.
    Concat,
    /// Shared-weight graph convolutions `relu(A_hat F W)`, one per width,
    /// then flattened.
    Gcn {
        widths: Vec<usize>,
        adjacency: Arc<Matrix>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadKind {
    /// One `m`-score row per intersection.
    Unified,
    /// One-hot over the joint phases of each group (local node indices).
    Joint { groups: Vec<Vec<usize>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetworkSpec {
    /// Phase count per node, in input order.
    pub phase_counts: Vec<usize>,
    pub node_width: usize,
    pub encoder: Encoder,
    pub hidden: Vec<usize>,
    pub head: HeadKind,
    /// Extra scalar output column after the action scores.
    pub value_head: bool,
}

impl QNetworkSpec {
    pub fn nodes(&self) -> usize {
        self.phase_counts.len()
    }

    pub fn max_phases(&self) -> usize {
        self.phase_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn input_width(&self) -> usize {
        self.nodes() * self.node_width
    }

    pub fn branches(&self) -> Vec<Vec<usize>> {
        match &self.head {
            HeadKind::Unified => (0..self.nodes()).map(|i| vec![i]).collect(),
            HeadKind::Joint { groups } => groups.clone(),
        }
    }

    fn branch_size(&self, branch: &[usize]) -> usize {
        self.max_phases().pow(branch.len() as u32)
    }

    /// Start of each branch in the score vector, plus the total.
    pub fn branch_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = vec![0];
        for b in self.branches() {
            acc += self.branch_size(&b);
            out.push(acc);
        }
        out
    }

    pub fn score_width(&self) -> usize {
        *self.branch_offsets().last().unwrap_or(&0)
    }

    pub fn output_width(&self) -> usize {
        self.score_width() + usize::from(self.value_head)
    }

    /// Index within a branch of the joint action of its nodes.
    pub fn encode_branch(&self, branch: &[usize], phases: &[usize]) -> usize {
        let m = self.max_phases();
        branch
            .iter()
            .rev()
            .fold(0, |acc, &node| acc * m + phases[node])
    }

    /// Phase per branch node for a branch index.
    pub fn decode_branch(&self, branch: &[usize], mut index: usize) -> Vec<usize> {
        let m = self.max_phases();
        branch
            .iter()
            .map(|_| {
                let p = index % m;
                index /= m;
                p
            })
            .collect()
    }

    /// Validity of every score entry.
    pub fn score_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.score_width());
        for b in self.branches() {
            for idx in 0..self.branch_size(&b) {
                let phases = self.decode_branch(&b, idx);
                mask.push(
                    b.iter()
                        .zip(&phases)
                        .all(|(&node, &p)| p < self.phase_counts[node]),
                );
            }
        }
        mask
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes() == 0 || self.node_width == 0 {
            return Err(Error::invalid(
                "network needs at least one node and a non-empty feature row",
            ));
        }
        if self.phase_counts.contains(&0) {
            return Err(Error::invalid("every node needs at least one phase"));
        }
        if let Encoder::Gcn { widths, adjacency } = &self.encoder {
            if widths.is_empty() || adjacency.shape() != (self.nodes(), self.nodes()) {
                return Err(Error::Shape {
                    op: "gcn adjacency",
                    left: (self.nodes(), self.nodes()),
                    right: adjacency.shape(),
                });
            }
        }
        if let HeadKind::Joint { groups } = &self.head {
            let mut seen = vec![false; self.nodes()];
            for &i in groups.iter().flatten() {
                if i >= self.nodes() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::invalid("joint head groups must partition the nodes"));
                }
            }
            if seen.contains(&false) || groups.iter().any(Vec::is_empty) {
                return Err(Error::invalid("joint head groups must partition the nodes"));
            }
        }
        Ok(())
    }

    /// Width fed to the first dense layer.
    fn flat_width(&self) -> usize {
        match &self.encoder {
            Encoder::Concat => self.input_width(),
            Encoder::Gcn { widths, .. } => {
                self.nodes() * widths.last().copied().unwrap_or(self.node_width)
            }
        }
    }
}

/// Weights plus biases of a chain of dense layers.
pub fn count_dense_stack(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Learnable scalars of a network built from `spec`.
pub fn count_parameters(spec: &QNetworkSpec) -> usize {
    let gcn = match &spec.encoder {
        Encoder::Concat => 0,
        Encoder::Gcn { widths, .. } => {
            let mut prev = spec.node_width;
            widths
                .iter()
                .map(|&w| {
                    let c = prev * w;
                    prev = w;
                    c
                })
                .sum()
        }
    };
    let mut chain = vec![spec.flat_width()];
    chain.extend(&spec.hidden);
    chain.push(spec.output_width());
    gcn + count_dense_stack(&chain)
}

/// Encoder, dense trunk and score head.
#[derive(Clone, Debug)]
pub struct QNetwork {
    spec: QNetworkSpec,
    params: ParamStore,
    gcn: Vec<ParamId>,
    dense: Vec<(ParamId, ParamId)>,
}

impl QNetwork {
    pub fn new(spec: QNetworkSpec, rng: &mut impl Rng) -> Result<QNetwork> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut gcn = Vec::new();
        if let Encoder::Gcn { widths, .. } = &spec.encoder {
            let mut prev = spec.node_width;
            for (k, &w) in widths.iter().enumerate() {
                gcn.push(params.add_glorot(format!("gcn{k}.w"), prev, w, rng));
                prev = w;
            }
        }
        let mut chain = vec![spec.flat_width()];
        chain.extend(&spec.hidden);
        chain.push(spec.output_width());
        let mut dense = Vec::new();
        for (k, w) in chain.windows(2).enumerate() {
            let name = if k + 2 == chain.len() {
                "head".to_string()
            } else {
                format!("dense{k}")
            };
            let wid = params.add_glorot(format!("{name}.w"), w[0], w[1], rng);
            let bid = params.add_zeros(format!("{name}.b"), 1, w[1]);
            dense.push((wid, bid));
        }
        Ok(QNetwork {
            spec,
            params,
            gcn,
            dense,
        })
    }

    pub fn spec(&self) -> &QNetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Records the forward pass of a `batch x input_width` input.
    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, input: Var) -> Result<Var> {
        let (batch, width) = tape.value(input).shape();
        if width != self.spec.input_width() {
            return Err(Error::Shape {
                op: "q_forward",
                left: (batch, self.spec.input_width()),
                right: (batch, width),
            });
        }
        let n = self.spec.nodes();
        let mut x = input;
        if let Encoder::Gcn { adjacency, .. } = &self.spec.encoder {
            x = tape.reshape(x, batch * n, self.spec.node_width)?;
            for &w in &self.gcn {
                let wv = tape.param(params, w);
                x = tape.gcn_layer(x, Arc::clone(adjacency), wv, true)?;
            }
            let last = tape.value(x).cols();
            x = tape.reshape(x, batch, n * last)?;
        }
        let layers = self.dense.len();
        for (k, &(w, b)) in self.dense.iter().enumerate() {
            let (wv, bv) = (tape.param(params, w), tape.param(params, b));
            x = tape.dense(x, wv, bv)?;
            if k + 1 < layers {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }

    /// Outputs for a batch of states, without keeping the tape.
    pub fn predict_with(&self, params: &ParamStore, states: Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let x = tape.input(states);
        let out = self.forward(&mut tape, params, x)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict(&self, states: Matrix) -> Result<Matrix> {
        self.predict_with(&self.params, states)
    }

    /// Best valid joint action of every branch, as a phase per node.
    pub fn greedy(&self, scores: &[f64]) -> Vec<usize> {
        let mask = self.spec.score_mask();
        let offsets = self.spec.branch_offsets();
        let mut phases = vec![0; self.spec.nodes()];
        for (k, b) in self.spec.branches().iter().enumerate() {
            let (lo, hi) = (offsets[k], offsets[k + 1]);
            let idx = argmax_valid(&scores[lo..hi], &mask[lo..hi]).unwrap_or(0);
            for (&node, p) in b.iter().zip(self.spec.decode_branch(b, idx)) {
                phases[node] = p;
            }
        }
        phases
    }

    /// Scores as an `n x m` matrix. Joint heads report, for each phase, the
    /// best joint score that includes it; `chosen` is the greedy action.
    pub fn action_matrix(&self, scores: &[f64]) -> ActionMatrix {
        let spec = &self.spec;
        let mut a = ActionMatrix::for_phase_counts(&spec.phase_counts);
        let m = a.m;
        match &spec.head {
            HeadKind::Unified => a.values.copy_from_slice(&scores[..spec.nodes() * m]),
            HeadKind::Joint { .. } => {
                a.values.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
                let mask = spec.score_mask();
                let offsets = spec.branch_offsets();
                for (k, b) in spec.branches().iter().enumerate() {
                    for idx in 0..offsets[k + 1] - offsets[k] {
                        if !mask[offsets[k] + idx] {
                            continue;
                        }
                        let s = scores[offsets[k] + idx];
                        for (&node, p) in b.iter().zip(spec.decode_branch(b, idx)) {
                            let slot = &mut a.values[node * m + p];
                            *slot = f64::max(*slot, s);
                        }
                    }
                }
                for (v, &ok) in a.values.iter_mut().zip(&a.mask) {
                    if !ok {
                        *v = 0.0;
                    }
                }
            }
        }
        a.chosen = self.greedy(scores);
        a
    }
}
