use rand::Rng;

use super::{ActionMatrix, QNetwork, QNetworkSpec, Transition};
use crate::error::{Error, Result};
use crate::tensor::{argmax_valid, Matrix, Optimizer, ParamStore, Tape};

/// Per intersection: a uniformly random valid phase with probability
/// `epsilon`, otherwise the masked argmax.
pub fn select_action(
    mut scores: ActionMatrix,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<ActionMatrix> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let greedy = scores.argmax();
    scores.chosen = (0..scores.n)
        .map(|i| {
            if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                scores.random_valid(i, rng)
            } else {
                greedy[i]
            }
        })
        .collect();
    Ok(scores)
}

/// Multiplicative decay applied once per learning step, with a floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub min: f64,
}

impl EpsilonSchedule {
    pub fn at(&self, learning_steps: u64) -> f64 {
        let exp = i32::try_from(learning_steps).unwrap_or(i32::MAX);
        (self.start * self.decay.powi(exp)).max(self.min)
    }
}

/// Factored double-DQN targets, one per (transition, branch).
///
/// Each branch picks its next action with the online scores and evaluates
/// it with the target scores; terminal transitions keep only the reward.
pub fn td_targets(
    spec: &QNetworkSpec,
    rewards: &[f64],
    dones: &[bool],
    next_online: &Matrix,
    next_target: &Matrix,
    gamma: f64,
) -> Matrix {
    let offsets = spec.branch_offsets();
    let k = offsets.len() - 1;
    let mask = spec.score_mask();
    let mut out = Matrix::zeros(rewards.len(), k);
    for (t, (&r, &done)) in rewards.iter().zip(dones).enumerate() {
        for b in 0..k {
            let (lo, hi) = (offsets[b], offsets[b + 1]);
            let boot = if done {
                0.0
            } else {
                let a = argmax_valid(&next_online.row(t)[lo..hi], &mask[lo..hi]).unwrap_or(0);
                gamma * next_target.get(t, lo + a)
            };
            out.set(t, b, r + boot);
        }
    }
    out
}

/// Mean squared TD error over all (transition, branch) pairs and its
/// gradient with respect to the score outputs.
pub fn td_loss(
    spec: &QNetworkSpec,
    q: &Matrix,
    actions: &[Vec<usize>],
    targets: &Matrix,
) -> (f64, Matrix) {
    let offsets = spec.branch_offsets();
    let branches = spec.branches();
    let pairs = (targets.rows() * targets.cols()).max(1) as f64;
    let mut grad = Matrix::zeros(q.rows(), q.cols());
    let mut loss = 0.0;
    for (t, action) in actions.iter().enumerate() {
        for (b, branch) in branches.iter().enumerate() {
            let col = offsets[b] + spec.encode_branch(branch, action);
            let diff = q.get(t, col) - targets.get(t, b);
            loss += diff * diff;
            grad.set(t, col, 2.0 * diff / pairs);
        }
    }
    (loss / pairs, grad)
}

fn stack(rows: impl ExactSizeIterator<Item = Vec<f64>>, width: usize) -> Result<Matrix> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::Shape {
                op: "stack states",
                left: (1, width),
                right: (1, r.len()),
            });
        }
        data.extend(r);
    }
    Matrix::from_vec(n, width, data)
}

/// One double-DQN step on `batch`. Parameters are left untouched when the
/// loss or any gradient is non-finite.
pub fn td_update(
    net: &mut QNetwork,
    target: &ParamStore,
    batch: &[&Transition],
    gamma: f64,
    opt: &mut impl Optimizer,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let width = net.spec().input_width();
    let states = stack(batch.iter().map(|t| t.state.clone()), width)?;
    let next = stack(batch.iter().map(|t| t.next_state.clone()), width)?;
    let next_online = net.predict(next.clone())?;
    let next_target = net.predict_with(target, next)?;
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
    let targets = td_targets(
        net.spec(),
        &rewards,
        &dones,
        &next_online,
        &next_target,
        gamma,
    );

    let mut tape = Tape::new();
    let x = tape.input(states);
    let out = net.forward(&mut tape, net.params(), x)?;
    let actions: Vec<Vec<usize>> = batch.iter().map(|t| t.action.clone()).collect();
    let (loss, grad) = td_loss(net.spec(), tape.value(out), &actions, &targets);
    if !loss.is_finite() {
        return Err(Error::NonFinite("td loss"));
    }
    let grads = tape.backward(out, grad)?.for_store(net.params());
    opt.step(net.params_mut(), &grads)?;
    Ok(loss)
}

/// Copies online parameters into the target every `every` learning steps.
/// Returns whether a copy happened.
pub fn sync_target(net: &QNetwork, target: &mut ParamStore, step: u64, every: u64) -> Result<bool> {
    if every > 0 && step > 0 && step.is_multiple_of(every) {
        target.copy_from(net.params())?;
        return Ok(true);
    }
    Ok(false)
}
