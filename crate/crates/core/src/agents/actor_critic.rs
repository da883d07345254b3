use super::{QNetwork, QNetworkSpec, Transition};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Optimizer, Tape};

/// Loss components of one actor-critic step, averaged over the batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AcStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Masked softmax over each branch of one output row; invalid entries get 0.
pub fn policy_probabilities(spec: &QNetworkSpec, logits: &[f64]) -> Vec<f64> {
    let offsets = spec.branch_offsets();
    let mask = spec.score_mask();
    let mut p = vec![0.0; spec.score_width()];
    for w in offsets.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let max = (lo..hi)
            .filter(|&j| mask[j])
            .map(|j| logits[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in (lo..hi).filter(|&j| mask[j]) {
            p[j] = (logits[j] - max).exp();
            sum += p[j];
        }
        p[lo..hi].iter_mut().for_each(|x| *x /= sum);
    }
    p
}

/// One actor-critic step on a batch of transitions.
///
/// The network's last output column is the state value; the rest are policy
/// logits. Advantage is the TD(0) residual `r + gamma V(s') - V(s)`, held
/// constant for the policy term. Loss = policy gradient + `value_coef` x
/// value MSE - `entropy_coef` x entropy.
pub fn actor_critic_update(
    net: &mut QNetwork,
    batch: &[&Transition],
    gamma: f64,
    value_coef: f64,
    entropy_coef: f64,
    opt: &mut impl Optimizer,
) -> Result<AcStats> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let spec = net.spec().clone();
    if !spec.value_head {
        return Err(Error::Contract("actor-critic needs a value output".into()));
    }
    let width = spec.input_width();
    let vcol = spec.score_width();
    let rows = |f: &dyn Fn(&Transition) -> &Vec<f64>| -> Result<Matrix> {
        let data: Vec<f64> = batch.iter().flat_map(|t| f(t).iter().copied()).collect();
        Matrix::from_vec(batch.len(), width, data)
    };
    let states = rows(&|t| &t.state)?;
    let next_values = net.predict(rows(&|t| &t.next_state)?)?;

    let mut tape = Tape::new();
    let x = tape.input(states);
    let out = net.forward(&mut tape, net.params(), x)?;
    let outputs = tape.value(out);
    let offsets = spec.branch_offsets();
    let branches = spec.branches();
    let mask = spec.score_mask();
    let b = batch.len() as f64;
    let mut grad = Matrix::zeros(outputs.rows(), outputs.cols());
    let mut stats = AcStats::default();
    for (t, tr) in batch.iter().enumerate() {
        let v = outputs.get(t, vcol);
        let boot = if tr.done {
            0.0
        } else {
            gamma * next_values.get(t, vcol)
        };
        let target = tr.reward + boot;
        let advantage = target - v;
        stats.value_loss += (v - target).powi(2) / b;
        grad.set(t, vcol, value_coef * 2.0 * (v - target) / b);

        let p = policy_probabilities(&spec, outputs.row(t));
        for (k, branch) in branches.iter().enumerate() {
            let lo = offsets[k];
            let a = lo + spec.encode_branch(branch, &tr.action);
            let entropy: f64 = (lo..offsets[k + 1])
                .filter(|&j| mask[j] && p[j] > 0.0)
                .map(|j| -p[j] * p[j].ln())
                .sum();
            stats.policy_loss -= advantage * p[a].ln() / b;
            stats.entropy += entropy / b;
            for j in (lo..offsets[k + 1]).filter(|&j| mask[j]) {
                let onehot = if j == a { 1.0 } else { 0.0 };
                let mut g = -advantage * (onehot - p[j]);
                if p[j] > 0.0 {
                    g += entropy_coef * p[j] * (p[j].ln() + entropy);
                }
                grad.set(t, j, grad.get(t, j) + g / b);
            }
        }
    }
    stats.loss = stats.policy_loss + value_coef * stats.value_loss - entropy_coef * stats.entropy;
    if !stats.loss.is_finite() {
        return Err(Error::NonFinite("actor-critic loss"));
    }
    let grads = tape.backward(out, grad)?.for_store(net.params());
    opt.step(net.params_mut(), &grads)?;
    Ok(stats)
}
