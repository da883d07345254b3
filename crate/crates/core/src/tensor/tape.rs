use std::sync::Arc;

use super::{gemm, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Reshape(Var),
    /// Block-wise `adj * x` over consecutive groups of `adj.rows()` rows.
    Aggregate(Var, Arc<Matrix>),
    MaskedSoftmax(Var, Arc<Vec<bool>>, usize),
    MaskedLogSoftmax(Var, Arc<Vec<bool>>, usize),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of every recorded value after a backward pass.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for a parameter, summed over every place it was used.
    pub fn param(&self, id: ParamId) -> Option<Matrix> {
        let mut acc: Option<Matrix> = None;
        for &(pid, node) in &self.params {
            if pid != id {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                match &mut acc {
                    Some(a) => a.add_assign(g),
                    None => acc = Some(g.clone()),
                }
            }
        }
        acc
    }

    /// One gradient per parameter in store order; zeros for unused ones.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Matrix> {
        store
            .ids()
            .map(|id| {
                self.param(id).unwrap_or_else(|| {
                    let (r, c) = store.get(id).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Constant input; receives a gradient but nothing flows past it.
    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x + b` with the 1 x cols bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Shape {
                op: "add_bias",
                left: xv.shape(),
                right: bv.shape(),
            });
        }
        let mut out = xv.clone();
        let cols = out.cols();
        for row in out.data_mut().chunks_mut(cols.max(1)) {
            row.iter_mut().zip(bv.data()).for_each(|(a, b)| *a += b);
        }
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(x).clone().reshaped(rows, cols)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// `y = x W + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    /// Treats `x` as a stack of `adj.rows()`-row blocks and left-multiplies
    /// each block by `adj`. `adj` is a constant.
    pub fn aggregate(&mut self, x: Var, adj: Arc<Matrix>) -> Result<Var> {
        let n = adj.rows();
        let xv = self.value(x);
        if adj.cols() != n || n == 0 || !xv.rows().is_multiple_of(n) {
            return Err(Error::Shape {
                op: "aggregate",
                left: adj.shape(),
                right: xv.shape(),
            });
        }
        let out = block_apply(&adj, xv, false);
        Ok(self.push(out, Op::Aggregate(x, adj)))
    }

    /// `sigma(adj * f * w)` for a stack of graphs, `sigma` = ReLU when `relu`.
    pub fn gcn_layer(&mut self, f: Var, adj: Arc<Matrix>, w: Var, relu: bool) -> Result<Var> {
        let fw = self.matmul(f, w)?;
        let agg = self.aggregate(fw, adj)?;
        Ok(if relu { self.relu(agg) } else { agg })
    }

    /// Softmax over each consecutive group of `group` columns, restricted to
    /// entries where `mask` (one flag per column) is set; masked entries are 0.
    pub fn masked_softmax(&mut self, x: Var, mask: Arc<Vec<bool>>, group: usize) -> Result<Var> {
        let out = self.grouped(x, &mask, group, false)?;
        Ok(self.push(out, Op::MaskedSoftmax(x, mask, group)))
    }

    /// Log of [`Tape::masked_softmax`]; masked entries are reported as 0.
    pub fn masked_log_softmax(
        &mut self,
        x: Var,
        mask: Arc<Vec<bool>>,
        group: usize,
    ) -> Result<Var> {
        let out = self.grouped(x, &mask, group, true)?;
        Ok(self.push(out, Op::MaskedLogSoftmax(x, mask, group)))
    }

    fn grouped(&self, x: Var, mask: &[bool], group: usize, log: bool) -> Result<Matrix> {
        let xv = self.value(x);
        if group == 0 || !xv.cols().is_multiple_of(group) || mask.len() != xv.cols() {
            return Err(Error::Shape {
                op: "masked_softmax",
                left: xv.shape(),
                right: (mask.len(), group),
            });
        }
        if mask.chunks(group).any(|g| !g.iter().any(|&m| m)) {
            return Err(Error::Contract("softmax group with no valid entry".into()));
        }
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        let cols = xv.cols();
        for (chunk, (src, dst)) in xv
            .data()
            .chunks(group)
            .zip(out.data_mut().chunks_mut(group))
            .enumerate()
        {
            let k = (chunk * group) % cols;
            let valid = &mask[k..k + group];
            let max = src
                .iter()
                .zip(valid)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = src
                .iter()
                .zip(valid)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| (v - max).exp())
                .sum();
            let log_sum = sum.ln();
            for ((d, &s), &m) in dst.iter_mut().zip(src).zip(valid) {
                if m {
                    *d = if log {
                        s - max - log_sum
                    } else {
                        (s - max).exp() / sum
                    };
                }
            }
        }
        Ok(out)
    }

    /// Reverse pass from `out` seeded with `seed` (same shape as `out`).
    pub fn backward(&self, out: Var, seed: Matrix) -> Result<Gradients> {
        if seed.shape() != self.value(out).shape() {
            return Err(Error::Shape {
                op: "backward",
                left: self.value(out).shape(),
                right: seed.shape(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);
        let accumulate = |grads: &mut Vec<Option<Matrix>>, v: Var, g: Matrix| match &mut grads[v.0]
        {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        };
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, true, &mut da, 0.0);
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(av, true, &g, false, &mut db, 0.0);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddBias(x, b) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for row in g.data().chunks(g.cols().max(1)) {
                        db.data_mut().iter_mut().zip(row).for_each(|(a, r)| *a += r);
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    dx.data_mut().iter_mut().zip(xv.data()).for_each(|(d, &v)| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, g.clone().reshaped(r, c)?);
                }
                Op::Aggregate(x, adj) => {
                    accumulate(&mut grads, *x, block_apply(adj, &g, true));
                }
                Op::MaskedSoftmax(x, mask, group) => {
                    let y = &self.nodes[idx].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    let cols = y.cols();
                    for (start, ((yc, gc), dc)) in y
                        .data()
                        .chunks(*group)
                        .zip(g.data().chunks(*group))
                        .zip(dx.data_mut().chunks_mut(*group))
                        .enumerate()
                    {
                        let k = (start * group) % cols;
                        let valid = &mask[k..k + group];
                        let dot: f64 = yc
                            .iter()
                            .zip(gc)
                            .zip(valid)
                            .filter(|(_, &m)| m)
                            .map(|((y, g), _)| y * g)
                            .sum();
                        for j in 0..*group {
                            if valid[j] {
                                dc[j] = yc[j] * (gc[j] - dot);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::MaskedLogSoftmax(x, mask, group) => {
                    let y = &self.nodes[idx].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    let cols = y.cols();
                    for (start, ((yc, gc), dc)) in y
                        .data()
                        .chunks(*group)
                        .zip(g.data().chunks(*group))
                        .zip(dx.data_mut().chunks_mut(*group))
                        .enumerate()
                    {
                        let k = (start * group) % cols;
                        let valid = &mask[k..k + group];
                        let gsum: f64 = gc
                            .iter()
                            .zip(valid)
                            .filter(|(_, &m)| m)
                            .map(|(g, _)| g)
                            .sum();
                        for j in 0..*group {
                            if valid[j] {
                                dc[j] = gc[j] - yc[j].exp() * gsum;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
            }
            grads[idx] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }
}

/// Applies `adj` (or its transpose) to every `n`-row block of `x`.
fn block_apply(adj: &Matrix, x: &Matrix, transpose: bool) -> Matrix {
    let n = adj.rows();
    let d = x.cols();
    let mut out = Matrix::zeros(x.rows(), d);
    if n == 1 {
        return x.scale(adj.get(0, 0));
    }
    for (src, dst) in x.data().chunks(n * d).zip(out.data_mut().chunks_mut(n * d)) {
        for i in 0..n {
            let drow = &mut dst[i * d..(i + 1) * d];
            for j in 0..n {
                let a = if transpose {
                    adj.get(j, i)
                } else {
                    adj.get(i, j)
                };
                if a == 0.0 {
                    continue;
                }
                let srow = &src[j * d..(j + 1) * d];
                drow.iter_mut().zip(srow).for_each(|(o, s)| *o += a * s);
            }
        }
    }
    out
}
