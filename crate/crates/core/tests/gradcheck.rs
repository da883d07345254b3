//! Analytic gradients against central finite differences.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trafficrl::tensor::gradcheck::max_relative_error;
use trafficrl::tensor::{Matrix, ParamStore, Tape, Var};

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn check<F>(store: &ParamStore, coeffs: &Matrix, forward: F) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    max_relative_error(store, coeffs, H, |t, s| Ok(forward(t, s))).unwrap()
}

#[test]
fn dense_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (b, i, o) = (
            rng.gen_range(1..6),
            rng.gen_range(1..7),
            rng.gen_range(1..5),
        );
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut rng, b, i));
        let w = s.add("w", random(&mut rng, i, o));
        let bias = s.add("b", random(&mut rng, 1, o));
        let c = random(&mut rng, b, o);
        let err = check(&s, &c, |t, s| {
            let (x, w, bias) = (t.param(s, x), t.param(s, w), t.param(s, bias));
            t.dense(x, w, bias).unwrap()
        });
        assert!(err <= TOL, "dense rel err {err}");
    }
}

#[test]
fn gcn_layer_with_fixed_adjacency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (batch, n, d, d2) = (
            rng.gen_range(1..4),
            rng.gen_range(1..6),
            rng.gen_range(1..5),
            rng.gen_range(1..5),
        );
        let adj = Arc::new(random(&mut rng, n, n).map(f64::abs));
        let mut s = ParamStore::new();
        let f = s.add("f", random(&mut rng, batch * n, d));
        let w = s.add("w", random(&mut rng, d, d2));
        let c = random(&mut rng, batch * n, d2);
        let err = check(&s, &c, |t, s| {
            let (f, w) = (t.param(s, f), t.param(s, w));
            t.gcn_layer(f, Arc::clone(&adj), w, true).unwrap()
        });
        assert!(err <= TOL, "gcn rel err {err}");
    }
}

#[test]
fn masked_softmax_and_log_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (rows, groups, m) = (
            rng.gen_range(1..4),
            rng.gen_range(1..4),
            rng.gen_range(2..5),
        );
        let mut mask: Vec<bool> = (0..groups * m).map(|_| rng.gen_bool(0.7)).collect();
        for g in 0..groups {
            mask[g * m] = true;
        }
        let mask = Arc::new(mask);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut rng, rows, groups * m));
        let c = random(&mut rng, rows, groups * m);
        let err = check(&s, &c, |t, s| {
            let x = t.param(s, x);
            t.masked_softmax(x, Arc::clone(&mask), m).unwrap()
        });
        assert!(err <= TOL, "softmax rel err {err}");
        let err = check(&s, &c, |t, s| {
            let x = t.param(s, x);
            t.masked_log_softmax(x, Arc::clone(&mask), m).unwrap()
        });
        assert!(err <= TOL, "log-softmax rel err {err}");
    }
}

#[test]
fn value_head_on_two_layer_trunk() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (b, i, h1, h2) = (
            rng.gen_range(1..5),
            rng.gen_range(2..6),
            rng.gen_range(2..6),
            rng.gen_range(2..5),
        );
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut rng, b, i));
        let w1 = s.add("w1", random(&mut rng, i, h1));
        let b1 = s.add("b1", random(&mut rng, 1, h1));
        let w2 = s.add("w2", random(&mut rng, h1, h2));
        let b2 = s.add("b2", random(&mut rng, 1, h2));
        let wv = s.add("wv", random(&mut rng, h2, 1));
        let bv = s.add("bv", random(&mut rng, 1, 1));
        let c = random(&mut rng, b, 1);
        let err = check(&s, &c, |t, s| {
            let x = t.param(s, x);
            let (w1, b1, w2, b2, wv, bv) = (
                t.param(s, w1),
                t.param(s, b1),
                t.param(s, w2),
                t.param(s, b2),
                t.param(s, wv),
                t.param(s, bv),
            );
            let h = t.dense(x, w1, b1).unwrap();
            let h = t.relu(h);
            let h = t.dense(h, w2, b2).unwrap();
            let h = t.relu(h);
            t.dense(h, wv, bv).unwrap()
        });
        assert!(err <= TOL, "value head rel err {err}");
    }
}

#[test]
fn gcn_with_identity_equals_dense_without_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random(&mut rng, 6, 3);
    let w = random(&mut rng, 3, 4);
    let mut t = Tape::new();
    let (fv, wv) = (t.input(f.clone()), t.input(w.clone()));
    let g = t
        .gcn_layer(fv, Arc::new(Matrix::identity(3)), wv, false)
        .unwrap();
    assert_eq!(t.value(g), &f.matmul(&w).unwrap());
}

#[test]
fn two_node_gcn_by_hand() {
    // A_hat = [[.5,.5],[.5,.5]], F = [[1,2],[3,4]], W = [[1,0],[0,2]]
    // F W = [[1,4],[3,8]]; A_hat F W = [[2,6],[2,6]].
    let mut t = Tape::new();
    let adj = Arc::new(Matrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap());
    let f = t.input(Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
    let w = t.input(Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap());
    let out = t.gcn_layer(f, adj, w, false).unwrap();
    assert_eq!(t.value(out).data(), &[2.0, 6.0, 2.0, 6.0]);
}

#[test]
fn gcn_shape_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut t = Tape::new();
    let f = t.input(random(&mut rng, 15, 8));
    let w = t.input(random(&mut rng, 8, 16));
    let out = t
        .gcn_layer(f, Arc::new(Matrix::identity(15)), w, true)
        .unwrap();
    assert_eq!(t.value(out).shape(), (15, 16));
    let single = t.input(random(&mut rng, 1, 4));
    let eye = t.input(Matrix::identity(4));
    let same = t
        .gcn_layer(single, Arc::new(Matrix::identity(1)), eye, false)
        .unwrap();
    assert_eq!(t.value(same), t.value(single));
}
