use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trafficrl::netmodel::{build_grid_map, FlowSpec, Scenario, SimParams};
use trafficrl::simcore::{InvariantAudit, SimState, Violation};

fn fuzz(
    rows: usize,
    cols: usize,
    period: f64,
    steps: u32,
    seed: u64,
    switch_prob: f64,
) -> (Vec<Violation>, SimState) {
    let scenario = Arc::new(Scenario {
        network: build_grid_map(rows, cols, &[120.0, 200.0, 300.0], 4).unwrap(),
        flows: vec![FlowSpec::new(period, steps)],
        sim_params: SimParams::default(),
        seed,
    });
    let mut s = SimState::reset(scenario).unwrap();
    let mut audit = InvariantAudit::new(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<usize> = s
        .network()
        .intersections
        .iter()
        .map(|i| i.phase_count())
        .collect();
    let mut phases = vec![0; counts.len()];
    let mut violations = Vec::new();
    for _ in 0..steps {
        for (p, &k) in phases.iter_mut().zip(&counts) {
            if rng.gen_bool(switch_prob) {
                *p = rng.gen_range(0..k);
            }
        }
        s.apply_signal_action(&phases).unwrap();
        audit.before_step(&s);
        s.step();
        violations.extend(audit.observe(&s));
    }
    (violations, s)
}

#[test]
fn random_switching_keeps_every_invariant() {
    for (seed, p) in [(1, 1.0), (2, 0.2), (3, 0.05)] {
        let (v, s) = fuzz(2, 3, 0.8, 2000, seed, p);
        assert!(v.is_empty(), "seed {seed}: {:?}", &v[..v.len().min(5)]);
        assert!(s.counters().arrived > 0);
    }
}

#[test]
fn audit_flags_a_tampered_vehicle() {
    let (_, mut s) = fuzz(1, 1, 1.0, 100, 4, 0.1);
    let mut audit = InvariantAudit::new(&s);
    let id = s.vehicles().map(|v| v.id).next().expect("vehicles present");
    s.vehicle_mut(id).unwrap().waiting_time -= 5.0;
    let v = audit.observe(&s);
    assert!(
        v.iter()
            .any(|x| matches!(x, Violation::WaitingDecreased { .. })),
        "{v:?}"
    );
}
