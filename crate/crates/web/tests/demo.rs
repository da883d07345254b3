use trafficrl_web::{
    adjacency_matrix, compare, controller_named, grid, lane_geometry, Demo, GREEN, RED, YELLOW,
};

#[test]
fn demo_steps_and_draws_vehicles_on_their_lanes() {
    let s = grid(2, 2, 200.0, 1.0, 1000, 3).unwrap();
    let mut d = Demo::new(s, controller_named("fixed").unwrap(), 3).unwrap();
    d.step(120).unwrap();
    assert_eq!(d.clock(), 120);
    let vs = d.vehicles();
    assert_eq!(vs.len(), d.active());
    assert!(!vs.is_empty());
    let (lo, hi) = (-61.0 - 5.0, 261.0 + 5.0);
    assert!(vs
        .iter()
        .all(|v| v[0] >= lo && v[0] <= hi && v[1] >= lo && v[1] <= hi));
    let sig = d.lane_signals();
    assert_eq!(sig.len(), d.geometry().len());
    assert!(sig.contains(&GREEN));
    assert!(sig.iter().any(|&c| c == RED || c == YELLOW));
    d.set_controller(controller_named("auction").unwrap());
    d.step(10).unwrap();
    assert_eq!(d.clock(), 130);
}

#[test]
fn geometry_puts_opposing_lanes_side_by_side() {
    let s = grid(1, 2, 200.0, 1.0, 10, 1).unwrap();
    let g = lane_geometry(&s.network);
    // Lanes 0 and 1 join the two intersections in opposite directions.
    let (a, b) = (g[0], g[1]);
    assert!(a[0] < a[2] && b[0] > b[2], "{a:?} {b:?}");
    // Eastbound drawn below westbound (screen y grows downwards).
    assert!((a[1] - b[1] - 8.0).abs() < 1e-9, "{a:?} {b:?}");
}

#[test]
fn adjacency_rows_sum_to_one() {
    let a = adjacency_matrix(2, 3, &[100.0, 300.0]).unwrap();
    assert_eq!(a.len(), 36);
    for row in a.chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn comparison_covers_the_baselines_and_rejects_bad_input() {
    let r = compare(1, 1, 200.0, 1.0, 300, 1).unwrap();
    let names: Vec<&str> = r.iter().map(|c| c.controller.as_str()).collect();
    assert_eq!(names, ["random", "fixed", "auction"]);
    assert!(r
        .iter()
        .all(|c| c.cost_wt_hours.is_finite() && c.cost_wt_hours >= 0.0));
    assert!(compare(1, 1, 200.0, 1.0, 0, 1).is_err());
    assert!(controller_named("egu").is_err());
    assert!(grid(10, 10, 200.0, 1.0, 10, 1).is_err());
}
