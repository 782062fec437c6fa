mod common;

use common::{case, endpoints};
use opfcert::certify::{
    build_hyperplane, certify_disconnected, certify_setpoint_infeasible, feasible_clusters, grid_sample_feasible_space,
    grid_steps, rotate_triple, scan_segment, search_nonconvexity, segment_point, write_samples_csv, CertPoint,
    CertifyError, CertifyOptions, Hyperplane, SampleOptions, SearchOptions, Verdict,
};
use opfcert::network::{constraint_check, newton_multistart, NetworkCase, NewtonOptions};
use opfcert::tightening::ObbtOptions;

fn plane(c: &NetworkCase, name: &str, lambda: f64) -> (CertPoint, CertPoint, Hyperplane) {
    let (a, b, _) = endpoints(c, name);
    let mid = segment_point(&a.setpoint, &b.setpoint, lambda).unwrap();
    let h = build_hyperplane(&a.setpoint, &b.setpoint, &mid).unwrap();
    (a, b, h)
}

#[test]
fn feasible_setpoint_is_not_certified_infeasible() {
    let c = case("threebus_cyclic");
    let (a, b, _) = endpoints(&c, "threebus_cyclic");
    for p in [a, b] {
        let out = certify_setpoint_infeasible(&c, &p.setpoint, &ObbtOptions::default()).unwrap();
        assert!(!out.infeasible);
    }
}

#[test]
fn generation_above_limit_is_infeasible() {
    let c = case("threebus_cyclic");
    let (a, _, _) = endpoints(&c, "threebus_cyclic");
    let mut sp = a.setpoint.clone();
    sp.pg[0] = c.generators[1].p_max + 0.5;
    let out = certify_setpoint_infeasible(&c, &sp, &ObbtOptions::default()).unwrap();
    assert!(out.infeasible && out.evidence.is_some());
}

#[test]
fn three_bus_midpoint_is_certified_infeasible() {
    let c = case("threebus_cyclic");
    let (a, b, _) = endpoints(&c, "threebus_cyclic");
    let mid = segment_point(&a.setpoint, &b.setpoint, 0.5).unwrap();
    let out = certify_setpoint_infeasible(&c, &mid, &ObbtOptions::default()).unwrap();
    assert!(out.infeasible && out.evidence.is_some());
}

#[test]
fn search_finds_nonconvexity_in_cyclic_three_bus() {
    let c = case("threebus_cyclic");
    let found = search_nonconvexity(&c, &SearchOptions { seed: 7, ..Default::default() }).unwrap();
    assert!(found.outcome.infeasible);
    for p in [&found.a, &found.b] {
        assert!(constraint_check(&c, p.point.as_ref().unwrap(), 1e-6).unwrap().feasible);
    }
    let c_again = segment_point(&found.a.setpoint, &found.b.setpoint, found.lambda).unwrap();
    assert_eq!(c_again, found.c);
    let sols = newton_multistart(&c, &found.c, &[], &NewtonOptions::default()).unwrap();
    assert!(sols.iter().all(|pf| !constraint_check(&c, &pf.point, 1e-6).unwrap().feasible));
}

#[test]
fn nine_bus_segment_has_a_certified_infeasible_point() {
    let c = case("case9mod");
    let (a, b, _) = endpoints(&c, "case9mod");
    let opts = CertifyOptions::default();
    let a = opfcert::certify::validate_point(&c, &a, "A", &opts).unwrap();
    let b = opfcert::certify::validate_point(&c, &b, "B", &opts).unwrap();
    let grid: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let hit = scan_segment(&c, &a.setpoint, &b.setpoint, &grid, grid.len(), &opts.newton, &opts.obbt).unwrap();
    let (lambda, _, out) = hit.expect("some λ certified");
    assert!(grid.contains(&lambda));
    assert!(out.evidence.is_some());
}

#[test]
fn nine_bus_normal_from_fixture_setpoints() {
    // Independent evaluation in numpy from the tabulated voltages: (ΔPg2, ΔPg3, ΔV1², ΔV2², ΔV3²).
    let c = case("case9mod");
    let (_, _, h) = plane(&c, "case9mod", 0.5);
    let want = [-0.009026399999999712, -1.3641645051194538, -0.005967390000000128, -0.014984760000000152, -0.0248354999999999];
    assert_eq!(h.normal.len(), want.len());
    for (x, y) in h.normal.iter().zip(want) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn anchor_on_an_endpoint_is_rejected() {
    let c = case("threebus_cyclic");
    let (a, b, _) = endpoints(&c, "threebus_cyclic");
    let h = build_hyperplane(&a.setpoint, &b.setpoint, &a.setpoint).unwrap();
    let err = certify_disconnected(&c, &a, &b, &h, Some(1.0), &CertifyOptions::default()).unwrap_err();
    assert!(matches!(err, CertifyError::PointsNotSeparated { .. }), "{err}");
}

#[test]
fn infeasible_endpoint_is_rejected() {
    let c = case("threebus_cyclic");
    let (mut a, b, h) = plane(&c, "threebus_cyclic", 0.5);
    let pm = c.generators[1].p_max;
    a.setpoint.pg[0] = pm + 0.3;
    a.point = None;
    let err = certify_disconnected(&c, &a, &b, &h, Some(0.5), &CertifyOptions::default()).unwrap_err();
    assert!(matches!(err, CertifyError::InfeasibleInput { .. }), "{err}");
}

#[test]
fn scaling_the_normal_keeps_the_verdict() {
    let c = case("threebus_cyclic");
    let (a, b, h) = plane(&c, "threebus_cyclic", 0.5);
    let opts = CertifyOptions::default();
    for s in [1.0, 0.01, 37.0] {
        let hs = Hyperplane { normal: h.normal.iter().map(|n| n * s).collect(), ..h.clone() };
        assert_eq!(certify_disconnected(&c, &a, &b, &hs, Some(0.5), &opts).unwrap().verdict, Verdict::Disconnected);
    }
}

#[test]
fn zero_rotation_is_the_identity() {
    let c = case("wb5");
    let (_, _, h) = plane(&c, "wb5", 0.5);
    assert_eq!(rotate_triple(&h, [0.0; 3]).unwrap().normal, h.normal);
}

#[test]
fn grid_sampler_rejects_large_cases() {
    let c = case("pglib_opf_case14_ieee__sad");
    let err = grid_sample_feasible_space(&c, &SampleOptions::default()).unwrap_err();
    assert!(matches!(err, CertifyError::CaseTooLarge { .. }));
}

#[test]
fn empty_voltage_window_has_no_feasible_samples() {
    let c = case("threebus_cyclic");
    let mut buses = c.buses.clone();
    buses[0].v_min = 1.2;
    buses[0].v_max = 1.0;
    let bad = NetworkCase::new("empty", c.base_mva, buses, c.generators.clone(), c.branches.clone(), c.ref_bus).unwrap();
    let samples = grid_sample_feasible_space(&bad, &SampleOptions { resolution: 6, ..Default::default() }).unwrap();
    assert_eq!(samples.len(), 216);
    assert!(samples.iter().all(|s| !s.feasible));
}

#[test]
fn acyclic_three_bus_has_feasible_samples_on_the_plane() {
    let c = case("threebus_acyclic");
    let (_, _, h) = plane(&c, "threebus_acyclic", 0.5);
    let opts = SampleOptions { resolution: 30, ..Default::default() };
    let samples = grid_sample_feasible_space(&c, &opts).unwrap();
    let steps = grid_steps(&c, &opts);
    let on_plane = samples.iter().filter(|s| s.feasible && s.near_plane(&h, opts.coords, steps)).count();
    assert!(on_plane > 0);
    assert_eq!(feasible_clusters(&samples).len(), 1);
}

#[test]
fn sample_csv_has_one_row_per_grid_point() {
    let c = case("threebus_cyclic");
    let opts = SampleOptions { resolution: 4, ..Default::default() };
    let samples = grid_sample_feasible_space(&c, &opts).unwrap();
    let mut buf = Vec::new();
    write_samples_csv(&c, opts.coords, &samples, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 64);
    assert!(text.starts_with("Pg"));
}
