mod common;

use common::{case, endpoints, SMALL};
use opfcert::certify::segment_point;
use opfcert::network::{
    branch_flow, constraint_check, generation_cost, newton_multistart, newton_solve, power_balance_residual, Branch,
    NetworkCase, NewtonOptions, OperatingPoint, SetpointVector,
};
use proptest::prelude::*;

fn max_residual(c: &NetworkCase, p: &OperatingPoint) -> f64 {
    power_balance_residual(c, p).unwrap().iter().map(|(dp, dq)| dp.abs().max(dq.abs())).fold(0.0, f64::max)
}

fn rect(p: &OperatingPoint) -> Vec<(f64, f64)> {
    p.vm.iter().zip(&p.va).map(|(m, a)| (m * a.cos(), m * a.sin())).collect()
}

#[test]
fn three_bus_point_a_balances() {
    let c = case("threebus_cyclic");
    let (a, _, _) = endpoints(&c, "threebus_cyclic");
    assert!(max_residual(&c, a.point.as_ref().unwrap()) <= 5e-4);
}

#[test]
fn newton_reproduces_three_bus_point_a() {
    let c = case("threebus_cyclic");
    let (a, _, _) = endpoints(&c, "threebus_cyclic");
    let table = rect(a.point.as_ref().unwrap());
    let pf = newton_solve(&c, &a.setpoint, None, &NewtonOptions::default()).unwrap();
    assert!(pf.mismatch <= 1e-8);
    assert!(max_residual(&c, &pf.point) <= 1e-8);
    for (x, y) in rect(&pf.point).iter().zip(&table) {
        assert!((x.0 - y.0).abs() <= 5e-4 && (x.1 - y.1).abs() <= 5e-4, "{x:?} vs {y:?}");
    }
    // the setpoint is honoured exactly
    assert_eq!(SetpointVector::from_point(&c, &pf.point), a.setpoint);
}

#[test]
fn five_bus_point_b_is_feasible() {
    let c = case("fivebus");
    let (_, b, _) = endpoints(&c, "fivebus");
    let r = constraint_check(&c, b.point.as_ref().unwrap(), 1e-3).unwrap();
    assert!(r.feasible, "{:?}", r.violations);
}

#[test]
fn three_bus_midpoint_has_no_feasible_solution() {
    let c = case("threebus_cyclic");
    let (a, b, _) = endpoints(&c, "threebus_cyclic");
    let mid = segment_point(&a.setpoint, &b.setpoint, 0.5).unwrap();
    let sols = newton_multistart(&c, &mid, &[], &NewtonOptions::default()).unwrap();
    for pf in &sols {
        assert!(!constraint_check(&c, &pf.point, 1e-6).unwrap().feasible);
    }
}

#[test]
fn converged_points_pass_equality_checks() {
    for (name, pts) in SMALL {
        let c = case(name);
        let (a, b, _) = endpoints(&c, pts);
        for p in [a, b] {
            for pf in newton_multistart(&c, &p.setpoint, &[], &NewtonOptions::default()).unwrap() {
                let r = constraint_check(&c, &pf.point, 1e-8).unwrap();
                let eq = r
                    .violations
                    .iter()
                    .filter(|v| v.constraint.contains("bal@") || v.constraint.contains("flow_") || v.constraint.starts_with("ref@"))
                    .count();
                assert_eq!(eq, 0, "{name}: {:?}", r.violations);
            }
        }
    }
}

#[test]
fn perturbed_start_returns_to_the_same_solution() {
    let c = case("case9mod");
    let (a, _, _) = endpoints(&c, "case9mod");
    let opts = NewtonOptions::default();
    let base = newton_solve(&c, &a.setpoint, None, &opts).unwrap();
    let vm: Vec<f64> = base.point.vm.iter().enumerate().map(|(i, v)| v + 0.01 * ((i % 3) as f64 - 1.0)).collect();
    let va: Vec<f64> = base.point.va.iter().enumerate().map(|(i, t)| t + 0.02 * ((i % 2) as f64 - 0.5)).collect();
    let again = newton_solve(&c, &a.setpoint, Some((&vm, &va)), &opts).unwrap();
    for (x, y) in base.point.vm.iter().zip(&again.point.vm).chain(base.point.va.iter().zip(&again.point.va)) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn nine_bus_cost_at_tabulated_points() {
    // Independent evaluation: dense Y-bus in numpy, generator output from the
    // bus injection plus load, quadratic cost in MW.
    let c = case("case9mod");
    let (a, b, _) = endpoints(&c, "case9mod");
    let ca = generation_cost(&c, a.point.as_ref().unwrap());
    let cb = generation_cost(&c, b.point.as_ref().unwrap());
    assert!((ca - 4306.1715994689075).abs() < 1e-6, "{ca}");
    assert!((cb - 4079.334389570555).abs() < 1e-6, "{cb}");
}

#[test]
fn cost_ignores_generator_order() {
    let c = case("case9mod");
    let (a, _, _) = endpoints(&c, "case9mod");
    let p = a.point.unwrap();
    let mut gens = c.generators.clone();
    gens.reverse();
    let c2 = NetworkCase::new("rev", c.base_mva, c.buses.clone(), gens, c.branches.clone(), c.ref_bus).unwrap();
    let mut p2 = p.clone();
    p2.pg.reverse();
    p2.qg.reverse();
    let (x, y) = (generation_cost(&c, &p), generation_cost(&c2, &p2));
    assert!((x - y).abs() <= 1e-9 * x.abs());
}

fn line(g: f64, b: f64, b_sh: f64) -> Branch {
    Branch {
        from: 1,
        to: 2,
        g,
        b,
        b_sh,
        tap: 1.0,
        shift: 0.0,
        s_max: None,
        theta_min: -1.5,
        theta_max: 1.5,
    }
}

proptest! {
    #[test]
    fn losses_are_nonnegative(
        vl in 0.8f64..1.2, vm in 0.8f64..1.2, tl in -0.7f64..0.7, tm in -0.7f64..0.7,
        g in 0.0f64..20.0, b in -40.0f64..0.0, bsh in 0.0f64..0.5,
    ) {
        let f = branch_flow(vl, tl, vm, tm, &line(g, b, bsh));
        prop_assert!(f.p_from + f.p_to >= -1e-12);
    }

    #[test]
    fn lossless_flow_is_antisymmetric(
        vl in 0.8f64..1.2, vm in 0.8f64..1.2, tl in -0.7f64..0.7, tm in -0.7f64..0.7, b in -40.0f64..-0.1,
    ) {
        let f = branch_flow(vl, tl, vm, tm, &line(0.0, b, 0.0));
        prop_assert!((f.p_from + f.p_to).abs() <= 1e-12);
    }
}
