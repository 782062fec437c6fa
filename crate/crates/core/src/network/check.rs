use serde::{Deserialize, Serialize};

use super::{branch_flow, NetworkCase, NetworkError, OperatingPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Constraint label such as `Vmax@3` (bus id) or `Smax_from@br2` (branch position).
    pub constraint: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub max_violation: f64,
}

impl FeasibilityReport {
    pub fn violation(&self, label: &str) -> Option<f64> {
        self.violations
            .iter()
            .find(|v| v.constraint == label)
            .map(|v| v.magnitude)
    }
}

fn check_dims(case: &NetworkCase, point: &OperatingPoint) -> Result<(), NetworkError> {
    let ok = point.vm.len() == case.n_bus()
        && point.va.len() == case.n_bus()
        && point.pg.len() == case.n_gen()
        && point.qg.len() == case.n_gen()
        && point.flows.len() == case.n_branch();
    if ok {
        Ok(())
    } else {
        Err(NetworkError::DimensionMismatch(format!(
            "point has {} buses/{} gens/{} branches, case has {}/{}/{}",
            point.vm.len(),
            point.pg.len(),
            point.flows.len(),
            case.n_bus(),
            case.n_gen(),
            case.n_branch()
        )))
    }
}

/// Active and reactive balance mismatch per bus: generation minus load, shunt
/// consumption and the flows leaving the bus on every incident branch.
pub fn power_balance_residual(
    case: &NetworkCase,
    point: &OperatingPoint,
) -> Result<Vec<(f64, f64)>, NetworkError> {
    check_dims(case, point)?;
    let mut res: Vec<(f64, f64)> = case
        .buses
        .iter()
        .zip(&point.vm)
        .map(|(b, v)| (-b.pd - b.g_sh * v * v, -b.qd + b.b_sh * v * v))
        .collect();
    for (g, (p, q)) in point.pg.iter().zip(&point.qg).enumerate() {
        let i = case.gen_bus_index(g);
        res[i].0 += p;
        res[i].1 += q;
    }
    for (k, fl) in point.flows.iter().enumerate() {
        let (f, t) = case.branch_ends(k);
        res[f].0 -= fl.p_from;
        res[f].1 -= fl.q_from;
        res[t].0 -= fl.p_to;
        res[t].1 -= fl.q_to;
    }
    Ok(res)
}

/// Evaluates every OPF constraint at `point` and lists those violated by more
/// than `tol`.
pub fn constraint_check(
    case: &NetworkCase,
    point: &OperatingPoint,
    tol: f64,
) -> Result<FeasibilityReport, NetworkError> {
    let mut all: Vec<Violation> = Vec::new();
    let mut push = |label: String, magnitude: f64| {
        if magnitude > 0.0 {
            all.push(Violation { constraint: label, magnitude });
        }
    };

    for (i, (dp, dq)) in power_balance_residual(case, point)?.into_iter().enumerate() {
        let id = case.buses[i].id;
        push(format!("Pbal@{id}"), dp.abs());
        push(format!("Qbal@{id}"), dq.abs());
    }

    push(format!("ref@{}", case.ref_bus), point.va[case.ref_index()].abs());

    for (g, gen) in case.generators.iter().enumerate() {
        push(format!("Pmin@gen{g}"), gen.p_min - point.pg[g]);
        push(format!("Pmax@gen{g}"), point.pg[g] - gen.p_max);
        push(format!("Qmin@gen{g}"), gen.q_min - point.qg[g]);
        push(format!("Qmax@gen{g}"), point.qg[g] - gen.q_max);
    }

    for (i, bus) in case.buses.iter().enumerate() {
        push(format!("Vmin@{}", bus.id), bus.v_min - point.vm[i]);
        push(format!("Vmax@{}", bus.id), point.vm[i] - bus.v_max);
    }

    for (k, br) in case.branches.iter().enumerate() {
        let (f, t) = case.branch_ends(k);
        let diff = point.va[f] - point.va[t];
        push(format!("angmin@br{k}"), br.theta_min - diff);
        push(format!("angmax@br{k}"), diff - br.theta_max);

        let exact = branch_flow(point.vm[f], point.va[f], point.vm[t], point.va[t], br);
        let given = &point.flows[k];
        push(format!("pflow_from@br{k}"), (exact.p_from - given.p_from).abs());
        push(format!("qflow_from@br{k}"), (exact.q_from - given.q_from).abs());
        push(format!("pflow_to@br{k}"), (exact.p_to - given.p_to).abs());
        push(format!("qflow_to@br{k}"), (exact.q_to - given.q_to).abs());

        if let Some(s_max) = br.s_max {
            push(format!("Smax_from@br{k}"), given.p_from.hypot(given.q_from) - s_max);
            push(format!("Smax_to@br{k}"), given.p_to.hypot(given.q_to) - s_max);
        }
    }

    let max_violation = all.iter().map(|v| v.magnitude).fold(0.0, f64::max);
    let violations: Vec<Violation> = all.into_iter().filter(|v| v.magnitude > tol).collect();
    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
        max_violation,
    })
}

/// Total generation cost in $/h.
pub fn generation_cost(case: &NetworkCase, point: &OperatingPoint) -> f64 {
    case.generators
        .iter()
        .zip(&point.pg)
        .map(|(g, p)| g.cost.eval(*p))
        .sum()
}
