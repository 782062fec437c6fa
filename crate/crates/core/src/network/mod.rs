//! Per-unit network data and the nonconvex AC OPF constraint set: branch
//! flows, bus balances, limit checks, generation cost and Newton power flow.

mod check;
mod flow;
mod newton;
mod setpoint;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{constraint_check, generation_cost, power_balance_residual, FeasibilityReport, Violation};
pub use flow::{branch_flow, BranchFlow};
pub use newton::{newton_multistart, newton_solve, multistart_inits, NewtonOptions, PowerFlow};
pub use setpoint::{SetpointLayout, SetpointVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NoConvergence { iterations: usize, mismatch: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub pd: f64,
    pub qd: f64,
    pub g_sh: f64,
    pub b_sh: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Quadratic cost `c2 P^2 + c1 P + c0` with `P` in per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval(&self, p: f64) -> f64 {
        (self.c2 * p + self.c1) * p + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostCurve,
    /// Voltage magnitude setpoint from the case file.
    pub v_set: f64,
    /// Active output from the case file, used as a default dispatch.
    pub p_set: f64,
}

/// Π-model branch. `g + jb` is the series admittance, `b_sh` the total
/// charging susceptance, `tap`/`shift` the off-nominal transformer ratio on the
/// from side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    pub b_sh: f64,
    pub tap: f64,
    pub shift: f64,
    pub s_max: Option<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    /// Bus id of the angle reference.
    pub ref_bus: usize,
    index: HashMap<usize, usize>,
    ends: Vec<(usize, usize)>,
    gens_at: Vec<Vec<usize>>,
}

impl NetworkCase {
    /// Assembles a case from per-unit parts. Bus ids must be unique and every
    /// generator and branch must reference an existing bus.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
        ref_bus: usize,
    ) -> Result<Self, NetworkError> {
        let index: HashMap<usize, usize> =
            buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        if index.len() != buses.len() {
            return Err(NetworkError::DimensionMismatch("duplicate bus id".into()));
        }
        let lookup = |id: usize| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| NetworkError::DimensionMismatch(format!("unknown bus id {id}")))
        };
        lookup(ref_bus)?;
        let ends = branches
            .iter()
            .map(|br| Ok((lookup(br.from)?, lookup(br.to)?)))
            .collect::<Result<Vec<_>, NetworkError>>()?;
        let mut gens_at = vec![Vec::new(); buses.len()];
        for (k, g) in generators.iter().enumerate() {
            gens_at[lookup(g.bus)?].push(k);
        }
        Ok(Self {
            name: name.into(),
            base_mva,
            buses,
            generators,
            branches,
            ref_bus,
            index,
            ends,
            gens_at,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn ref_index(&self) -> usize {
        self.index[&self.ref_bus]
    }

    /// `(from, to)` bus positions of branch `k`.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        self.ends[k]
    }

    /// Generator positions attached to bus position `i`.
    pub fn gens_at(&self, i: usize) -> &[usize] {
        &self.gens_at[i]
    }

    pub fn gen_bus_index(&self, g: usize) -> usize {
        self.index[&self.generators[g].bus]
    }

    /// Bus positions carrying at least one generator, in order of first
    /// appearance in the generator list.
    pub fn generator_buses(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_bus()];
        let mut out = Vec::new();
        for g in 0..self.n_gen() {
            let i = self.gen_bus_index(g);
            if !seen[i] {
                seen[i] = true;
                out.push(i);
            }
        }
        out
    }

    /// Branch positions incident to each bus, built on demand.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.n_bus()];
        for (k, &(f, t)) in self.ends.iter().enumerate() {
            inc[f].push(k);
            inc[t].push(k);
        }
        inc
    }
}

/// Complex bus voltages in polar form plus the generator dispatch and branch
/// flows they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub flows: Vec<BranchFlow>,
}

impl OperatingPoint {
    /// Builds a point from bus voltages alone: flows follow from the branch
    /// equations and each bus's net injection is assigned to its generators
    /// (split across several generators in proportion to their ranges).
    pub fn from_voltages(case: &NetworkCase, vm: Vec<f64>, va: Vec<f64>) -> Result<Self, NetworkError> {
        if vm.len() != case.n_bus() || va.len() != case.n_bus() {
            return Err(NetworkError::DimensionMismatch(format!(
                "expected {} bus voltages, got {}/{}",
                case.n_bus(),
                vm.len(),
                va.len()
            )));
        }
        let flows = compute_flows(case, &vm, &va);
        let (p_inj, q_inj) = net_injections(case, &vm, &flows);
        let mut pg = vec![0.0; case.n_gen()];
        let mut qg = vec![0.0; case.n_gen()];
        for i in 0..case.n_bus() {
            let gens = case.gens_at(i);
            if gens.is_empty() {
                continue;
            }
            split_among(case, gens, p_inj[i], |g| (g.p_min, g.p_max), &mut pg);
            split_among(case, gens, q_inj[i], |g| (g.q_min, g.q_max), &mut qg);
        }
        Ok(Self { vm, va, pg, qg, flows })
    }

    /// Builds a point from rectangular voltages `(re, im)`.
    pub fn from_rectangular(case: &NetworkCase, volts: &[(f64, f64)]) -> Result<Self, NetworkError> {
        let vm = volts.iter().map(|(r, i)| r.hypot(*i)).collect();
        let va = volts.iter().map(|(r, i)| i.atan2(*r)).collect();
        Self::from_voltages(case, vm, va)
    }

    pub fn flat(case: &NetworkCase) -> Self {
        Self::from_voltages(case, vec![1.0; case.n_bus()], vec![0.0; case.n_bus()])
            .expect("dimensions match by construction")
    }
}

pub(crate) fn compute_flows(case: &NetworkCase, vm: &[f64], va: &[f64]) -> Vec<BranchFlow> {
    case.branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let (f, t) = case.branch_ends(k);
            branch_flow(vm[f], va[f], vm[t], va[t], br)
        })
        .collect()
}

/// Generation each bus must supply: load plus shunt plus outgoing flows.
pub(crate) fn net_injections(case: &NetworkCase, vm: &[f64], flows: &[BranchFlow]) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = case
        .buses
        .iter()
        .zip(vm)
        .map(|(b, v)| b.pd + b.g_sh * v * v)
        .collect();
    let mut q: Vec<f64> = case
        .buses
        .iter()
        .zip(vm)
        .map(|(b, v)| b.qd - b.b_sh * v * v)
        .collect();
    for (k, fl) in flows.iter().enumerate() {
        let (f, t) = case.branch_ends(k);
        p[f] += fl.p_from;
        q[f] += fl.q_from;
        p[t] += fl.p_to;
        q[t] += fl.q_to;
    }
    (p, q)
}

pub(crate) fn split_among(
    case: &NetworkCase,
    gens: &[usize],
    total: f64,
    range: impl Fn(&Generator) -> (f64, f64),
    out: &mut [f64],
) {
    if gens.len() == 1 {
        out[gens[0]] = total;
        return;
    }
    let lo: f64 = gens.iter().map(|&g| range(&case.generators[g]).0).sum();
    let width: f64 = gens
        .iter()
        .map(|&g| {
            let (a, b) = range(&case.generators[g]);
            b - a
        })
        .sum();
    for &g in gens {
        let (a, b) = range(&case.generators[g]);
        out[g] = if width > 0.0 {
            a + (total - lo) * (b - a) / width
        } else {
            total / gens.len() as f64
        };
    }
}
