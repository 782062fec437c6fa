//! Optimization-based bound tightening over the QC relaxation.
//!
//! One sweep minimizes and maximizes every squared voltage magnitude and every
//! branch angle difference over the current relaxation. All subproblems of a
//! sweep share one program and run in parallel; new bounds are applied at the
//! end of the sweep. A bound moves only when the backend's dual vector proves
//! the new value, so tightened bounds never exclude a feasible point.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::NetworkCase;
use crate::relaxation::{
    build_qc, solve_with, Affine, ClarabelBackend, ConicBackend, Constraint, InfeasibilityEvidence, QcLayout,
    RelaxationError, SolveStatus, VariableBounds,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObbtOptions {
    /// Stop when no bound moves by more than this between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
    /// A bound is replaced only if it improves by more than this (p.u. or rad).
    pub min_improvement: f64,
    /// Outward margin added to every proven bound.
    pub safety: f64,
    /// Worker threads for one sweep; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ObbtOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_sweeps: 20, min_improvement: 1e-6, safety: 1e-9, threads: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub variable: String,
    pub sweep: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObbtOutcome {
    pub tightened: VariableBounds,
    /// Number of sweeps performed.
    pub iterations: usize,
    pub infeasible: bool,
    pub evidence: Option<InfeasibilityEvidence>,
    /// Largest bound change of each sweep.
    pub history: Vec<f64>,
    /// Whether the last sweep moved no bound by more than the tolerance.
    pub converged: bool,
    /// Subproblems whose result could not be used.
    pub unknown_subproblems: usize,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    W(usize),
    Theta(usize),
}

fn objective(case: &NetworkCase, layout: &QcLayout, t: Target) -> Affine {
    match t {
        Target::W(i) => Affine::var(layout.w(i)),
        Target::Theta(k) => {
            let (f, to) = case.branch_ends(k);
            Affine::from_terms(vec![(layout.theta(f), 1.0), (layout.theta(to), -1.0)], 0.0)
        }
    }
}

fn bus_label(case: &NetworkCase, i: usize) -> String {
    format!("V@{}", case.buses[i].id)
}

fn record(case: &NetworkCase, b: &VariableBounds, sweep: usize, out: &mut Vec<TrajectoryRow>) {
    for (i, &(lower, upper)) in b.v.iter().enumerate() {
        out.push(TrajectoryRow { variable: bus_label(case, i), sweep, lower, upper });
    }
    for (k, &(lower, upper)) in b.theta.iter().enumerate() {
        out.push(TrajectoryRow { variable: format!("theta@br{k}"), sweep, lower, upper });
    }
}

enum SweepResult {
    Infeasible(InfeasibilityEvidence),
    Bounds { next: VariableBounds, unknown: usize },
}

fn sweep(
    case: &NetworkCase,
    bounds: &VariableBounds,
    extra: &[Constraint],
    opts: &ObbtOptions,
    backend: &dyn ConicBackend,
) -> Result<SweepResult, RelaxationError> {
    let mut qc = build_qc(case, bounds)?;
    qc.program.extend(extra.iter().cloned());

    let feas = solve_with(backend, &qc.program, None);
    if feas.status == SolveStatus::Infeasible {
        return Ok(SweepResult::Infeasible(feas.evidence.expect("infeasible results carry evidence")));
    }

    let targets: Vec<(Target, bool)> = (0..case.n_bus())
        .map(Target::W)
        .chain((0..case.n_branch()).map(Target::Theta))
        .flat_map(|t| [(t, false), (t, true)])
        .collect();

    let program = &qc.program;
    let layout = &qc.layout;
    let run = || -> Vec<_> {
        targets
            .par_iter()
            .map(|&(t, maximize)| {
                let obj = objective(case, layout, t);
                let obj = if maximize { obj.scaled(-1.0) } else { obj };
                solve_with(backend, program, Some(&obj))
            })
            .collect()
    };
    let results = match opts.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    };

    let mut next = bounds.clone();
    let mut unknown = 0;
    for (&(t, maximize), res) in targets.iter().zip(results) {
        match res.status {
            SolveStatus::Infeasible => {
                return Ok(SweepResult::Infeasible(res.evidence.expect("infeasible results carry evidence")));
            }
            SolveStatus::Unknown => unknown += 1,
            SolveStatus::Optimal => {
                let Some(lb) = res.lower_bound else {
                    unknown += 1;
                    continue;
                };
                let proven = if maximize { -lb + opts.safety } else { lb - opts.safety };
                match t {
                    Target::W(i) => {
                        let (lo, hi) = bounds.v[i];
                        if maximize {
                            let v = proven.max(0.0).sqrt();
                            if v < hi - opts.min_improvement {
                                next.v[i].1 = v;
                            }
                        } else {
                            let v = proven.max(0.0).sqrt();
                            if v > lo + opts.min_improvement {
                                next.v[i].0 = v;
                            }
                        }
                    }
                    Target::Theta(k) => {
                        let (lo, hi) = bounds.theta[k];
                        if maximize {
                            if proven < hi - opts.min_improvement {
                                next.theta[k].1 = proven;
                            }
                        } else if proven > lo + opts.min_improvement {
                            next.theta[k].0 = proven;
                        }
                    }
                }
            }
        }
    }
    Ok(SweepResult::Bounds { next, unknown })
}

fn finish_bounds(case: &NetworkCase, mut b: VariableBounds) -> Result<VariableBounds, RelaxationError> {
    if !b.is_empty() {
        b.refresh(case)?;
    }
    Ok(b)
}

fn empty_evidence(b: &VariableBounds) -> InfeasibilityEvidence {
    let gap = b
        .v
        .iter()
        .chain(&b.theta)
        .map(|(lo, hi)| lo - hi)
        .fold(f64::NEG_INFINITY, f64::max);
    InfeasibilityEvidence { ray: Vec::new(), margin: gap }
}

/// A single sweep. See [`obbt_fixpoint`].
pub fn obbt_pass(
    case: &NetworkCase,
    bounds: &VariableBounds,
    extra: &[Constraint],
    opts: &ObbtOptions,
) -> Result<ObbtOutcome, RelaxationError> {
    obbt_fixpoint_with(case, bounds, extra, &ObbtOptions { max_sweeps: 1, ..*opts }, &ClarabelBackend::default())
}

/// Repeats sweeps until no bound moves by more than `opts.tol`, infeasibility
/// is proven, or `opts.max_sweeps` sweeps have run.
pub fn obbt_fixpoint(
    case: &NetworkCase,
    bounds: &VariableBounds,
    extra: &[Constraint],
    opts: &ObbtOptions,
) -> Result<ObbtOutcome, RelaxationError> {
    obbt_fixpoint_with(case, bounds, extra, opts, &ClarabelBackend::default())
}

pub fn obbt_fixpoint_with(
    case: &NetworkCase,
    bounds: &VariableBounds,
    extra: &[Constraint],
    opts: &ObbtOptions,
    backend: &dyn ConicBackend,
) -> Result<ObbtOutcome, RelaxationError> {
    let mut current = bounds.clone();
    let mut out = ObbtOutcome {
        tightened: current.clone(),
        iterations: 0,
        infeasible: false,
        evidence: None,
        history: Vec::new(),
        converged: false,
        unknown_subproblems: 0,
        trajectory: Vec::new(),
    };
    record(case, &current, 0, &mut out.trajectory);

    while out.iterations < opts.max_sweeps.max(1) {
        if current.is_empty() {
            out.infeasible = true;
            out.evidence = Some(empty_evidence(&current));
            break;
        }
        out.iterations += 1;
        match sweep(case, &current, extra, opts, backend)? {
            SweepResult::Infeasible(ev) => {
                out.infeasible = true;
                out.evidence = Some(ev);
                break;
            }
            SweepResult::Bounds { next, unknown } => {
                out.unknown_subproblems += unknown;
                let change = next.max_change(&current);
                current = finish_bounds(case, next)?;
                record(case, &current, out.iterations, &mut out.trajectory);
                out.history.push(change);
                if change <= opts.tol {
                    out.converged = true;
                    break;
                }
            }
        }
    }
    if !out.infeasible && current.is_empty() {
        out.infeasible = true;
        out.evidence = Some(empty_evidence(&current));
    }
    out.tightened = current;
    Ok(out)
}

/// Writes `variable,sweep,lower,upper` rows.
pub fn write_trajectory_csv(outcome: &ObbtOutcome, path: impl AsRef<Path>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &outcome.trajectory {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
