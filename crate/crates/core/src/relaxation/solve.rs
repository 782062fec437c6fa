use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::program::{Affine, ConeSpec, ConicProgram, StandardForm};

/// Smallest certified violation accepted as proof of infeasibility.
pub const CERTIFICATE_MARGIN: f64 = 1e-9;

/// Relative allowance for floating-point error when evaluating a dual vector.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendStatus {
    Solved,
    AlmostSolved,
    PrimalInfeasible,
    AlmostPrimalInfeasible,
    Failed,
}

/// What a backend hands back: its own status claim plus raw primal and dual
/// vectors. Nothing here is trusted without checking.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: BackendStatus,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub detail: String,
}

impl RawSolution {
    pub fn failed(detail: impl Into<String>) -> Self {
        Self { status: BackendStatus::Failed, x: Vec::new(), z: Vec::new(), objective: f64::NAN, detail: detail.into() }
    }
}

pub trait ConicBackend: Sync {
    fn solve_raw(&self, sf: &StandardForm) -> RawSolution;
}

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8 }
    }
}

impl ConicBackend for ClarabelBackend {
    fn solve_raw(&self, sf: &StandardForm) -> RawSolution {
        let a = CscMatrix::new_from_triplets(sf.m, sf.n, sf.a_rows.clone(), sf.a_cols.clone(), sf.a_vals.clone());
        let p = CscMatrix::zeros((sf.n, sf.n));
        let cones: Vec<SupportedConeT<f64>> = sf
            .cones
            .iter()
            .map(|c| match *c {
                ConeSpec::Zero(d) => SupportedConeT::ZeroConeT(d),
                ConeSpec::Nonneg(d) => SupportedConeT::NonnegativeConeT(d),
                ConeSpec::Soc(d) => SupportedConeT::SecondOrderConeT(d),
            })
            .collect();
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .presolve_enable(false)
            .max_iter(self.max_iter)
            .tol_feas(self.tol)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .build()
        {
            Ok(s) => s,
            Err(e) => return RawSolution::failed(format!("settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&p, &sf.q, &a, &sf.b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return RawSolution::failed(format!("setup: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => BackendStatus::Solved,
            SolverStatus::AlmostSolved => BackendStatus::AlmostSolved,
            SolverStatus::PrimalInfeasible => BackendStatus::PrimalInfeasible,
            SolverStatus::AlmostPrimalInfeasible => BackendStatus::AlmostPrimalInfeasible,
            _ => BackendStatus::Failed,
        };
        RawSolution {
            status,
            x: sol.x.clone(),
            z: sol.z.clone(),
            objective: sol.obj_val + sf.q0,
            detail: format!("{:?} after {} iterations", sol.status, sol.iterations),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unknown,
}

/// A dual ray `y ∈ K*` (normalized to unit max-norm) such that
/// `sup_{l ≤ x ≤ u} (bᵀy − (Aᵀy)ᵀx) ≤ −margin`, which no feasible point can satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityEvidence {
    pub ray: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// A lower bound on the optimum derived from the dual vector and valid
    /// regardless of solver accuracy (`Optimal` only).
    pub lower_bound: Option<f64>,
    pub evidence: Option<InfeasibilityEvidence>,
    pub detail: String,
}

impl SolveResult {
    fn unknown(detail: impl Into<String>) -> Self {
        Self {
            status: SolveStatus::Unknown,
            x: Vec::new(),
            objective: f64::NAN,
            lower_bound: None,
            evidence: None,
            detail: detail.into(),
        }
    }
}

fn project_dual(sf: &StandardForm, z: &[f64]) -> Vec<f64> {
    let mut y = z.to_vec();
    let mut row = 0;
    for c in &sf.cones {
        let d = c.dim();
        let block = &mut y[row..row + d];
        match c {
            ConeSpec::Zero(_) => {}
            ConeSpec::Nonneg(_) => block.iter_mut().for_each(|v| *v = v.max(0.0)),
            ConeSpec::Soc(_) => {
                let t = block[0];
                let nrm = block[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                if nrm <= t {
                } else if nrm <= -t {
                    block.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    let a = 0.5 * (t + nrm);
                    block[0] = a;
                    for v in block[1..].iter_mut() {
                        *v *= a / nrm;
                    }
                }
            }
        }
        row += d;
    }
    y
}

/// Checks a candidate Farkas ray against the program data and the variable
/// box. Returns the evidence only if the certified violation exceeds
/// [`CERTIFICATE_MARGIN`].
pub fn verify_infeasibility(sf: &StandardForm, z: &[f64]) -> Option<InfeasibilityEvidence> {
    if z.len() != sf.m || z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut y = project_dual(sf, z);
    let scale = y.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    y.iter_mut().for_each(|v| *v /= scale);

    let (r, r_abs) = sf.at_times(&y);
    let mut sup: f64 = sf.b.iter().zip(&y).map(|(b, v)| b * v).sum();
    let mut err: f64 = sf.b.iter().zip(&y).map(|(b, v)| (b * v).abs()).sum();
    for i in 0..sf.n {
        if r[i] == 0.0 && r_abs[i] == 0.0 {
            continue;
        }
        let (l, u) = (sf.lower[i], sf.upper[i]);
        if !(l.is_finite() && u.is_finite()) {
            return None;
        }
        sup += (-r[i] * l).max(-r[i] * u);
        err += r_abs[i] * l.abs().max(u.abs());
    }
    let margin = -sup - ROUNDING * err;
    (margin > CERTIFICATE_MARGIN).then_some(InfeasibilityEvidence { ray: y, margin })
}

/// `min_{l ≤ x ≤ u} (q + Aᵀz)ᵀx − bᵀz + q0` with `z` projected onto the dual
/// cone: a bound on the optimal value that holds for any dual vector.
pub fn rigorous_lower_bound(sf: &StandardForm, z: &[f64]) -> Option<f64> {
    if z.len() != sf.m || z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let y = project_dual(sf, z);
    let (r, r_abs) = sf.at_times(&y);
    let mut val = sf.q0 - sf.b.iter().zip(&y).map(|(b, v)| b * v).sum::<f64>();
    let mut err = sf.q0.abs() + sf.b.iter().zip(&y).map(|(b, v)| (b * v).abs()).sum::<f64>();
    for i in 0..sf.n {
        let d = sf.q[i] + r[i];
        if d == 0.0 {
            continue;
        }
        let (l, u) = (sf.lower[i], sf.upper[i]);
        if !(l.is_finite() && u.is_finite()) {
            return None;
        }
        val += (d * l).min(d * u);
        err += (sf.q[i].abs() + r_abs[i]) * l.abs().max(u.abs());
    }
    Some(val - ROUNDING * err)
}

/// Solves with the default Clarabel backend.
pub fn solve(program: &ConicProgram, objective: Option<&Affine>) -> SolveResult {
    solve_with(&ClarabelBackend::default(), program, objective)
}

/// Solves `min objective` over the program. `Infeasible` is returned only
/// with verified evidence; anything the backend cannot back up is `Unknown`.
pub fn solve_with(backend: &dyn ConicBackend, program: &ConicProgram, objective: Option<&Affine>) -> SolveResult {
    let sf = program.to_standard_form(objective);

    if let Some((i, v)) = program.vars.iter().enumerate().find(|(_, v)| v.lower > v.upper) {
        // an empty box needs no solver: e_i and −e_i bound rows contradict
        let mut ray = vec![0.0; program.n_vars()];
        ray[i] = 1.0;
        return SolveResult {
            status: SolveStatus::Infeasible,
            x: Vec::new(),
            objective: f64::NAN,
            lower_bound: None,
            evidence: Some(InfeasibilityEvidence { ray, margin: v.lower - v.upper }),
            detail: format!("empty bounds on {}", v.name),
        };
    }

    let raw = backend.solve_raw(&sf);
    match raw.status {
        BackendStatus::Solved | BackendStatus::AlmostSolved => {
            if raw.x.len() != sf.n || raw.x.iter().any(|v| !v.is_finite()) {
                return SolveResult::unknown(format!("malformed primal vector ({})", raw.detail));
            }
            SolveResult {
                status: SolveStatus::Optimal,
                lower_bound: rigorous_lower_bound(&sf, &raw.z),
                x: raw.x,
                objective: raw.objective,
                evidence: None,
                detail: raw.detail,
            }
        }
        BackendStatus::PrimalInfeasible | BackendStatus::AlmostPrimalInfeasible => match verify_infeasibility(&sf, &raw.z) {
            Some(ev) => SolveResult {
                status: SolveStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                lower_bound: None,
                evidence: Some(ev),
                detail: raw.detail,
            },
            None => SolveResult::unknown(format!("infeasibility claim not verified ({})", raw.detail)),
        },
        BackendStatus::Failed => SolveResult::unknown(raw.detail),
    }
}
