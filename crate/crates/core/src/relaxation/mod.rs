//! QC relaxation of the AC OPF constraint set as a second-order cone program,
//! and the solver contract used to decide it.

mod envelopes;
mod program;
mod qc;
mod solve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkCase, OperatingPoint};

pub use envelopes::{cos_envelope, mccormick, sin_envelope, square_envelope, trig_bounds, TrigBounds};
pub use program::{Affine, ConeSpec, ConicProgram, Constraint, Sense, StandardForm, VarInfo};
pub use qc::{add_cost_epigraph, build_qc, bus_angle_bounds, lift_point, LiftedVars, QcLayout, QcRelaxation};
pub use solve::{
    rigorous_lower_bound, solve, solve_with, verify_infeasibility, BackendStatus, ClarabelBackend, ConicBackend,
    InfeasibilityEvidence, RawSolution, SolveResult, SolveStatus, CERTIFICATE_MARGIN,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxationError {
    #[error("angle bounds [{lo}, {hi}] rad are outside (-pi/2, pi/2) or reversed")]
    BoundsOutOfRange { lo: f64, hi: f64 },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
}

/// Bounds the relaxation is built on. `v` is per bus, `theta` per branch
/// (bounds on `θ_from − θ_to`). `trig` and `wlm` are derived from them by
/// [`VariableBounds::refresh`]; `trig` refers to the shifted difference
/// `θ_from − θ_to − shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBounds {
    pub v: Vec<(f64, f64)>,
    pub theta: Vec<(f64, f64)>,
    pub trig: Vec<TrigBounds>,
    pub wlm: Vec<(f64, f64)>,
}

impl VariableBounds {
    /// Voltage and angle-difference limits taken from the case.
    pub fn from_case(case: &NetworkCase) -> Result<Self, RelaxationError> {
        let v = case.buses.iter().map(|b| (b.v_min, b.v_max)).collect();
        let theta = case.branches.iter().map(|b| (b.theta_min, b.theta_max)).collect();
        Self::new(case, v, theta)
    }

    pub fn new(case: &NetworkCase, v: Vec<(f64, f64)>, theta: Vec<(f64, f64)>) -> Result<Self, RelaxationError> {
        let mut b = Self { v, theta, trig: Vec::new(), wlm: Vec::new() };
        b.refresh(case)?;
        Ok(b)
    }

    /// Recomputes the trigonometric and product bounds.
    pub fn refresh(&mut self, case: &NetworkCase) -> Result<(), RelaxationError> {
        if self.v.len() != case.n_bus() || self.theta.len() != case.n_branch() {
            return Err(RelaxationError::InvalidBounds("dimension mismatch".into()));
        }
        for (i, &(lo, hi)) in self.v.iter().enumerate() {
            if !(lo >= 0.0 && lo.is_finite() && hi.is_finite()) {
                return Err(RelaxationError::InvalidBounds(format!(
                    "voltage bounds of bus {} must be finite and nonnegative",
                    case.buses[i].id
                )));
            }
        }
        self.trig = Vec::with_capacity(case.n_branch());
        self.wlm = Vec::with_capacity(case.n_branch());
        for (k, br) in case.branches.iter().enumerate() {
            let (lo, hi) = self.theta[k];
            self.trig.push(trig_bounds(lo - br.shift, hi - br.shift)?);
            let (f, t) = case.branch_ends(k);
            self.wlm.push((self.v[f].0 * self.v[t].0, self.v[f].1 * self.v[t].1));
        }
        Ok(())
    }

    /// Squared-voltage bounds of bus position `i`.
    pub fn w(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.v[i];
        (lo * lo, hi * hi)
    }

    /// True when some interval is empty, which makes the relaxation trivially infeasible.
    pub fn is_empty(&self) -> bool {
        self.v.iter().chain(&self.theta).any(|(lo, hi)| lo > hi)
    }

    /// Whether every interval of `self` lies within the matching one of `other` (up to `tol`).
    pub fn within(&self, other: &VariableBounds, tol: f64) -> bool {
        self.v
            .iter()
            .zip(&other.v)
            .chain(self.theta.iter().zip(&other.theta))
            .all(|(a, b)| a.0 >= b.0 - tol && a.1 <= b.1 + tol)
    }

    /// Whether the voltages and angle differences of `point` lie inside the bounds.
    pub fn contains(&self, case: &NetworkCase, point: &OperatingPoint, tol: f64) -> bool {
        let v_ok = point
            .vm
            .iter()
            .zip(&self.v)
            .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol);
        let th_ok = (0..case.n_branch()).all(|k| {
            let (f, t) = case.branch_ends(k);
            let d = point.va[f] - point.va[t];
            d >= self.theta[k].0 - tol && d <= self.theta[k].1 + tol
        });
        v_ok && th_ok
    }

    /// Largest change of any interval endpoint between two bound sets.
    pub fn max_change(&self, other: &VariableBounds) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .chain(self.theta.iter().zip(&other.theta))
            .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
            .fold(0.0, f64::max)
    }
}
