//! Disconnectedness certificates.
//!
//! Two feasible points A and B lie in different connected components of the
//! OPF feasible set if every point of some hyperplane separating them is
//! infeasible. The hyperplane lives in setpoint coordinates, with squared
//! voltages in place of voltages so that it is affine in the QC variables.

mod sample;
mod search;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{
    constraint_check, newton_multistart, newton_solve, NetworkCase, NetworkError, NewtonOptions, OperatingPoint,
    SetpointLayout, SetpointVector,
};
use crate::relaxation::{Affine, ClarabelBackend, ConicBackend, Constraint, QcLayout, RelaxationError, VariableBounds};
use crate::tightening::{obbt_fixpoint, obbt_fixpoint_with, ObbtOptions, ObbtOutcome};

pub use sample::{feasible_clusters, grid_sample_feasible_space, grid_steps, write_samples_csv, GridSample, SampleOptions};
pub use search::{scan_segment, search_nonconvexity, SearchOptions, SearchResult};

/// Largest case the grid sampler accepts.
pub const MAX_SAMPLE_BUSES: usize = 10;
pub const MAX_SAMPLE_RESOLUTION: usize = 200;

/// Relative tolerance of the side check: a point counts as on one side only if
/// `|nᵀ(x − anchor)| > SIDE_TOL·‖n‖`.
pub const SIDE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("setpoint has {got} coordinates, the case needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("points A and B coincide, so no hyperplane separates them")]
    DegeneratePoints,
    #[error("invalid rotation axis {axis} for a {dim}-dimensional setpoint space")]
    InvalidAxis { axis: usize, dim: usize },
    #[error("A and B are not strictly on opposite sides of the hyperplane (sides {side_a:e}, {side_b:e})")]
    PointsNotSeparated { side_a: f64, side_b: f64 },
    #[error("point {label} is not a feasible operating point: {detail}")]
    InfeasibleInput { label: String, detail: String },
    #[error("no certified nonconvexity found within the trial budget")]
    NotFound,
    #[error("case has {buses} buses and resolution {resolution}; grid sampling is limited to {MAX_SAMPLE_BUSES} buses and resolution {MAX_SAMPLE_RESOLUTION}")]
    CaseTooLarge { buses: usize, resolution: usize },
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Disconnected,
    Indeterminate,
}

/// A hyperplane in (pg, v²) coordinates through `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub anchor: SetpointVector,
    /// Angles of the three-axis rotations applied so far.
    pub rotation_angles_deg: Vec<f64>,
}

impl Hyperplane {
    pub fn norm(&self) -> f64 {
        self.normal.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `nᵀ(x − anchor)` in (pg, v²) coordinates.
    pub fn side(&self, x: &SetpointVector) -> f64 {
        let (a, b) = (x.squared_coords(), self.anchor.squared_coords());
        self.normal.iter().zip(a.iter().zip(&b)).map(|(n, (x, c))| n * (x - c)).sum()
    }

    /// The plane as an equality row over the QC variables.
    pub fn constraint(&self, case: &NetworkCase) -> Constraint {
        let layout = SetpointLayout::of(case);
        let qc = QcLayout::new(case);
        let c = self.anchor.squared_coords();
        let mut terms = Vec::with_capacity(self.normal.len());
        let mut constant = 0.0;
        let vars = layout.pg_gens.iter().map(|&g| qc.pg(g)).chain(layout.v_buses.iter().map(|&i| qc.w(i)));
        for ((var, n), ck) in vars.zip(&self.normal).zip(&c) {
            terms.push((var, *n));
            constant -= n * ck;
        }
        Constraint::eq(Affine::from_terms(terms, constant), Affine::constant(0.0))
    }
}

/// An endpoint: its setpoint and, once validated or when supplied, the
/// operating point realizing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertPoint {
    pub setpoint: SetpointVector,
    pub point: Option<OperatingPoint>,
}

impl CertPoint {
    pub fn from_setpoint(setpoint: SetpointVector) -> Self {
        Self { setpoint, point: None }
    }

    pub fn from_point(case: &NetworkCase, point: OperatingPoint) -> Self {
        Self { setpoint: SetpointVector::from_point(case, &point), point: Some(point) }
    }

    /// Builds the operating point from rectangular bus voltages.
    pub fn from_rectangular(case: &NetworkCase, volts: &[(f64, f64)]) -> Result<Self, NetworkError> {
        Ok(Self::from_point(case, OperatingPoint::from_rectangular(case, volts)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub case_id: String,
    pub bus_ids: Vec<usize>,
    pub verdict: Verdict,
    pub hyperplane: Hyperplane,
    pub obbt: ObbtOutcome,
    pub a: CertPoint,
    pub b: CertPoint,
    pub c: SetpointVector,
    pub lambda: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub obbt: ObbtOptions,
    pub newton: NewtonOptions,
    /// Tolerance of the constraint check that re-validates A and B.
    pub input_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { obbt: ObbtOptions::default(), newton: NewtonOptions::default(), input_tol: 1e-3 }
    }
}

fn check_dim(case: &NetworkCase, x: &SetpointVector) -> Result<(), CertifyError> {
    let layout = SetpointLayout::of(case);
    if x.pg.len() != layout.pg_gens.len() || x.v.len() != layout.v_buses.len() {
        return Err(CertifyError::DimensionMismatch { expected: layout.dim(), got: x.dim() });
    }
    Ok(())
}

/// `λ·A + (1 − λ)·B` in pg and v.
pub fn segment_point(a: &SetpointVector, b: &SetpointVector, lambda: f64) -> Result<SetpointVector, CertifyError> {
    if a.pg.len() != b.pg.len() || a.v.len() != b.v.len() {
        return Err(CertifyError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CertifyError::LambdaOutOfRange(lambda));
    }
    let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
    Ok(SetpointVector::new(mix(&a.pg, &b.pg), mix(&a.v, &b.v)))
}

/// The plane through `c` perpendicular to `A − B` in (pg, v²) coordinates.
pub fn build_hyperplane(a: &SetpointVector, b: &SetpointVector, c: &SetpointVector) -> Result<Hyperplane, CertifyError> {
    if a.pg.len() != b.pg.len() || a.v.len() != b.v.len() {
        return Err(CertifyError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if c.pg.len() != a.pg.len() || c.v.len() != a.v.len() {
        return Err(CertifyError::DimensionMismatch { expected: a.dim(), got: c.dim() });
    }
    let normal: Vec<f64> = a.squared_coords().iter().zip(b.squared_coords()).map(|(x, y)| x - y).collect();
    if normal.iter().all(|&x| x == 0.0) {
        return Err(CertifyError::DegeneratePoints);
    }
    Ok(Hyperplane { normal, anchor: c.clone(), rotation_angles_deg: vec![0.0; 3] })
}

/// Rotates the normal by `angle_deg` in the coordinate plane `(i, j)`, from
/// `i` toward `j`.
pub fn rotate_in_plane(h: &Hyperplane, i: usize, j: usize, angle_deg: f64) -> Result<Hyperplane, CertifyError> {
    let dim = h.normal.len();
    if i >= dim || j >= dim || i == j {
        return Err(CertifyError::InvalidAxis { axis: i.max(j), dim });
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut out = h.clone();
    let (x, y) = (h.normal[i], h.normal[j]);
    out.normal[i] = c * x - s * y;
    out.normal[j] = s * x + c * y;
    Ok(out)
}

/// Rotates about `axis` (0, 1 or 2) of the first three setpoint coordinates,
/// i.e. in the plane of the other two, and records the angle.
pub fn rotate_hyperplane(h: &Hyperplane, axis: usize, angle_deg: f64) -> Result<Hyperplane, CertifyError> {
    let dim = h.normal.len();
    if axis >= 3 || dim < 3 {
        return Err(CertifyError::InvalidAxis { axis, dim });
    }
    let (i, j) = [(1, 2), (2, 0), (0, 1)][axis];
    let mut out = rotate_in_plane(h, i, j, angle_deg)?;
    if out.rotation_angles_deg.len() < 3 {
        out.rotation_angles_deg.resize(3, 0.0);
    }
    out.rotation_angles_deg[axis] += angle_deg;
    Ok(out)
}

/// Applies the three axis rotations in order.
pub fn rotate_triple(h: &Hyperplane, angles_deg: [f64; 3]) -> Result<Hyperplane, CertifyError> {
    let mut out = h.clone();
    for (axis, &a) in angles_deg.iter().enumerate() {
        if a != 0.0 {
            out = rotate_hyperplane(&out, axis, a)?;
        }
    }
    Ok(out)
}

/// Finds a feasible operating point for `p`: the supplied voltages are used as
/// the Newton start when present, otherwise the multi-start profiles.
pub fn validate_point(
    case: &NetworkCase,
    p: &CertPoint,
    label: &str,
    opts: &CertifyOptions,
) -> Result<CertPoint, CertifyError> {
    check_dim(case, &p.setpoint)?;
    let setpoint = p.setpoint.clone();
    let extra: Vec<(Vec<f64>, Vec<f64>)> = p.point.iter().map(|o| (o.vm.clone(), o.va.clone())).collect();
    let solutions = match &p.point {
        Some(o) => newton_solve(case, &setpoint, Some((&o.vm, &o.va)), &opts.newton).into_iter().collect(),
        None => newton_multistart(case, &setpoint, &extra, &opts.newton)?,
    };
    if solutions.is_empty() {
        return Err(CertifyError::InfeasibleInput {
            label: label.into(),
            detail: "Newton power flow did not converge".into(),
        });
    }
    let mut worst = String::new();
    for pf in solutions {
        let report = constraint_check(case, &pf.point, opts.input_tol)?;
        if report.feasible {
            return Ok(CertPoint { setpoint, point: Some(pf.point) });
        }
        if let Some(v) = report.violations.first() {
            worst = format!("{} violated by {:.3e}", v.constraint, v.magnitude);
        }
    }
    Err(CertifyError::InfeasibleInput { label: label.into(), detail: worst })
}

/// Tries to prove that no power flow solution with setpoint `c` satisfies
/// the OPF constraints. Returns the bound tightening outcome; `infeasible`
/// is set only with solver evidence.
pub fn certify_setpoint_infeasible(
    case: &NetworkCase,
    c: &SetpointVector,
    opts: &ObbtOptions,
) -> Result<ObbtOutcome, CertifyError> {
    check_dim(case, c)?;
    let layout = SetpointLayout::of(case);
    let qc = QcLayout::new(case);
    let mut bounds = VariableBounds::from_case(case)?;
    let mut extra = Vec::new();
    for (&g, &p) in layout.pg_gens.iter().zip(&c.pg) {
        extra.push(Constraint::eq(Affine::var(qc.pg(g)), Affine::constant(p)));
    }
    for (&i, &v) in layout.v_buses.iter().zip(&c.v) {
        extra.push(Constraint::eq(Affine::var(qc.w(i)), Affine::constant(v * v)));
        let (lo, hi) = bounds.v[i];
        bounds.v[i] = (lo.max(v), hi.min(v));
    }
    if !bounds.is_empty() {
        bounds.refresh(case)?;
    }
    Ok(obbt_fixpoint(case, &bounds, &extra, opts)?)
}

/// Certifies that A and B are in different components by proving the
/// relaxation restricted to `h` infeasible.
pub fn certify_disconnected(
    case: &NetworkCase,
    a: &CertPoint,
    b: &CertPoint,
    h: &Hyperplane,
    lambda: Option<f64>,
    opts: &CertifyOptions,
) -> Result<Certificate, CertifyError> {
    certify_disconnected_with(case, a, b, h, lambda, opts, &ClarabelBackend::default())
}

/// [`certify_disconnected`] with an explicit conic backend.
pub fn certify_disconnected_with(
    case: &NetworkCase,
    a: &CertPoint,
    b: &CertPoint,
    h: &Hyperplane,
    lambda: Option<f64>,
    opts: &CertifyOptions,
    backend: &dyn ConicBackend,
) -> Result<Certificate, CertifyError> {
    let start = Instant::now();
    check_dim(case, &h.anchor)?;
    if h.normal.len() != SetpointLayout::of(case).dim() {
        return Err(CertifyError::DimensionMismatch { expected: SetpointLayout::of(case).dim(), got: h.normal.len() });
    }
    let a = validate_point(case, a, "A", opts)?;
    let b = validate_point(case, b, "B", opts)?;
    let (side_a, side_b) = (h.side(&a.setpoint), h.side(&b.setpoint));
    let tol = SIDE_TOL * h.norm();
    if !(side_a.abs() > tol && side_b.abs() > tol && side_a.signum() != side_b.signum()) {
        return Err(CertifyError::PointsNotSeparated { side_a, side_b });
    }
    let bounds = VariableBounds::from_case(case)?;
    let obbt = obbt_fixpoint_with(case, &bounds, &[h.constraint(case)], &opts.obbt, backend)?;
    let verdict = if obbt.infeasible && obbt.evidence.is_some() { Verdict::Disconnected } else { Verdict::Indeterminate };
    Ok(Certificate {
        case_id: case.name.clone(),
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        verdict,
        hyperplane: h.clone(),
        obbt,
        a,
        b,
        c: h.anchor.clone(),
        lambda,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sp(pg: &[f64], v: &[f64]) -> SetpointVector {
        SetpointVector::new(pg.to_vec(), v.to_vec())
    }

    #[test]
    fn segment_endpoints_and_midpoint() {
        let (a, b) = (sp(&[1.0], &[1.0]), sp(&[2.0], &[1.1]));
        assert_eq!(segment_point(&a, &b, 1.0).unwrap(), a);
        assert_eq!(segment_point(&a, &b, 0.0).unwrap(), b);
        let m = segment_point(&a, &b, 0.5).unwrap();
        assert_abs_diff_eq!(m.pg[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.v[0], 1.05, epsilon = 1e-15);
        assert_eq!(segment_point(&a, &b, 1.5), Err(CertifyError::LambdaOutOfRange(1.5)));
        assert!(matches!(segment_point(&a, &sp(&[1.0, 2.0], &[1.0]), 0.5), Err(CertifyError::DimensionMismatch { .. })));
    }

    #[test]
    fn hyperplane_normal_and_degeneracy() {
        let a = sp(&[1.0, 0.5], &[1.0]);
        assert_eq!(build_hyperplane(&a, &a, &a), Err(CertifyError::DegeneratePoints));
        let b = sp(&[2.0, 0.5], &[1.0]);
        let h = build_hyperplane(&a, &b, &segment_point(&a, &b, 0.5).unwrap()).unwrap();
        assert_eq!(h.normal, vec![-1.0, 0.0, 0.0]);
        assert!(h.side(&a) > 0.0 && h.side(&b) < 0.0);
        assert_eq!(h.side(&h.anchor), 0.0);
    }

    #[test]
    fn rotations_preserve_norm_and_anchor() {
        let a = sp(&[1.0, 0.5], &[1.02, 0.98]);
        let b = sp(&[0.4, 0.9], &[0.95, 1.05]);
        let h = build_hyperplane(&a, &b, &segment_point(&a, &b, 0.3).unwrap()).unwrap();
        assert_eq!(rotate_hyperplane(&h, 1, 0.0).unwrap().normal, h.normal);
        let full = rotate_hyperplane(&h, 2, 360.0).unwrap();
        for (x, y) in full.normal.iter().zip(&h.normal) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let r = rotate_triple(&h, [10.0, 45.0, -30.0]).unwrap();
        assert_abs_diff_eq!(r.norm(), h.norm(), epsilon = 1e-12);
        assert_eq!(r.anchor, h.anchor);
        assert_eq!(r.side(&r.anchor), 0.0);
        assert_eq!(r.rotation_angles_deg, vec![10.0, 45.0, -30.0]);
        // About axis 1: only coordinates 2 and 0 move.
        let r1 = rotate_hyperplane(&h, 1, 90.0).unwrap();
        assert_eq!(r1.normal[1], h.normal[1]);
        assert_eq!(r1.normal[3], h.normal[3]);
        assert_abs_diff_eq!(r1.normal[0], h.normal[2], epsilon = 1e-15);
        assert!(matches!(rotate_hyperplane(&h, 3, 1.0), Err(CertifyError::InvalidAxis { .. })));
        assert!(matches!(rotate_in_plane(&h, 0, 4, 1.0), Err(CertifyError::InvalidAxis { .. })));
    }

    #[test]
    fn scaling_the_normal_keeps_the_row_direction() {
        let a = sp(&[1.0], &[1.0, 1.1]);
        let b = sp(&[0.5], &[1.05, 1.0]);
        let h = build_hyperplane(&a, &b, &segment_point(&a, &b, 0.5).unwrap()).unwrap();
        let mut h2 = h.clone();
        h2.normal.iter_mut().for_each(|x| *x *= 7.0);
        assert_eq!(h.side(&a).signum(), h2.side(&a).signum());
        assert_abs_diff_eq!(h2.side(&a), 7.0 * h.side(&a), epsilon = 1e-12);
    }

    #[test]
    fn voltage_outside_limits_is_infeasible_at_once() {
        use crate::network::test_cases::two_bus;
        let case = two_bus(0.5, 0.1);
        let c = sp(&[], &[1.5]);
        let out = certify_setpoint_infeasible(&case, &c, &ObbtOptions::default()).unwrap();
        assert!(out.infeasible);
        assert!(out.evidence.is_some());
    }
}
