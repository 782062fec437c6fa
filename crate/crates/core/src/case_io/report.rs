use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CaseError;
use crate::certify::{Certificate, Verdict};
use crate::network::SetpointVector;
use crate::relaxation::VariableBounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneRecord {
    pub normal: Vec<f64>,
    /// Point C in setpoint coordinates (`pg` then `v`).
    pub offset_point: Vec<f64>,
    pub rotation_angles_deg: Vec<f64>,
}

/// A feasible endpoint: its setpoint and, when known, the bus voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub pg: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default)]
    pub vm: Vec<f64>,
    #[serde(default)]
    pub va: Vec<f64>,
}

impl PointRecord {
    pub fn setpoint(&self) -> SetpointVector {
        SetpointVector::new(self.pg.clone(), self.v.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub variable: String,
    pub lower: f64,
    pub upper: f64,
}

/// The JSON document written for every certification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub case_id: String,
    pub point_a: PointRecord,
    pub point_b: PointRecord,
    pub lambda: Option<f64>,
    pub hyperplane: HyperplaneRecord,
    pub verdict: Verdict,
    pub obbt_iterations: usize,
    pub tightened_bounds: Vec<BoundRecord>,
    pub wall_time_s: f64,
}

impl Report {
    pub fn new(cert: &Certificate, bounds: &VariableBounds) -> Self {
        let point = |p: &crate::certify::CertPoint| PointRecord {
            pg: p.setpoint.pg.clone(),
            v: p.setpoint.v.clone(),
            vm: p.point.as_ref().map(|o| o.vm.clone()).unwrap_or_default(),
            va: p.point.as_ref().map(|o| o.va.clone()).unwrap_or_default(),
        };
        let mut tightened: Vec<BoundRecord> = bounds
            .v
            .iter()
            .zip(&cert.bus_ids)
            .map(|(&(lower, upper), id)| BoundRecord { variable: format!("V@{id}"), lower, upper })
            .collect();
        tightened.extend(bounds.theta.iter().enumerate().map(|(k, &(lower, upper))| BoundRecord {
            variable: format!("theta@br{k}"),
            lower,
            upper,
        }));
        Self {
            case_id: cert.case_id.clone(),
            point_a: point(&cert.a),
            point_b: point(&cert.b),
            lambda: cert.lambda,
            hyperplane: HyperplaneRecord {
                normal: cert.hyperplane.normal.clone(),
                offset_point: cert.hyperplane.anchor.to_vec(),
                rotation_angles_deg: cert.hyperplane.rotation_angles_deg.clone(),
            },
            verdict: cert.verdict,
            obbt_iterations: cert.obbt.iterations,
            tightened_bounds: tightened,
            wall_time_s: cert.wall_time_s,
        }
    }
}

/// Writes the report for `cert` with the given bounds as pretty JSON and
/// returns the record that was written.
pub fn write_report(cert: &Certificate, bounds: &VariableBounds, path: impl AsRef<Path>) -> Result<Report, CaseError> {
    let path = path.as_ref();
    let report = Report::new(cert, bounds);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CaseError::Invalid(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CaseError::io(path, &e))?;
    Ok(report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, &e))?;
    serde_json::from_str(&text).map_err(|e| CaseError::Invalid(format!("{}: {e}", path.display())))
}
