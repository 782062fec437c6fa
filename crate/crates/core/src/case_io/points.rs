use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CaseError;
use crate::certify::CertPoint;
use crate::network::{NetworkCase, SetpointLayout, SetpointVector};

/// One point of a points file: either complex bus voltages in bus order, as
/// `[re, im]` pairs, or a setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Voltages { voltages: Vec<[f64; 2]> },
    Setpoint { pg: Vec<f64>, v: Vec<f64> },
}

impl PointSpec {
    pub fn to_cert_point(&self, case: &NetworkCase) -> Result<CertPoint, CaseError> {
        match self {
            PointSpec::Voltages { voltages } => {
                let volts: Vec<(f64, f64)> = voltages.iter().map(|&[re, im]| (re, im)).collect();
                CertPoint::from_rectangular(case, &volts).map_err(|e| CaseError::Invalid(e.to_string()))
            }
            PointSpec::Setpoint { pg, v } => {
                let sp = SetpointVector::new(pg.clone(), v.clone());
                sp.check_layout(&SetpointLayout::of(case)).map_err(|e| CaseError::Invalid(e.to_string()))?;
                Ok(CertPoint::from_setpoint(sp))
            }
        }
    }
}

/// Endpoints A and B, and optionally an explicit point C or the λ locating it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsFile {
    pub a: PointSpec,
    pub b: PointSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<PointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointsFile, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, &e))?;
    serde_json::from_str(&text).map_err(|e| CaseError::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_point_forms_parse() {
        let f: PointsFile = serde_json::from_str(
            r#"{"a": {"voltages": [[1.0, 0.0], [0.98, -0.05]]}, "b": {"pg": [], "v": [1.02]}, "lambda": 0.4}"#,
        )
        .unwrap();
        assert!(matches!(f.a, PointSpec::Voltages { ref voltages } if voltages.len() == 2));
        assert_eq!(f.b, PointSpec::Setpoint { pg: vec![], v: vec![1.02] });
        assert_eq!(f.c, None);
        assert_eq!(f.lambda, Some(0.4));
    }

    #[test]
    fn wrong_setpoint_dimension_is_rejected() {
        let case = crate::network::test_cases::two_bus(0.5, 0.1);
        let p = PointSpec::Setpoint { pg: vec![0.3], v: vec![1.0] };
        assert!(matches!(p.to_cert_point(&case), Err(CaseError::Invalid(_))));
        let q = PointSpec::Voltages { voltages: vec![[1.0, 0.0], [0.99, -0.05]] };
        let cp = q.to_cert_point(&case).unwrap();
        assert_eq!(cp.setpoint.v, vec![1.0]);
    }
}
