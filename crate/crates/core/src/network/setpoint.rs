use serde::{Deserialize, Serialize};

use super::{NetworkCase, NetworkError, OperatingPoint};

/// Which case quantities make up a setpoint: active output of every generator
/// not attached to the reference bus, and the voltage magnitude of every
/// generator bus (in order of first appearance in the generator list).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetpointLayout {
    pub pg_gens: Vec<usize>,
    pub v_buses: Vec<usize>,
}

impl SetpointLayout {
    pub fn of(case: &NetworkCase) -> Self {
        let r = case.ref_index();
        let pg_gens = (0..case.n_gen()).filter(|&g| case.gen_bus_index(g) != r).collect();
        Self {
            pg_gens,
            v_buses: case.generator_buses(),
        }
    }

    pub fn dim(&self) -> usize {
        self.pg_gens.len() + self.v_buses.len()
    }

    /// Human-readable coordinate names, e.g. `Pg2` (generator at bus 2) and `V1`.
    pub fn labels(&self, case: &NetworkCase) -> Vec<String> {
        let mut out: Vec<String> = self
            .pg_gens
            .iter()
            .map(|&g| format!("Pg{}", case.generators[g].bus))
            .collect();
        out.extend(self.v_buses.iter().map(|&i| format!("V{}", case.buses[i].id)));
        out
    }

    /// Box limits of each coordinate, in the order of `SetpointVector::to_vec`.
    pub fn box_limits(&self, case: &NetworkCase) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .pg_gens
            .iter()
            .map(|&g| (case.generators[g].p_min, case.generators[g].p_max))
            .collect();
        out.extend(self.v_buses.iter().map(|&i| (case.buses[i].v_min, case.buses[i].v_max)));
        out
    }
}

/// A point in setpoint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointVector {
    pub pg: Vec<f64>,
    pub v: Vec<f64>,
}

impl SetpointVector {
    pub fn new(pg: Vec<f64>, v: Vec<f64>) -> Self {
        Self { pg, v }
    }

    /// Reads the setpoint coordinates of an operating point.
    pub fn from_point(case: &NetworkCase, point: &OperatingPoint) -> Self {
        let layout = SetpointLayout::of(case);
        Self {
            pg: layout.pg_gens.iter().map(|&g| point.pg[g]).collect(),
            v: layout.v_buses.iter().map(|&i| point.vm[i]).collect(),
        }
    }

    pub fn from_vec(layout: &SetpointLayout, x: &[f64]) -> Result<Self, NetworkError> {
        if x.len() != layout.dim() {
            return Err(NetworkError::DimensionMismatch(format!(
                "setpoint has {} coordinates, layout needs {}",
                x.len(),
                layout.dim()
            )));
        }
        let k = layout.pg_gens.len();
        Ok(Self {
            pg: x[..k].to_vec(),
            v: x[k..].to_vec(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.pg.iter().chain(&self.v).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.pg.len() + self.v.len()
    }

    pub fn check_layout(&self, layout: &SetpointLayout) -> Result<(), NetworkError> {
        if self.pg.len() != layout.pg_gens.len() || self.v.len() != layout.v_buses.len() {
            return Err(NetworkError::DimensionMismatch(format!(
                "setpoint has {} pg / {} v entries, case needs {} / {}",
                self.pg.len(),
                self.v.len(),
                layout.pg_gens.len(),
                layout.v_buses.len()
            )));
        }
        Ok(())
    }

    /// Coordinates in the hyperplane space: `pg` followed by `v^2`.
    pub fn squared_coords(&self) -> Vec<f64> {
        self.pg.iter().copied().chain(self.v.iter().map(|v| v * v)).collect()
    }
}
