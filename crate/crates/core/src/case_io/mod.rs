//! Case files in, per-unit networks and JSON reports out.

mod matpower;
mod points;
mod report;

use std::path::Path;

use thiserror::Error;

use crate::network::{Branch, Bus, CostCurve, Generator, NetworkCase};

pub use matpower::{parse_matpower, write_matpower, RawCaseFile, BRANCH_MIN_COLS, BUS_MIN_COLS, GEN_MIN_COLS};
pub use points::{read_points, PointSpec, PointsFile};
pub use report::{read_report, write_report, BoundRecord, HyperplaneRecord, PointRecord, Report};

/// Angle-difference limit used when a case leaves a branch unconstrained, degrees.
pub const DEFAULT_ANGLE_LIMIT_DEG: f64 = 89.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("{path}: {message}")]
    Io {
        path: String,
        kind: std::io::ErrorKind,
        message: String,
    },
    #[error("missing section mpc.{0}")]
    MissingSection(&'static str),
    #[error("{table} row {row}: {detail}")]
    MalformedTable {
        table: &'static str,
        row: usize,
        detail: String,
    },
    #[error("{table} row {row}: cannot parse '{token}' as a number")]
    NonNumericField {
        table: &'static str,
        row: usize,
        token: String,
    },
    #[error("baseMVA must be positive, got {0}")]
    InvalidBaseMva(f64),
    #[error("duplicate bus id")]
    DuplicateBusId,
    #[error("{table} row {row} references unknown bus {bus}")]
    UnknownBus {
        table: &'static str,
        row: usize,
        bus: i64,
    },
    #[error("branch row {row} connects bus {bus} to itself")]
    SelfLoop { row: usize, bus: i64 },
    #[error("no reference bus (type 3)")]
    NoReferenceBus,
    #[error("several reference buses: {0:?}")]
    MultipleReferenceBuses(Vec<usize>),
    #[error("branch row {0} has zero impedance")]
    ZeroImpedanceBranch(usize),
    #[error("bus {0} has no in-service branch")]
    IslandedBus(usize),
    #[error("gencost row {row}: {detail}")]
    UnsupportedCost { row: usize, detail: String },
    #[error("invalid case data: {0}")]
    Invalid(String),
}

impl CaseError {
    pub(crate) fn io(path: &Path, err: &std::io::Error) -> Self {
        CaseError::Io {
            path: path.display().to_string(),
            kind: err.kind(),
            message: err.to_string(),
        }
    }
}

/// Reads and converts a case file in one step.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::io(path, &e))?;
    let mut raw = parse_matpower(&text)?;
    if raw.name.is_empty() {
        raw.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    to_network_case(&raw)
}

fn angle_limits(row: &[f64]) -> (f64, f64) {
    let lo = row.get(11).copied().unwrap_or(0.0);
    let hi = row.get(12).copied().unwrap_or(0.0);
    let lim = DEFAULT_ANGLE_LIMIT_DEG;
    // 0/0 is MATPOWER's "unconstrained"
    let (lo, hi) = if lo == 0.0 && hi == 0.0 { (-lim, lim) } else { (lo, hi) };
    (lo.max(-lim).to_radians(), hi.min(lim).to_radians())
}

/// Converts raw tables to a per-unit network. Out-of-service generators and
/// branches are dropped; bus ids are kept as given.
pub fn to_network_case(raw: &RawCaseFile) -> Result<NetworkCase, CaseError> {
    raw.validate()?;
    let base = raw.base_mva;

    let refs: Vec<usize> = raw
        .bus_table
        .iter()
        .filter(|r| r[1] as i64 == 3)
        .map(|r| r[0] as usize)
        .collect();
    let ref_bus = match refs.as_slice() {
        [] => return Err(CaseError::NoReferenceBus),
        [one] => *one,
        _ => return Err(CaseError::MultipleReferenceBuses(refs)),
    };

    let buses: Vec<Bus> = raw
        .bus_table
        .iter()
        .map(|r| Bus {
            id: r[0] as usize,
            pd: r[2] / base,
            qd: r[3] / base,
            g_sh: r[4] / base,
            b_sh: r[5] / base,
            v_max: r[11],
            v_min: r[12],
        })
        .collect();

    let mut generators = Vec::new();
    for (k, r) in raw.gen_table.iter().enumerate() {
        if r[7] <= 0.0 {
            continue;
        }
        let cost = match raw.gencost_table.get(k) {
            Some(c) => convert_cost(c, k + 1, base)?,
            None => CostCurve::default(),
        };
        generators.push(Generator {
            bus: r[0] as usize,
            p_min: r[9] / base,
            p_max: r[8] / base,
            q_min: r[4] / base,
            q_max: r[3] / base,
            cost,
            v_set: r[5],
            p_set: r[1] / base,
        });
    }

    let mut branches = Vec::new();
    for (k, r) in raw.branch_table.iter().enumerate() {
        if r[10] <= 0.0 {
            continue;
        }
        let (res, x) = (r[2], r[3]);
        let z2 = res * res + x * x;
        if z2 == 0.0 {
            return Err(CaseError::ZeroImpedanceBranch(k + 1));
        }
        let (theta_min, theta_max) = angle_limits(r);
        if theta_min > theta_max {
            return Err(CaseError::Invalid(format!("branch row {}: angmin > angmax", k + 1)));
        }
        branches.push(Branch {
            from: r[0] as usize,
            to: r[1] as usize,
            g: res / z2,
            b: -x / z2,
            b_sh: r[4],
            tap: if r[8] == 0.0 { 1.0 } else { r[8] },
            shift: r[9].to_radians(),
            s_max: (r[5] > 0.0).then(|| r[5] / base),
            theta_min,
            theta_max,
        });
    }

    if buses.len() > 1 {
        let mut touched = std::collections::HashSet::new();
        for br in &branches {
            touched.insert(br.from);
            touched.insert(br.to);
        }
        if let Some(b) = buses.iter().find(|b| !touched.contains(&b.id)) {
            return Err(CaseError::IslandedBus(b.id));
        }
    }

    NetworkCase::new(raw.name.clone(), base, buses, generators, branches, ref_bus)
        .map_err(|e| CaseError::Invalid(e.to_string()))
}

fn convert_cost(row: &[f64], row_no: usize, base: f64) -> Result<CostCurve, CaseError> {
    if row[0] as i64 != 2 {
        return Err(CaseError::UnsupportedCost {
            row: row_no,
            detail: "only polynomial cost models are supported".into(),
        });
    }
    let n = row[3] as usize;
    if n > 3 || row.len() < 4 + n {
        return Err(CaseError::UnsupportedCost {
            row: row_no,
            detail: format!("polynomial with {n} coefficients"),
        });
    }
    // highest order first
    let coeffs = &row[4..4 + n];
    let get = |power: usize| if power < n { coeffs[n - 1 - power] } else { 0.0 };
    let c2 = get(2);
    if c2 < 0.0 {
        return Err(CaseError::UnsupportedCost {
            row: row_no,
            detail: "negative quadratic coefficient".into(),
        });
    }
    Ok(CostCurve {
        c2: c2 * base * base,
        c1: get(1) * base,
        c0: get(0),
    })
}

/// Writes a per-unit network back to MATPOWER tables (MW, MVAr, degrees).
/// Columns the network does not carry are filled with neutral values.
pub fn from_network_case(case: &NetworkCase) -> RawCaseFile {
    let base = case.base_mva;
    let gen_buses: std::collections::HashSet<usize> = case.generators.iter().map(|g| g.bus).collect();
    let bus_table = case
        .buses
        .iter()
        .map(|b| {
            let kind = if b.id == case.ref_bus {
                3.0
            } else if gen_buses.contains(&b.id) {
                2.0
            } else {
                1.0
            };
            vec![
                b.id as f64, kind, b.pd * base, b.qd * base, b.g_sh * base, b.b_sh * base, 1.0, 1.0, 0.0,
                0.0, 1.0, b.v_max, b.v_min,
            ]
        })
        .collect();
    let gen_table = case
        .generators
        .iter()
        .map(|g| {
            vec![
                g.bus as f64, g.p_set * base, 0.0, g.q_max * base, g.q_min * base, g.v_set, base, 1.0,
                g.p_max * base, g.p_min * base,
            ]
        })
        .collect();
    let gencost_table = case
        .generators
        .iter()
        .map(|g| vec![2.0, 0.0, 0.0, 3.0, g.cost.c2 / (base * base), g.cost.c1 / base, g.cost.c0])
        .collect();
    let branch_table = case
        .branches
        .iter()
        .map(|br| {
            let y2 = br.g * br.g + br.b * br.b;
            vec![
                br.from as f64,
                br.to as f64,
                br.g / y2,
                -br.b / y2,
                br.b_sh,
                br.s_max.map_or(0.0, |s| s * base),
                0.0,
                0.0,
                if br.tap == 1.0 { 0.0 } else { br.tap },
                br.shift.to_degrees(),
                1.0,
                br.theta_min.to_degrees(),
                br.theta_max.to_degrees(),
            ]
        })
        .collect();
    RawCaseFile {
        name: case.name.clone(),
        base_mva: base,
        bus_table,
        gen_table,
        branch_table,
        gencost_table,
        warnings: Vec::new(),
    }
}
