//! Brute-force picture of the feasible set for tiny cases: a regular grid over
//! three setpoint coordinates, each grid point solved with multi-start Newton
//! and checked against the OPF constraints.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CertifyError, Hyperplane, MAX_SAMPLE_BUSES, MAX_SAMPLE_RESOLUTION};
use crate::network::{constraint_check, newton_multistart, NetworkCase, NewtonOptions, SetpointLayout, SetpointVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Setpoint coordinates (positions in `SetpointVector::to_vec`) spanned by the grid.
    pub coords: [usize; 3],
    /// Grid points per axis.
    pub resolution: usize,
    /// Ranges of the three axes; defaults to the box limits.
    pub ranges: Option<[(f64, f64); 3]>,
    /// Values of the remaining coordinates; defaults to the box midpoints.
    pub base: Option<Vec<f64>>,
    pub feas_tol: f64,
    pub newton: NewtonOptions,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            coords: [0, 1, 2],
            resolution: 30,
            ranges: None,
            base: None,
            feas_tol: 1e-6,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub index: [usize; 3],
    pub coords: [f64; 3],
    pub setpoint: SetpointVector,
    pub feasible: bool,
}

impl GridSample {
    /// Whether the grid cell around this sample may touch `h`: the plane value
    /// at the sample is within half a cell of zero, measured with the plane's
    /// gradient along the three grid axes.
    pub fn near_plane(&self, h: &Hyperplane, coords: [usize; 3], steps: [f64; 3]) -> bool {
        let x = self.setpoint.to_vec();
        let n_pg = self.setpoint.pg.len();
        let mut slack = 0.0;
        for (&k, &step) in coords.iter().zip(&steps) {
            // d/dx of n_k·x² is 2·n_k·x for voltage coordinates
            let grad = if k < n_pg { h.normal[k] } else { 2.0 * h.normal[k] * x[k] };
            slack += 0.5 * grad.abs() * step;
        }
        h.side(&self.setpoint).abs() <= slack
    }
}

fn axis(lo: f64, hi: f64, res: usize) -> Vec<f64> {
    if res == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..res).map(|k| lo + (hi - lo) * k as f64 / (res - 1) as f64).collect()
}

/// Grid spacing per axis for the given options.
pub fn grid_steps(case: &NetworkCase, opts: &SampleOptions) -> [f64; 3] {
    let ranges = axis_ranges(case, opts);
    let d = opts.resolution.max(2) as f64 - 1.0;
    [0, 1, 2].map(|a| (ranges[a].1 - ranges[a].0) / d)
}

fn axis_ranges(case: &NetworkCase, opts: &SampleOptions) -> [(f64, f64); 3] {
    opts.ranges.unwrap_or_else(|| {
        let limits = SetpointLayout::of(case).box_limits(case);
        opts.coords.map(|k| limits.get(k).copied().unwrap_or((0.0, 0.0)))
    })
}

pub fn grid_sample_feasible_space(case: &NetworkCase, opts: &SampleOptions) -> Result<Vec<GridSample>, CertifyError> {
    let res = opts.resolution;
    if case.n_bus() > MAX_SAMPLE_BUSES || res == 0 || res > MAX_SAMPLE_RESOLUTION {
        return Err(CertifyError::CaseTooLarge { buses: case.n_bus(), resolution: res });
    }
    let layout = SetpointLayout::of(case);
    let dim = layout.dim();
    if let Some(&k) = opts.coords.iter().find(|&&k| k >= dim) {
        return Err(CertifyError::InvalidAxis { axis: k, dim });
    }
    let base: Vec<f64> = match &opts.base {
        Some(b) if b.len() == dim => b.clone(),
        Some(b) => return Err(CertifyError::DimensionMismatch { expected: dim, got: b.len() }),
        None => layout.box_limits(case).iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
    };
    let ranges = axis_ranges(case, opts);
    let axes: Vec<Vec<f64>> = ranges.iter().map(|&(lo, hi)| axis(lo, hi, res)).collect();

    let total = res * res * res;
    let out = (0..total)
        .into_par_iter()
        .map(|flat| {
            let index = [flat / (res * res), (flat / res) % res, flat % res];
            let coords = [axes[0][index[0]], axes[1][index[1]], axes[2][index[2]]];
            let mut x = base.clone();
            for (&k, &v) in opts.coords.iter().zip(&coords) {
                x[k] = v;
            }
            let setpoint = SetpointVector::from_vec(&layout, &x).expect("layout dimension checked");
            let feasible = newton_multistart(case, &setpoint, &[], &opts.newton)
                .map(|sols| {
                    sols.iter().any(|pf| {
                        constraint_check(case, &pf.point, opts.feas_tol).map(|r| r.feasible).unwrap_or(false)
                    })
                })
                .unwrap_or(false);
            GridSample { index, coords, setpoint, feasible }
        })
        .collect();
    Ok(out)
}

/// Groups feasible samples into clusters of grid neighbours (including
/// diagonal neighbours). Returns sample positions per cluster, largest first.
pub fn feasible_clusters(samples: &[GridSample]) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let pos: HashMap<[usize; 3], usize> =
        samples.iter().enumerate().filter(|(_, s)| s.feasible).map(|(k, s)| (s.index, k)).collect();
    let mut seen = vec![false; samples.len()];
    let mut clusters = Vec::new();
    let mut keys: Vec<_> = pos.iter().map(|(idx, &k)| (*idx, k)).collect();
    keys.sort();
    for (_, start) in keys {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(k) = stack.pop() {
            members.push(k);
            let [i, j, l] = samples[k].index.map(|x| x as i64);
            for di in -1..=1 {
                for dj in -1..=1 {
                    for dl in -1..=1 {
                        let n = [i + di, j + dj, l + dl];
                        if n.iter().any(|&x| x < 0) {
                            continue;
                        }
                        if let Some(&m) = pos.get(&n.map(|x| x as usize)) {
                            if !seen[m] {
                                seen[m] = true;
                                stack.push(m);
                            }
                        }
                    }
                }
            }
        }
        members.sort();
        clusters.push(members);
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    clusters
}

/// Writes one row per sample: the three coordinates (named after the setpoint
/// labels) and a 0/1 feasibility flag.
pub fn write_samples_csv(
    case: &NetworkCase,
    coords: [usize; 3],
    samples: &[GridSample],
    out: impl Write,
) -> Result<(), csv::Error> {
    let labels = SetpointLayout::of(case).labels(case);
    let mut w = csv::Writer::from_writer(out);
    let name = |k: usize| labels.get(k).cloned().unwrap_or_else(|| format!("x{k}"));
    w.write_record([name(coords[0]), name(coords[1]), name(coords[2]), "feasible".into()])?;
    for s in samples {
        w.write_record([
            s.coords[0].to_string(),
            s.coords[1].to_string(),
            s.coords[2].to_string(),
            u8::from(s.feasible).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
