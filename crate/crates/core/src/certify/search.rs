//! Searching for a pair of feasible points with a certified-infeasible point
//! on the segment between them.
//!
//! Feasible points come from batches of Latin-hypercube samples of the
//! setpoint box, solved with multi-start Newton. Batches double in size until
//! a certificate is found or the sample budget is spent. Pairs are ranked by how badly the power
//! flow solutions at their midpoint violate the OPF constraints, then the
//! most promising points of the λ grid are handed to the relaxation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{certify_setpoint_infeasible, segment_point, CertPoint, CertifyError};
use crate::network::{constraint_check, newton_multistart, NetworkCase, NewtonOptions, SetpointLayout, SetpointVector};
use crate::tightening::{ObbtOptions, ObbtOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Total number of setpoint samples.
    pub trials: usize,
    /// Size of the first sample batch; each later batch doubles.
    pub batch: usize,
    /// Feasible points kept for pairing.
    pub max_points: usize,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    /// Pairs passed on to the relaxation after each batch, best score first.
    pub max_pairs: usize,
    /// λ values certified per pair.
    pub per_pair: usize,
    pub feas_tol: f64,
    pub newton: NewtonOptions,
    pub obbt: ObbtOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            trials: 4000,
            batch: 64,
            max_points: 200,
            lambdas: (1..20).map(|k| k as f64 * 0.05).collect(),
            seed: 0,
            max_pairs: 10,
            per_pair: 3,
            feas_tol: 1e-6,
            newton: NewtonOptions::default(),
            obbt: ObbtOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub a: CertPoint,
    pub b: CertPoint,
    pub c: SetpointVector,
    pub lambda: f64,
    pub outcome: ObbtOutcome,
}

/// Latin-hypercube samples of the setpoint box.
fn latin_hypercube(limits: &[(f64, f64)], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; limits.len()]; n];
    for (d, &(lo, hi)) in limits.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (row, s) in out.iter_mut().zip(strata) {
            let u = (s as f64 + rng.gen::<f64>()) / n as f64;
            row[d] = lo + u * (hi - lo);
        }
    }
    out
}

/// First feasible power flow solution for `sp`, if any.
fn feasible_at(case: &NetworkCase, sp: &SetpointVector, opts: &SearchOptions) -> Option<CertPoint> {
    let sols = newton_multistart(case, sp, &[], &opts.newton).ok()?;
    sols.into_iter()
        .find(|pf| constraint_check(case, &pf.point, opts.feas_tol).map(|r| r.feasible).unwrap_or(false))
        .map(|pf| CertPoint { setpoint: sp.clone(), point: Some(pf.point) })
}

/// Smallest maximum constraint violation among the power flow solutions at
/// `sp`; infinite when Newton finds none. Zero means a feasible solution exists.
pub(crate) fn violation_score(case: &NetworkCase, sp: &SetpointVector, newton: &NewtonOptions) -> f64 {
    let Ok(sols) = newton_multistart(case, sp, &[], newton) else {
        return f64::INFINITY;
    };
    sols.iter()
        .filter_map(|pf| constraint_check(case, &pf.point, 0.0).ok())
        .map(|r| r.max_violation)
        .fold(f64::INFINITY, f64::min)
}

/// λ values of `lambdas` ordered by decreasing midpoint score (ties: closer to
/// one half first), keeping only those without a feasible solution.
fn ranked_lambdas(
    case: &NetworkCase,
    a: &SetpointVector,
    b: &SetpointVector,
    lambdas: &[f64],
    newton: &NewtonOptions,
    tol: f64,
) -> Result<Vec<(f64, SetpointVector, f64)>, CertifyError> {
    let mut pts = Vec::new();
    for &l in lambdas {
        pts.push((l, segment_point(a, b, l)?));
    }
    let mut scored: Vec<(f64, SetpointVector, f64)> = pts
        .into_par_iter()
        .map(|(l, c)| {
            let s = violation_score(case, &c, newton);
            (l, c, s)
        })
        .filter(|(_, _, s)| *s > tol)
        .collect();
    scored.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((x.0 - 0.5).abs().total_cmp(&(y.0 - 0.5).abs()))
    });
    Ok(scored)
}

/// Certifies λ values of the segment from `a` to `b`, most promising first,
/// and returns the first one proven infeasible. At most `limit` values reach
/// the relaxation.
pub fn scan_segment(
    case: &NetworkCase,
    a: &SetpointVector,
    b: &SetpointVector,
    lambdas: &[f64],
    limit: usize,
    newton: &NewtonOptions,
    obbt: &ObbtOptions,
) -> Result<Option<(f64, SetpointVector, ObbtOutcome)>, CertifyError> {
    for (l, c, _) in ranked_lambdas(case, a, b, lambdas, newton, 0.0)?.into_iter().take(limit) {
        let out = certify_setpoint_infeasible(case, &c, obbt)?;
        if out.infeasible {
            return Ok(Some((l, c, out)));
        }
    }
    Ok(None)
}

pub fn search_nonconvexity(case: &NetworkCase, opts: &SearchOptions) -> Result<SearchResult, CertifyError> {
    let layout = SetpointLayout::of(case);
    let limits = layout.box_limits(case);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut feasible: Vec<CertPoint> = Vec::new();
    // scored pairs not yet handed to the relaxation
    let mut pending: Vec<(usize, usize, f64)> = Vec::new();
    let mut drawn = 0;
    let mut batch = opts.batch.max(1);

    while drawn < opts.trials.max(1) {
        let n = batch.min(opts.trials.max(1) - drawn);
        drawn += n;
        batch *= 2;
        let fresh: Vec<CertPoint> = latin_hypercube(&limits, n, &mut rng)
            .par_iter()
            .filter_map(|x| {
                let sp = SetpointVector::from_vec(&layout, x).ok()?;
                feasible_at(case, &sp, opts)
            })
            .collect();
        let old = feasible.len();
        let room = opts.max_points.saturating_sub(old);
        feasible.extend(fresh.into_iter().take(room));

        let pairs: Vec<(usize, usize)> = (old..feasible.len()).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
        pending.par_extend(pairs.par_iter().filter_map(|&(i, j)| {
            let mid = segment_point(&feasible[i].setpoint, &feasible[j].setpoint, 0.5).ok()?;
            let s = violation_score(case, &mid, &opts.newton);
            (s > opts.feas_tol).then_some((i, j, s))
        }));
        pending.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap_or(std::cmp::Ordering::Equal).then((x.0, x.1).cmp(&(y.0, y.1))));

        let take = opts.max_pairs.min(pending.len());
        for (i, j, _) in pending.drain(..take).collect::<Vec<_>>() {
            let (a, b) = (&feasible[i], &feasible[j]);
            if let Some((lambda, c, outcome)) =
                scan_segment(case, &a.setpoint, &b.setpoint, &opts.lambdas, opts.per_pair, &opts.newton, &opts.obbt)?
            {
                return Ok(SearchResult { a: a.clone(), b: b.clone(), c, lambda, outcome });
            }
        }
    }
    Err(CertifyError::NotFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::test_cases::two_bus;

    #[test]
    fn latin_hypercube_hits_every_stratum_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = latin_hypercube(&[(0.0, 1.0), (10.0, 20.0)], 8, &mut rng);
        for d in 0..2 {
            let (lo, w) = if d == 0 { (0.0, 1.0) } else { (10.0, 10.0) };
            let mut strata: Vec<usize> = xs.iter().map(|r| (((r[d] - lo) / w) * 8.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn convex_two_bus_yields_not_found() {
        // Feasible set is an interval of the reference voltage.
        let case = two_bus(0.5, 0.1);
        let opts = SearchOptions { trials: 8, ..Default::default() };
        assert_eq!(search_nonconvexity(&case, &opts).unwrap_err(), CertifyError::NotFound);
    }
}
