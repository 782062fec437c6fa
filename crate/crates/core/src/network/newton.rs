use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{split_among, NetworkCase, NetworkError, OperatingPoint, SetpointLayout, SetpointVector};

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Largest absolute P/Q mismatch accepted, p.u.
    pub tol: f64,
    /// Halve the step until the mismatch norm decreases.
    pub line_search: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
            line_search: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlow {
    pub point: OperatingPoint,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Dense bus admittance matrix including branch charging and bus shunts.
pub(crate) fn ybus(case: &NetworkCase) -> DMatrix<C64> {
    let n = case.n_bus();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += C64::new(bus.g_sh, bus.b_sh);
    }
    for (k, br) in case.branches.iter().enumerate() {
        let (f, t) = case.branch_ends(k);
        let ys = C64::new(br.g, br.b);
        let ytt = ys + C64::new(0.0, 0.5 * br.b_sh);
        let tap = C64::from_polar(br.tap, br.shift);
        y[(f, f)] += ytt / (br.tap * br.tap);
        y[(t, t)] += ytt;
        y[(f, t)] -= ys / tap.conj();
        y[(t, f)] -= ys / tap;
    }
    y
}

struct Problem {
    y: DMatrix<C64>,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
}

impl Problem {
    fn new(case: &NetworkCase, layout: &SetpointLayout, sp: &SetpointVector) -> Self {
        let r = case.ref_index();
        let n = case.n_bus();
        let mut is_pv = vec![false; n];
        for &i in &layout.v_buses {
            is_pv[i] = true;
        }
        let pvpq: Vec<usize> = (0..n).filter(|&i| i != r).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| i != r && !is_pv[i]).collect();
        let mut p_spec: Vec<f64> = case.buses.iter().map(|b| -b.pd).collect();
        let q_spec: Vec<f64> = case.buses.iter().map(|b| -b.qd).collect();
        for (&g, &p) in layout.pg_gens.iter().zip(&sp.pg) {
            p_spec[case.gen_bus_index(g)] += p;
        }
        Self {
            y: ybus(case),
            pvpq,
            pq,
            p_spec,
            q_spec,
        }
    }

    fn voltages(vm: &[f64], va: &[f64]) -> DVector<C64> {
        DVector::from_iterator(vm.len(), vm.iter().zip(va).map(|(m, a)| C64::from_polar(*m, *a)))
    }

    fn mismatch(&self, vm: &[f64], va: &[f64]) -> DVector<f64> {
        let v = Self::voltages(vm, va);
        let i = &self.y * &v;
        let np = self.pvpq.len();
        let mut f = DVector::zeros(np + self.pq.len());
        for (row, &b) in self.pvpq.iter().enumerate() {
            let s = v[b] * i[b].conj();
            f[row] = s.re - self.p_spec[b];
        }
        for (row, &b) in self.pq.iter().enumerate() {
            let s = v[b] * i[b].conj();
            f[np + row] = s.im - self.q_spec[b];
        }
        f
    }

    fn jacobian(&self, vm: &[f64], va: &[f64]) -> DMatrix<f64> {
        let n = vm.len();
        let v = Self::voltages(vm, va);
        let ibus = &self.y * &v;
        let vnorm: Vec<C64> = v.iter().zip(vm).map(|(x, m)| x / *m).collect();
        let j = C64::new(0.0, 1.0);
        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        // dS/dVm = diag(V) conj(Y diag(Vn)) + conj(diag(I)) diag(Vn)
        let ds_dva = |r: usize, c: usize| {
            let mut t = -self.y[(r, c)] * v[c];
            if r == c {
                t += ibus[r];
            }
            j * v[r] * t.conj()
        };
        let ds_dvm = |r: usize, c: usize| {
            let mut t = v[r] * (self.y[(r, c)] * vnorm[c]).conj();
            if r == c {
                t += ibus[r].conj() * vnorm[r];
            }
            t
        };
        let np = self.pvpq.len();
        let dim = np + self.pq.len();
        let mut jac = DMatrix::zeros(dim, dim);
        debug_assert!(n >= np);
        for (ri, &r) in self.pvpq.iter().enumerate() {
            for (ci, &c) in self.pvpq.iter().enumerate() {
                jac[(ri, ci)] = ds_dva(r, c).re;
            }
            for (ci, &c) in self.pq.iter().enumerate() {
                jac[(ri, np + ci)] = ds_dvm(r, c).re;
            }
        }
        for (ri, &r) in self.pq.iter().enumerate() {
            for (ci, &c) in self.pvpq.iter().enumerate() {
                jac[(np + ri, ci)] = ds_dva(r, c).im;
            }
            for (ci, &c) in self.pq.iter().enumerate() {
                jac[(np + ri, np + ci)] = ds_dvm(r, c).im;
            }
        }
        jac
    }

    fn apply(&self, vm: &mut [f64], va: &mut [f64], dx: &DVector<f64>, step: f64) {
        let np = self.pvpq.len();
        for (k, &b) in self.pvpq.iter().enumerate() {
            va[b] += step * dx[k];
        }
        for (k, &b) in self.pq.iter().enumerate() {
            vm[b] += step * dx[np + k];
        }
    }
}

fn inf_norm(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves the AC power flow for a fixed setpoint: `pg` fixed at non-slack
/// generators, `v` fixed at generator buses, the reference bus absorbing the
/// active mismatch. Starts from `init` (its setpoint voltages are overwritten)
/// or from a flat profile.
pub fn newton_solve(
    case: &NetworkCase,
    setpoint: &SetpointVector,
    init: Option<(&[f64], &[f64])>,
    opts: &NewtonOptions,
) -> Result<PowerFlow, NetworkError> {
    let layout = SetpointLayout::of(case);
    setpoint.check_layout(&layout)?;
    let n = case.n_bus();
    let (mut vm, mut va) = match init {
        Some((m, a)) if m.len() == n && a.len() == n => (m.to_vec(), a.to_vec()),
        Some(_) => {
            return Err(NetworkError::DimensionMismatch(format!("initial point must have {n} buses")))
        }
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for (&i, &v) in layout.v_buses.iter().zip(&setpoint.v) {
        vm[i] = v;
    }
    let r = case.ref_index();
    va[r] = 0.0;

    let prob = Problem::new(case, &layout, setpoint);
    let mut f = prob.mismatch(&vm, &va);
    let mut norm = inf_norm(&f);
    let mut iterations = 0;
    while norm > opts.tol {
        if iterations == opts.max_iter || !norm.is_finite() {
            return Err(NetworkError::NoConvergence { iterations, mismatch: norm });
        }
        iterations += 1;
        let jac = prob.jacobian(&vm, &va);
        let Some(dx) = jac.lu().solve(&(-&f)) else {
            return Err(NetworkError::NoConvergence { iterations, mismatch: norm });
        };
        if opts.line_search {
            let mut step = 1.0;
            loop {
                let (mut vm_t, mut va_t) = (vm.clone(), va.clone());
                prob.apply(&mut vm_t, &mut va_t, &dx, step);
                let f_t = prob.mismatch(&vm_t, &va_t);
                let n_t = inf_norm(&f_t);
                if n_t < norm || step < 1e-3 {
                    vm = vm_t;
                    va = va_t;
                    f = f_t;
                    norm = n_t;
                    break;
                }
                step *= 0.5;
            }
        } else {
            prob.apply(&mut vm, &mut va, &dx, 1.0);
            f = prob.mismatch(&vm, &va);
            norm = inf_norm(&f);
        }
    }

    if vm.iter().any(|&m| m <= 0.0) {
        return Err(NetworkError::NoConvergence { iterations, mismatch: norm });
    }
    for a in va.iter_mut() {
        *a = wrap_angle(*a);
    }
    let mut point = OperatingPoint::from_voltages(case, vm, va)?;
    // keep the fixed dispatch exactly; the bus split only matters at the slack
    for (&g, &p) in layout.pg_gens.iter().zip(&setpoint.pg) {
        point.pg[g] = p;
    }
    let slack = case.gens_at(r);
    if !slack.is_empty() {
        let (p_inj, _) = super::net_injections(case, &point.vm, &point.flows);
        split_among(case, slack, p_inj[r], |g| (g.p_min, g.p_max), &mut point.pg);
    }
    Ok(PowerFlow { point, iterations, mismatch: norm })
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI { w + 2.0 * PI } else { w }
}

/// Deterministic starting profiles for multi-start Newton: PQ voltage scalings
/// {1.0, 0.7, 1.2} combined with uniform and seeded per-bus angle offsets of
/// ±0.25 rad.
pub fn multistart_inits(case: &NetworkCase, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = case.n_bus();
    let r = case.ref_index();
    let mut patterns: Vec<Vec<f64>> = vec![vec![0.0; n], vec![0.25; n], vec![-0.25; n]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        patterns.push((0..n).map(|_| if rng.gen::<bool>() { 0.25 } else { -0.25 }).collect());
    }
    let mut out = Vec::new();
    for scale in [1.0, 0.7, 1.2] {
        for pat in &patterns {
            let mut va = pat.clone();
            va[r] = 0.0;
            out.push((vec![scale; n], va));
        }
    }
    out
}

/// Runs Newton from every profile of [`multistart_inits`] plus any extra
/// starting points, and returns the distinct converged solutions.
pub fn newton_multistart(
    case: &NetworkCase,
    setpoint: &SetpointVector,
    extra: &[(Vec<f64>, Vec<f64>)],
    opts: &NewtonOptions,
) -> Result<Vec<PowerFlow>, NetworkError> {
    setpoint.check_layout(&SetpointLayout::of(case))?;
    let mut inits = extra.to_vec();
    inits.extend(multistart_inits(case, 0));
    let mut found: Vec<PowerFlow> = Vec::new();
    for (vm, va) in &inits {
        let Ok(pf) = newton_solve(case, setpoint, Some((vm, va)), opts) else {
            continue;
        };
        let duplicate = found.iter().any(|f| {
            f.point
                .vm
                .iter()
                .zip(&pf.point.vm)
                .chain(f.point.va.iter().zip(&pf.point.va))
                .all(|(a, b)| (a - b).abs() < 1e-6)
        });
        if !duplicate {
            found.push(pf);
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::super::test_cases::two_bus;
    use super::super::{power_balance_residual, OperatingPoint};
    use super::*;

    #[test]
    fn flat_start_solves_unloaded_case_immediately() {
        let case = two_bus(0.0, 0.0);
        let sp = SetpointVector::new(vec![], vec![1.0]);
        let pf = newton_solve(&case, &sp, None, &NewtonOptions::default()).unwrap();
        assert_eq!(pf.iterations, 0);
        assert_eq!(pf.point.vm, vec![1.0, 1.0]);
        assert_eq!(pf.point.va, vec![0.0, 0.0]);
    }

    #[test]
    fn loaded_two_bus_converges_and_balances() {
        let case = two_bus(0.5, 0.1);
        let sp = SetpointVector::new(vec![], vec![1.0]);
        let pf = newton_solve(&case, &sp, None, &NewtonOptions::default()).unwrap();
        for (dp, dq) in power_balance_residual(&case, &pf.point).unwrap() {
            assert!(dp.abs() <= 1e-8 && dq.abs() <= 1e-8);
        }
        assert!((pf.point.pg[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn two_bus_has_a_low_voltage_solution() {
        // lossless line, x = 0.1: V2^4 - 0.98 V2^2 + 0.0026 = 0, so V2 = 0.9886 or 0.0516
        let case = two_bus(0.5, 0.1);
        let sp = SetpointVector::new(vec![], vec![1.0]);
        let extra = vec![(vec![1.0, 0.1], vec![0.0, -1.2])];
        let sols = newton_multistart(&case, &sp, &extra, &NewtonOptions::default()).unwrap();
        assert_eq!(sols.len(), 2);
        let mut v2: Vec<f64> = sols.iter().map(|s| s.point.vm[1]).collect();
        v2.sort_by(f64::total_cmp);
        assert!((v2[0] - 0.002660_f64.sqrt()).abs() < 1e-4);
        assert!((v2[1] - 0.977340_f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn line_search_reaches_the_same_solution() {
        let case = two_bus(0.5, 0.1);
        let sp = SetpointVector::new(vec![], vec![1.0]);
        let a = newton_solve(&case, &sp, None, &NewtonOptions::default()).unwrap();
        let opts = NewtonOptions { line_search: true, ..Default::default() };
        let b = newton_solve(&case, &sp, None, &opts).unwrap();
        assert!((a.point.vm[1] - b.point.vm[1]).abs() < 1e-9);
    }

    #[test]
    fn overloaded_line_does_not_converge() {
        // maximum transfer of the lossless line at V1 = 1 is far below 20 p.u.
        let case = two_bus(20.0, 0.0);
        let sp = SetpointVector::new(vec![], vec![1.0]);
        assert!(matches!(
            newton_solve(&case, &sp, None, &NewtonOptions::default()),
            Err(NetworkError::NoConvergence { .. })
        ));
    }

    #[test]
    fn ybus_reproduces_branch_flows() {
        let case = two_bus(0.0, 0.0);
        let p = OperatingPoint::from_voltages(&case, vec![1.02, 0.97], vec![0.0, -0.1]).unwrap();
        let y = ybus(&case);
        let v = DVector::from_iterator(2, p.vm.iter().zip(&p.va).map(|(m, a)| C64::from_polar(*m, *a)));
        let s = v[0] * (y.row(0) * &v)[0].conj();
        assert!((s.re - p.flows[0].p_from).abs() < 1e-12);
        assert!((s.im - p.flows[0].q_from).abs() < 1e-12);
    }
}
