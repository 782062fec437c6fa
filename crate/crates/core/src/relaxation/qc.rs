use serde::{Deserialize, Serialize};

use super::envelopes::{cos_envelope, mccormick, sin_envelope, square_envelope};
use super::program::{Affine, ConicProgram, Constraint};
use super::{RelaxationError, VariableBounds};
use crate::network::{NetworkCase, OperatingPoint};

/// Variable positions of a QC program. Per bus: `V`, `w`, `θ`; per branch:
/// `w_lm`, `C ≈ cos δ`, `S ≈ sin δ`, `c`, `s` and the four terminal flows;
/// per generator: `Pg`, `Qg`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcLayout {
    pub n_bus: usize,
    pub n_branch: usize,
    pub n_gen: usize,
}

impl QcLayout {
    pub fn new(case: &NetworkCase) -> Self {
        Self { n_bus: case.n_bus(), n_branch: case.n_branch(), n_gen: case.n_gen() }
    }
    pub fn v(&self, i: usize) -> usize {
        i
    }
    pub fn w(&self, i: usize) -> usize {
        self.n_bus + i
    }
    pub fn theta(&self, i: usize) -> usize {
        2 * self.n_bus + i
    }
    fn br(&self, slot: usize, k: usize) -> usize {
        3 * self.n_bus + slot * self.n_branch + k
    }
    pub fn wlm(&self, k: usize) -> usize {
        self.br(0, k)
    }
    pub fn cos(&self, k: usize) -> usize {
        self.br(1, k)
    }
    pub fn sin(&self, k: usize) -> usize {
        self.br(2, k)
    }
    pub fn c(&self, k: usize) -> usize {
        self.br(3, k)
    }
    pub fn s(&self, k: usize) -> usize {
        self.br(4, k)
    }
    pub fn p_from(&self, k: usize) -> usize {
        self.br(5, k)
    }
    pub fn q_from(&self, k: usize) -> usize {
        self.br(6, k)
    }
    pub fn p_to(&self, k: usize) -> usize {
        self.br(7, k)
    }
    pub fn q_to(&self, k: usize) -> usize {
        self.br(8, k)
    }
    pub fn pg(&self, g: usize) -> usize {
        3 * self.n_bus + 9 * self.n_branch + g
    }
    pub fn qg(&self, g: usize) -> usize {
        3 * self.n_bus + 9 * self.n_branch + self.n_gen + g
    }
    pub fn n_vars(&self) -> usize {
        3 * self.n_bus + 9 * self.n_branch + 2 * self.n_gen
    }
}

/// A built QC program together with its variable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QcRelaxation {
    pub program: ConicProgram,
    pub layout: QcLayout,
}

impl QcRelaxation {
    /// `θ_from − θ_to` of branch `k`.
    pub fn angle_difference(&self, case: &NetworkCase, k: usize) -> Affine {
        let (f, t) = case.branch_ends(k);
        Affine::from_terms(vec![(self.layout.theta(f), 1.0), (self.layout.theta(t), -1.0)], 0.0)
    }
}

/// Tightest bounds on bus angles implied by `θ_ref = 0` and the branch
/// angle-difference bounds (shortest paths in the difference-constraint graph).
pub fn bus_angle_bounds(case: &NetworkCase, theta: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = case.n_bus();
    let r = case.ref_index();
    let mut lb = vec![f64::NEG_INFINITY; n];
    let mut ub = vec![f64::INFINITY; n];
    lb[r] = 0.0;
    ub[r] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for (k, &(lo, hi)) in theta.iter().enumerate() {
            let (f, t) = case.branch_ends(k);
            // lo ≤ θf − θt ≤ hi
            for (i, val) in [(f, ub[t] + hi), (t, ub[f] - lo)] {
                if val < ub[i] {
                    ub[i] = val;
                    changed = true;
                }
            }
            for (i, val) in [(f, lb[t] + lo), (t, lb[f] - hi)] {
                if val > lb[i] {
                    lb[i] = val;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    lb.into_iter().zip(ub).collect()
}

fn interval_mul((a, b): (f64, f64), (c, d): (f64, f64)) -> (f64, f64) {
    let p = [a * c, a * d, b * c, b * d];
    (p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Range of `Σ coef · x` over a box.
fn interval_sum(parts: &[(f64, (f64, f64))]) -> (f64, f64) {
    parts.iter().fold((0.0, 0.0), |(lo, hi), &(c, (a, b))| {
        let (x, y) = (c * a, c * b);
        (lo + x.min(y), hi + x.max(y))
    })
}

/// Widens an implied interval slightly so that rounding never excludes a true value.
fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    let e = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
    (lo - e, hi + e)
}

/// Builds the QC relaxation of the case's OPF constraints under `bounds`.
pub fn build_qc(case: &NetworkCase, bounds: &VariableBounds) -> Result<QcRelaxation, RelaxationError> {
    if bounds.v.len() != case.n_bus() || bounds.theta.len() != case.n_branch() || bounds.trig.len() != case.n_branch()
    {
        return Err(RelaxationError::InvalidBounds("bounds do not match the case".into()));
    }
    let lay = QcLayout::new(case);
    let mut p = ConicProgram::default();
    let ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();

    for (i, &(lo, hi)) in bounds.v.iter().enumerate() {
        p.add_var(format!("V[{}]", ids[i]), lo, hi);
    }
    for i in 0..case.n_bus() {
        let (lo, hi) = bounds.w(i);
        p.add_var(format!("w[{}]", ids[i]), lo, hi);
    }
    let ang = bus_angle_bounds(case, &bounds.theta);
    for (i, &(lo, hi)) in ang.iter().enumerate() {
        p.add_var(format!("theta[{}]", ids[i]), lo, hi);
    }

    let c_rng: Vec<(f64, f64)> =
        (0..case.n_branch()).map(|k| interval_mul(bounds.wlm[k], (bounds.trig[k].c_min, bounds.trig[k].c_max))).collect();
    let s_rng: Vec<(f64, f64)> =
        (0..case.n_branch()).map(|k| interval_mul(bounds.wlm[k], (bounds.trig[k].s_min, bounds.trig[k].s_max))).collect();
    let flow_rng: Vec<[(f64, f64); 4]> = case
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let (f, t) = case.branch_ends(k);
            let (g, b, t1) = (br.g, br.b, br.tap);
            let bt = b + 0.5 * br.b_sh;
            let (wf, wt, c, s) = (bounds.w(f), bounds.w(t), c_rng[k], s_rng[k]);
            let mut out = [
                interval_sum(&[(g / (t1 * t1), wf), (-g / t1, c), (-b / t1, s)]),
                interval_sum(&[(-bt / (t1 * t1), wf), (b / t1, c), (-g / t1, s)]),
                interval_sum(&[(g, wt), (-g / t1, c), (b / t1, s)]),
                interval_sum(&[(-bt, wt), (b / t1, c), (g / t1, s)]),
            ];
            if let Some(smax) = br.s_max {
                for r in out.iter_mut() {
                    *r = (r.0.max(-smax), r.1.min(smax));
                }
            }
            out.map(pad)
        })
        .collect();

    let slots: [(&str, Box<dyn Fn(usize) -> (f64, f64)>); 9] = [
        ("wlm", Box::new(|k| bounds.wlm[k])),
        ("C", Box::new(|k| (bounds.trig[k].c_min, bounds.trig[k].c_max))),
        ("S", Box::new(|k| (bounds.trig[k].s_min, bounds.trig[k].s_max))),
        ("c", Box::new(|k| pad(c_rng[k]))),
        ("s", Box::new(|k| pad(s_rng[k]))),
        ("p_from", Box::new(|k| flow_rng[k][0])),
        ("q_from", Box::new(|k| flow_rng[k][1])),
        ("p_to", Box::new(|k| flow_rng[k][2])),
        ("q_to", Box::new(|k| flow_rng[k][3])),
    ];
    for (name, rng) in &slots {
        for k in 0..case.n_branch() {
            let (lo, hi) = rng(k);
            p.add_var(format!("{name}[br{k}]"), lo, hi);
        }
    }
    for (g, gen) in case.generators.iter().enumerate() {
        p.add_var(format!("Pg[gen{g}@{}]", gen.bus), gen.p_min, gen.p_max);
    }
    for (g, gen) in case.generators.iter().enumerate() {
        p.add_var(format!("Qg[gen{g}@{}]", gen.bus), gen.q_min, gen.q_max);
    }
    debug_assert_eq!(p.n_vars(), lay.n_vars());

    let var = Affine::var;

    // θ_ref = 0
    p.push(Constraint::eq(var(lay.theta(case.ref_index())), Affine::constant(0.0)));

    // bus balances
    let inc = case.incidence();
    for (i, bus) in case.buses.iter().enumerate() {
        let mut pe = Affine::constant(-bus.pd);
        let mut qe = Affine::constant(-bus.qd);
        for &g in case.gens_at(i) {
            pe.terms.push((lay.pg(g), 1.0));
            qe.terms.push((lay.qg(g), 1.0));
        }
        pe.terms.push((lay.w(i), -bus.g_sh));
        qe.terms.push((lay.w(i), bus.b_sh));
        for &k in &inc[i] {
            let (f, _) = case.branch_ends(k);
            if f == i {
                pe.terms.push((lay.p_from(k), -1.0));
                qe.terms.push((lay.q_from(k), -1.0));
            } else {
                pe.terms.push((lay.p_to(k), -1.0));
                qe.terms.push((lay.q_to(k), -1.0));
            }
        }
        p.push(Constraint::eq(pe, Affine::constant(0.0)));
        p.push(Constraint::eq(qe, Affine::constant(0.0)));
    }

    // squared magnitudes
    for i in 0..case.n_bus() {
        let (lo, hi) = bounds.v[i];
        p.extend(square_envelope(&var(lay.v(i)), &var(lay.w(i)), lo, hi));
    }

    for (k, br) in case.branches.iter().enumerate() {
        let (f, t) = case.branch_ends(k);
        let (g, b, tp) = (br.g, br.b, br.tap);
        let bt = b + 0.5 * br.b_sh;
        let lin = |terms: Vec<(usize, f64)>| Affine::from_terms(terms, 0.0);

        // flow definitions
        p.push(Constraint::eq(
            var(lay.p_from(k)),
            lin(vec![(lay.w(f), g / (tp * tp)), (lay.c(k), -g / tp), (lay.s(k), -b / tp)]),
        ));
        p.push(Constraint::eq(
            var(lay.q_from(k)),
            lin(vec![(lay.w(f), -bt / (tp * tp)), (lay.c(k), b / tp), (lay.s(k), -g / tp)]),
        ));
        p.push(Constraint::eq(
            var(lay.p_to(k)),
            lin(vec![(lay.w(t), g), (lay.c(k), -g / tp), (lay.s(k), b / tp)]),
        ));
        p.push(Constraint::eq(
            var(lay.q_to(k)),
            lin(vec![(lay.w(t), -bt), (lay.c(k), b / tp), (lay.s(k), g / tp)]),
        ));

        // w_lm ≈ V_l V_m
        p.extend(mccormick(&var(lay.v(f)), &var(lay.v(t)), &var(lay.wlm(k)), bounds.v[f], bounds.v[t]));

        // trigonometric envelopes on δ = θ_f − θ_t − shift
        let delta = lin(vec![(lay.theta(f), 1.0), (lay.theta(t), -1.0)]).plus(-br.shift);
        let (lo, hi) = bounds.theta[k];
        p.extend(cos_envelope(&delta, &var(lay.cos(k)), lo - br.shift, hi - br.shift)?);
        p.extend(sin_envelope(&delta, &var(lay.sin(k)), lo - br.shift, hi - br.shift)?);

        // c ≈ w_lm C, s ≈ w_lm S
        let tb = bounds.trig[k];
        p.extend(mccormick(&var(lay.wlm(k)), &var(lay.cos(k)), &var(lay.c(k)), bounds.wlm[k], (tb.c_min, tb.c_max)));
        p.extend(mccormick(&var(lay.wlm(k)), &var(lay.sin(k)), &var(lay.s(k)), bounds.wlm[k], (tb.s_min, tb.s_max)));

        // c² + s² ≤ w_ll w_mm
        p.push(Constraint::rotated(var(lay.w(f)), var(lay.w(t)), vec![var(lay.c(k)), var(lay.s(k))]));

        // angle-difference limits
        let diff = lin(vec![(lay.theta(f), 1.0), (lay.theta(t), -1.0)]);
        p.push(Constraint::le(diff.clone(), Affine::constant(hi)));
        p.push(Constraint::ge(diff, Affine::constant(lo)));

        if let Some(smax) = br.s_max {
            for (pp, qq) in [(lay.p_from(k), lay.q_from(k)), (lay.p_to(k), lay.q_to(k))] {
                p.push(Constraint::Soc { head: Affine::constant(smax), tail: vec![var(pp), var(qq)] });
            }
        }
    }

    Ok(QcRelaxation { program: p, layout: lay })
}

/// Adds epigraph variables `e_g ≥ Pg²` and returns the generation cost as an
/// affine objective over the program variables.
pub fn add_cost_epigraph(qc: &mut QcRelaxation, case: &NetworkCase) -> Affine {
    let mut obj = Affine::default();
    for (g, gen) in case.generators.iter().enumerate() {
        let pg = qc.layout.pg(g);
        let hi = gen.p_min.abs().max(gen.p_max.abs());
        let lo = if gen.p_min <= 0.0 && gen.p_max >= 0.0 { 0.0 } else { gen.p_min.abs().min(gen.p_max.abs()) };
        let e = qc.program.add_var(format!("Pg2[gen{g}]"), lo * lo, hi * hi);
        qc.program.push(Constraint::rotated(Affine::var(e), Affine::constant(1.0), vec![Affine::var(pg)]));
        obj.terms.push((e, gen.cost.c2));
        obj.terms.push((pg, gen.cost.c1));
        obj.constant += gen.cost.c0;
    }
    obj.compact()
}

/// The exact lifting of an operating point into the QC variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedVars {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub wlm: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub p_from: Vec<f64>,
    pub q_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl LiftedVars {
    /// Values in program order.
    pub fn assignment(&self) -> Vec<f64> {
        [
            &self.v, &self.w, &self.theta, &self.wlm, &self.cos, &self.sin, &self.c, &self.s, &self.p_from,
            &self.q_from, &self.p_to, &self.q_to, &self.pg, &self.qg,
        ]
        .into_iter()
        .flat_map(|x| x.iter().copied())
        .collect()
    }
}

pub fn lift_point(case: &NetworkCase, point: &OperatingPoint) -> LiftedVars {
    let nb = case.n_branch();
    let mut out = LiftedVars {
        v: point.vm.clone(),
        w: point.vm.iter().map(|v| v * v).collect(),
        theta: point.va.clone(),
        wlm: Vec::with_capacity(nb),
        cos: Vec::with_capacity(nb),
        sin: Vec::with_capacity(nb),
        c: Vec::with_capacity(nb),
        s: Vec::with_capacity(nb),
        p_from: point.flows.iter().map(|f| f.p_from).collect(),
        q_from: point.flows.iter().map(|f| f.q_from).collect(),
        p_to: point.flows.iter().map(|f| f.p_to).collect(),
        q_to: point.flows.iter().map(|f| f.q_to).collect(),
        pg: point.pg.clone(),
        qg: point.qg.clone(),
    };
    for (k, br) in case.branches.iter().enumerate() {
        let (f, t) = case.branch_ends(k);
        let wlm = point.vm[f] * point.vm[t];
        let d = point.va[f] - point.va[t] - br.shift;
        out.wlm.push(wlm);
        out.cos.push(d.cos());
        out.sin.push(d.sin());
        out.c.push(wlm * d.cos());
        out.s.push(wlm * d.sin());
    }
    out
}
