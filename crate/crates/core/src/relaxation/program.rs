use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// `constant + Σ coef · x[index]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(i: usize) -> Self {
        Self { terms: vec![(i, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn from_terms(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    /// `self + s · other`
    pub fn add(&self, other: &Affine, s: f64) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
        Self { terms, constant: self.constant + s * other.constant }
    }

    pub fn plus(&self, c: f64) -> Self {
        Self { terms: self.terms.clone(), constant: self.constant + c }
    }

    /// Merges repeated indices and drops exact zeros.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self { terms: out, constant: self.constant }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// expression = 0
    Eq,
    /// expression ≤ 0
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Linear { expr: Affine, sense: Sense },
    /// `head ≥ ‖tail‖₂`
    Soc { head: Affine, tail: Vec<Affine> },
}

impl Constraint {
    pub fn le(lhs: Affine, rhs: Affine) -> Self {
        Constraint::Linear { expr: lhs.add(&rhs, -1.0).compact(), sense: Sense::Le }
    }

    pub fn ge(lhs: Affine, rhs: Affine) -> Self {
        Self::le(rhs, lhs)
    }

    pub fn eq(lhs: Affine, rhs: Affine) -> Self {
        Constraint::Linear { expr: lhs.add(&rhs, -1.0).compact(), sense: Sense::Eq }
    }

    /// `u · v ≥ ‖x‖²` with `u, v ≥ 0`, as `‖(2x, u − v)‖ ≤ u + v`.
    pub fn rotated(u: Affine, v: Affine, xs: Vec<Affine>) -> Self {
        let mut tail: Vec<Affine> = xs.into_iter().map(|x| x.scaled(2.0)).collect();
        tail.push(u.add(&v, -1.0).compact());
        Constraint::Soc { head: u.add(&v, 1.0).compact(), tail }
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Linear { expr, sense: Sense::Eq } => expr.eval(x).abs(),
            Constraint::Linear { expr, sense: Sense::Le } => expr.eval(x).max(0.0),
            Constraint::Soc { head, tail } => {
                let norm = tail.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
                (norm - head.eval(x)).max(0.0)
            }
        }
    }

    pub fn is_soc(&self) -> bool {
        matches!(self, Constraint::Soc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarInfo {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// A conic program: box-bounded variables, linear rows and second-order
/// cones. The objective is supplied at solve time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub vars: Vec<VarInfo>,
    pub constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.vars.push(VarInfo { name: name.into(), lower, upper });
        self.vars.len() - 1
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn extend(&mut self, cs: impl IntoIterator<Item = Constraint>) {
        self.constraints.extend(cs);
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_soc(&self) -> usize {
        self.constraints.iter().filter(|c| c.is_soc()).count()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Largest violation over constraints and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, xi)| (v.lower - xi).max(xi - v.upper).max(0.0));
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .chain(bounds)
            .fold(0.0, f64::max)
    }

    /// Index and magnitude of every constraint or bound violated by more than `tol`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (k, c) in self.constraints.iter().enumerate() {
            let v = c.violation(x);
            if v > tol {
                out.push((format!("constraint {k}"), v));
            }
        }
        for (v, xi) in self.vars.iter().zip(x) {
            let m = (v.lower - xi).max(xi - v.upper);
            if m > tol {
                out.push((format!("bound {}", v.name), m));
            }
        }
        out
    }

    /// Lowers to `min qᵀx  s.t.  A x + s = b,  s ∈ K` with cones ordered
    /// zero, nonnegative (constraints then variable bounds), second-order.
    pub fn to_standard_form(&self, objective: Option<&Affine>) -> StandardForm {
        let n = self.n_vars();
        let mut rows = TripletRows::default();
        let mut cones = Vec::new();

        let mut eq_count = 0;
        for c in &self.constraints {
            if let Constraint::Linear { expr, sense: Sense::Eq } = c {
                rows.push_le(expr);
                eq_count += 1;
            }
        }
        if eq_count > 0 {
            cones.push(ConeSpec::Zero(eq_count));
        }

        let mut nn = 0;
        for c in &self.constraints {
            if let Constraint::Linear { expr, sense: Sense::Le } = c {
                rows.push_le(expr);
                nn += 1;
            }
        }
        for (i, v) in self.vars.iter().enumerate() {
            if v.upper.is_finite() {
                rows.push_le(&Affine::from_terms(vec![(i, 1.0)], -v.upper));
                nn += 1;
            }
            if v.lower.is_finite() {
                rows.push_le(&Affine::from_terms(vec![(i, -1.0)], v.lower));
                nn += 1;
            }
        }
        if nn > 0 {
            cones.push(ConeSpec::Nonneg(nn));
        }

        for c in &self.constraints {
            if let Constraint::Soc { head, tail } = c {
                // s = expr  ⇔  −a·x + s = constant
                rows.push_expr(head);
                for t in tail {
                    rows.push_expr(t);
                }
                cones.push(ConeSpec::Soc(1 + tail.len()));
            }
        }

        let mut q = vec![0.0; n];
        let mut q0 = 0.0;
        if let Some(obj) = objective {
            for &(i, c) in &obj.terms {
                q[i] += c;
            }
            q0 = obj.constant;
        }
        StandardForm {
            n,
            m: rows.b.len(),
            q,
            q0,
            a_rows: rows.i,
            a_cols: rows.j,
            a_vals: rows.v,
            b: rows.b,
            cones,
            lower: self.vars.iter().map(|v| v.lower).collect(),
            upper: self.vars.iter().map(|v| v.upper).collect(),
        }
    }
}

#[derive(Default)]
struct TripletRows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl TripletRows {
    /// `expr ≤ 0` (or `= 0`): row `a`, right side `−constant`.
    fn push_le(&mut self, expr: &Affine) {
        let r = self.b.len();
        for &(j, c) in &expr.terms {
            self.i.push(r);
            self.j.push(j);
            self.v.push(c);
        }
        self.b.push(-expr.constant);
    }

    /// Slack equal to `expr`: row `−a`, right side `constant`.
    fn push_expr(&mut self, expr: &Affine) {
        let r = self.b.len();
        for &(j, c) in &expr.terms {
            self.i.push(r);
            self.j.push(j);
            self.v.push(-c);
        }
        self.b.push(expr.constant);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeSpec {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ConeSpec::Zero(d) | ConeSpec::Nonneg(d) | ConeSpec::Soc(d) => d,
        }
    }
}

/// `min qᵀx + q0  s.t.  A x + s = b,  s ∈ K`. `A` is stored as triplets
/// (duplicates add up). `lower`/`upper` repeat the variable box, which is
/// also present as rows of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub n: usize,
    pub m: usize,
    pub q: Vec<f64>,
    pub q0: f64,
    pub a_rows: Vec<usize>,
    pub a_cols: Vec<usize>,
    pub a_vals: Vec<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeSpec>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StandardForm {
    /// `Aᵀ z` together with `Σ |A_ij z_i|` per column (used for rounding allowances).
    pub fn at_times(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0; self.n];
        let mut abs = vec![0.0; self.n];
        for ((&i, &j), &v) in self.a_rows.iter().zip(&self.a_cols).zip(&self.a_vals) {
            r[j] += v * z[i];
            abs[j] += (v * z[i]).abs();
        }
        (r, abs)
    }

    /// Writes the problem in the Conic Benchmark Format (version 3).
    ///
    /// CBF states constraints as `A' x + b' ∈ K`; since `s = b − A x`, rows
    /// are emitted as `A' = −A`, `b' = b`. Cones map to `L=`, `L+` and `Q`.
    pub fn to_cbf(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "VER\n3\n\nOBJSENSE\nMIN\n\nVAR\n{} 1\nF {}\n", self.n, self.n);
        let _ = writeln!(out, "CON\n{} {}", self.m, self.cones.len());
        for c in &self.cones {
            let tag = match c {
                ConeSpec::Zero(_) => "L=",
                ConeSpec::Nonneg(_) => "L+",
                ConeSpec::Soc(_) => "Q",
            };
            let _ = writeln!(out, "{tag} {}", c.dim());
        }
        let obj: Vec<(usize, f64)> = self.q.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        if !obj.is_empty() {
            let _ = writeln!(out, "\nOBJACOORD\n{}", obj.len());
            for (j, v) in obj {
                let _ = writeln!(out, "{j} {v:?}");
            }
        }
        if self.q0 != 0.0 {
            let _ = writeln!(out, "\nOBJBCOORD\n{:?}", self.q0);
        }
        let _ = writeln!(out, "\nACOORD\n{}", self.a_vals.len());
        for ((i, j), v) in self.a_rows.iter().zip(&self.a_cols).zip(&self.a_vals) {
            let _ = writeln!(out, "{i} {j} {:?}", -v);
        }
        let nz: Vec<(usize, f64)> = self.b.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        let _ = writeln!(out, "\nBCOORD\n{}", nz.len());
        for (i, v) in nz {
            let _ = writeln!(out, "{i} {v:?}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_cone_matches_product_form() {
        // u v ≥ x²  at u = 2, v = 3, x = 2.4 (slack 1.24) and x = 2.5 (violated)
        let c = Constraint::rotated(Affine::var(0), Affine::var(1), vec![Affine::var(2)]);
        assert_eq!(c.violation(&[2.0, 3.0, 2.4]), 0.0);
        assert!(c.violation(&[2.0, 3.0, 2.5]) > 0.0);
        assert_eq!(c.violation(&[6.0, 6.0, 6.0]), 0.0);
    }

    #[test]
    fn standard_form_layout() {
        let mut p = ConicProgram::default();
        let x = p.add_var("x", 0.0, 1.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        p.push(Constraint::eq(Affine::var(x), Affine::var(y)));
        p.push(Constraint::Soc { head: Affine::constant(1.0), tail: vec![Affine::var(x), Affine::var(y)] });
        let sf = p.to_standard_form(Some(&Affine::var(x)));
        assert_eq!(sf.cones, vec![ConeSpec::Zero(1), ConeSpec::Nonneg(2), ConeSpec::Soc(3)]);
        assert_eq!(sf.m, 6);
        assert_eq!(sf.q, vec![1.0, 0.0]);
        let cbf = sf.to_cbf();
        assert!(cbf.starts_with("VER\n3\n"));
        assert!(cbf.contains("CON\n6 3\nL= 1\nL+ 2\nQ 3\n"));
    }

    #[test]
    fn compact_merges_terms() {
        let a = Affine::from_terms(vec![(2, 1.0), (0, 1.0), (2, -1.0), (0, 2.0)], 0.5).compact();
        assert_eq!(a.terms, vec![(0, 3.0)]);
    }
}
