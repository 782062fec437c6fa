//! Convex envelopes of `x²`, `xy`, `sin θ` and `cos θ` over boxes, emitted as
//! constraints on affine expressions.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::program::{Affine, Constraint};
use super::RelaxationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigBounds {
    pub s_min: f64,
    pub s_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

fn check_range(lo: f64, hi: f64) -> Result<(), RelaxationError> {
    if lo > -FRAC_PI_2 && hi < FRAC_PI_2 && lo <= hi {
        Ok(())
    } else {
        Err(RelaxationError::BoundsOutOfRange { lo, hi })
    }
}

/// Bounds of `sin` and `cos` over `[lo, hi] ⊂ (−π/2, π/2)`.
pub fn trig_bounds(lo: f64, hi: f64) -> Result<TrigBounds, RelaxationError> {
    check_range(lo, hi)?;
    let (cl, ch) = (lo.cos(), hi.cos());
    // sign(0) counts as its own sign, so [0, x] keeps c_max = cos 0 = 1 either way
    let same_sign = (lo > 0.0 && hi > 0.0) || (lo < 0.0 && hi < 0.0);
    Ok(TrigBounds {
        s_min: lo.sin(),
        s_max: hi.sin(),
        c_min: cl.min(ch),
        c_max: if same_sign { cl.max(ch) } else { 1.0 },
    })
}

/// `w ≥ x²` (as a 3-dimensional cone) and the secant `w ≤ (hi+lo) x − hi·lo`.
pub fn square_envelope(x: &Affine, w: &Affine, lo: f64, hi: f64) -> Vec<Constraint> {
    vec![
        Constraint::rotated(w.clone(), Affine::constant(1.0), vec![x.clone()]),
        Constraint::le(w.clone(), x.scaled(hi + lo).plus(-hi * lo)),
    ]
}

/// The four McCormick inequalities for `z ≈ x y` over `[xl, xu] × [yl, yu]`.
pub fn mccormick(x: &Affine, y: &Affine, z: &Affine, (xl, xu): (f64, f64), (yl, yu): (f64, f64)) -> Vec<Constraint> {
    let plane = |a: f64, b: f64| y.scaled(a).add(x, b).plus(-a * b);
    vec![
        Constraint::ge(z.clone(), plane(xl, yl)),
        Constraint::ge(z.clone(), plane(xu, yu)),
        Constraint::le(z.clone(), plane(xl, yu)),
        Constraint::le(z.clone(), plane(xu, yl)),
    ]
}

/// Tangent cuts at `±x^m/2` plus the secant on the side where `sin` is
/// concave or convex throughout `[lo, hi]`.
pub fn sin_envelope(theta: &Affine, s: &Affine, lo: f64, hi: f64) -> Result<Vec<Constraint>, RelaxationError> {
    check_range(lo, hi)?;
    let xm = lo.abs().max(hi.abs());
    let (ch, sh) = ((xm / 2.0).cos(), (xm / 2.0).sin());
    let mut out = vec![
        Constraint::le(s.clone(), theta.scaled(ch).plus(-ch * xm / 2.0 + sh)),
        Constraint::ge(s.clone(), theta.scaled(ch).plus(ch * xm / 2.0 - sh)),
    ];
    let secant = || {
        let slope = if hi > lo { (lo.sin() - hi.sin()) / (lo - hi) } else { lo.cos() };
        theta.scaled(slope).plus(lo.sin() - slope * lo)
    };
    if lo >= 0.0 {
        out.push(Constraint::ge(s.clone(), secant()));
    }
    if hi <= 0.0 {
        out.push(Constraint::le(s.clone(), secant()));
    }
    Ok(out)
}

/// `C ≤ 1 − k θ²` with `k = (1 − cos x^m)/(x^m)²` (as a rotated cone
/// `(1 − C)/k ≥ θ²`) and the secant lower cut.
pub fn cos_envelope(theta: &Affine, c: &Affine, lo: f64, hi: f64) -> Result<Vec<Constraint>, RelaxationError> {
    check_range(lo, hi)?;
    let xm = lo.abs().max(hi.abs());
    let mut out = Vec::new();
    if xm == 0.0 {
        out.push(Constraint::le(c.clone(), Affine::constant(1.0)));
    } else {
        let k = (1.0 - xm.cos()) / (xm * xm);
        out.push(Constraint::rotated(
            c.scaled(-1.0).plus(1.0),
            Affine::constant(1.0 / k),
            vec![theta.clone()],
        ));
    }
    if hi > lo {
        let slope = (lo.cos() - hi.cos()) / (lo - hi);
        out.push(Constraint::ge(c.clone(), theta.scaled(slope).plus(lo.cos() - slope * lo)));
    } else {
        out.push(Constraint::ge(c.clone(), Affine::constant(lo.cos())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    /// Feasible interval of variable 1 given variable 0 fixed, found by bisection
    /// on the constraint violations.
    fn range_of_second(cs: &[Constraint], x0: f64, lo: f64, hi: f64) -> (f64, f64) {
        let ok = |y: f64| cs.iter().all(|c| c.violation(&[x0, y]) <= 1e-13);
        let grid: Vec<f64> = (0..=20000).map(|k| lo + (hi - lo) * k as f64 / 20000.0).collect();
        let feas: Vec<f64> = grid.into_iter().filter(|&y| ok(y)).collect();
        (feas[0], *feas.last().unwrap())
    }

    #[test]
    fn trig_bounds_rules() {
        let t = trig_bounds(deg(-30.0), deg(30.0)).unwrap();
        assert_abs_diff_eq!(t.s_min, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.s_max, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.c_min, deg(30.0).cos(), epsilon = 1e-15);
        assert_eq!(t.c_max, 1.0);

        let t = trig_bounds(deg(10.0), deg(30.0)).unwrap();
        assert_abs_diff_eq!(t.c_max, deg(10.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.c_min, deg(30.0).cos(), epsilon = 1e-15);

        let t = trig_bounds(0.0, 0.0).unwrap();
        assert_eq!((t.s_min, t.s_max, t.c_min, t.c_max), (0.0, 0.0, 1.0, 1.0));

        assert!(trig_bounds(deg(-95.0), 0.0).is_err());
    }

    #[test]
    fn square_envelope_values() {
        let cs = square_envelope(&Affine::var(0), &Affine::var(1), 0.9, 1.1);
        let (lo, hi) = range_of_second(&cs, 0.9, 0.5, 1.5);
        assert_abs_diff_eq!(lo, 0.81, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 0.81, epsilon = 1e-4);
        let (lo, hi) = range_of_second(&cs, 1.0, 0.5, 1.5);
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 1.01, epsilon = 1e-4);
        // the secant is exact at both ends
        assert_abs_diff_eq!(cs[1].violation(&[0.9, 0.81]), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cs[1].violation(&[1.1, 1.21]), 0.0, epsilon = 1e-12);

        let cs = square_envelope(&Affine::var(0), &Affine::var(1), -1.0, 1.0);
        let (lo, hi) = range_of_second(&cs, 0.0, -0.5, 1.5);
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn mccormick_values() {
        let z = |x: f64, y: f64, zv: f64| {
            mccormick(&Affine::var(0), &Affine::var(1), &Affine::var(2), (0.0, 1.0), (0.0, 1.0))
                .iter()
                .map(|c| c.violation(&[x, y, zv]))
                .fold(0.0, f64::max)
        };
        assert_eq!(z(1.0, 1.0, 1.0), 0.0);
        assert!(z(1.0, 1.0, 0.999) > 0.0);
        assert_eq!(z(0.5, 0.5, 0.0), 0.0);
        assert_eq!(z(0.5, 0.5, 0.5), 0.0);
        assert!(z(0.5, 0.5, 0.501) > 0.0);
        assert!(z(0.5, 0.5, -0.001) > 0.0);
    }

    #[test]
    fn mccormick_with_fixed_factor() {
        let cs = mccormick(&Affine::var(0), &Affine::var(1), &Affine::var(2), (0.7, 0.7), (-1.0, 2.0));
        for y in [-1.0, 0.3, 2.0] {
            let ok = |zv: f64| cs.iter().all(|c| c.violation(&[0.7, y, zv]) <= 1e-12);
            assert!(ok(0.7 * y));
            assert!(!ok(0.7 * y + 1e-6));
            assert!(!ok(0.7 * y - 1e-6));
        }
    }

    #[test]
    fn sin_envelope_values() {
        let cs = sin_envelope(&Affine::var(0), &Affine::var(1), deg(-60.0), deg(60.0)).unwrap();
        assert_eq!(cs.len(), 2);
        let (lo, hi) = range_of_second(&cs, 0.0, -0.1, 0.1);
        assert_abs_diff_eq!(hi, 0.0466, epsilon = 1e-4);
        assert_abs_diff_eq!(lo, -0.0466, epsilon = 1e-4);
        // at the upper end the tangent at x^m/2 sits above sin(60°)
        let x = deg(60.0);
        let tangent = (x / 2.0).cos() * (x - x / 2.0) + (x / 2.0).sin();
        assert!(tangent >= x.sin() - 1e-12);
        assert_eq!(cs[0].violation(&[x, x.sin()]), 0.0);
        // tight where it touches, at x^m/2
        assert!(cs[0].violation(&[x / 2.0, (x / 2.0).sin()]) <= 1e-12);
        assert!(cs[0].violation(&[x / 2.0, (x / 2.0).sin() + 1e-9]) > 0.0);

        let pos = sin_envelope(&Affine::var(0), &Affine::var(1), deg(10.0), deg(40.0)).unwrap();
        assert_eq!(pos.len(), 3);
        let neg = sin_envelope(&Affine::var(0), &Affine::var(1), deg(-40.0), deg(-10.0)).unwrap();
        assert_eq!(neg.len(), 3);
    }

    #[test]
    fn cos_envelope_values() {
        let cs = cos_envelope(&Affine::var(0), &Affine::var(1), deg(-60.0), deg(60.0)).unwrap();
        let (lo, hi) = range_of_second(&cs, 0.0, 0.0, 1.5);
        assert_abs_diff_eq!(lo, 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-4);
        // the secant meets cos at the upper end
        let x = deg(60.0);
        assert_abs_diff_eq!(cs[1].violation(&[x, x.cos()]), 0.0, epsilon = 1e-12);
        assert!(cs[1].violation(&[x, x.cos() - 1e-9]) > 0.0);

        let flat = cos_envelope(&Affine::var(0), &Affine::var(1), 0.0, 0.0).unwrap();
        assert_eq!(flat[0].violation(&[0.0, 1.0]), 0.0);
        assert!(flat[0].violation(&[0.0, 1.0 + 1e-9]) > 0.0);
    }
}
