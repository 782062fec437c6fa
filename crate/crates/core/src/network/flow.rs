use serde::{Deserialize, Serialize};

use super::Branch;

/// Power entering a branch at each terminal, per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

/// Terminal flows of a Π-model branch.
///
/// With `c = V_l V_m cos(θ_l - θ_m - shift)` and `s = V_l V_m sin(...)`:
///
/// ```text
/// p_lm = g V_l^2 / t^2 - (g c + b s) / t
/// q_lm = -(b + b_sh/2) V_l^2 / t^2 + (b c - g s) / t
/// p_ml = g V_m^2 - (g c - b s) / t
/// q_ml = -(b + b_sh/2) V_m^2 + (b c + g s) / t
/// ```
///
/// For `t = 1`, `shift = 0` these are the plain line equations.
pub fn branch_flow(v_l: f64, theta_l: f64, v_m: f64, theta_m: f64, br: &Branch) -> BranchFlow {
    let t = br.tap;
    let delta = theta_l - theta_m - br.shift;
    let prod = v_l * v_m;
    let c = prod * delta.cos();
    let s = prod * delta.sin();
    let b_tot = br.b + 0.5 * br.b_sh;
    BranchFlow {
        p_from: br.g * v_l * v_l / (t * t) - (br.g * c + br.b * s) / t,
        q_from: -b_tot * v_l * v_l / (t * t) + (br.b * c - br.g * s) / t,
        p_to: br.g * v_m * v_m - (br.g * c - br.b * s) / t,
        q_to: -b_tot * v_m * v_m + (br.b * c + br.g * s) / t,
    }
}
