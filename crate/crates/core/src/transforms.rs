//! Auxiliary variables of the ratio-to-sum reformulation and their closed-form updates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{cost_components, dpe_numerators, floor, transmission_rate, Decision, NetworkInstance};

/// Multipliers, per-term DPE values, delay bounds and the υ variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxState {
    pub alpha_u: DVector<f64>,
    pub alpha_s: DMatrix<f64>,
    pub theta_u: DVector<f64>,
    pub theta_s: DMatrix<f64>,
    pub t_u: DVector<f64>,
    pub t_s: DMatrix<f64>,
    pub upsilon: DMatrix<f64>,
    /// Count of terms whose cost was zero (alpha and theta set to 0).
    pub degenerate: usize,
    /// Count of υ denominators raised to the floor.
    pub floored: usize,
}

impl AuxState {
    /// Σϑ, the value of the summation form.
    pub fn theta_sum(&self) -> f64 {
        self.theta_u.sum() + self.theta_s.sum()
    }
}

fn sync(cost: f64, num: f64, degenerate: &mut usize) -> (f64, f64) {
    if cost > 0.0 && cost.is_finite() {
        (1.0 / cost, num / cost)
    } else {
        *degenerate += 1;
        (0.0, 0.0)
    }
}

/// Closed-form KKT updates α = 1/cost, ϑ = numerator/cost, with tight delay bounds.
pub fn update_auxiliary(inst: &NetworkInstance, dec: &Decision) -> AuxState {
    let (n, m) = (inst.n_users, inst.n_servers);
    let costs = cost_components(inst, dec);
    let (nu, ns) = dpe_numerators(inst, dec);
    let mut degenerate = 0;
    let mut alpha_u = DVector::zeros(n);
    let mut theta_u = DVector::zeros(n);
    let mut alpha_s = DMatrix::zeros(n, m);
    let mut theta_s = DMatrix::zeros(n, m);
    let mut t_s = DMatrix::zeros(n, m);
    for i in 0..n {
        (alpha_u[i], theta_u[i]) = sync(costs.cost_u[i], nu[i], &mut degenerate);
        for j in 0..m {
            (alpha_s[(i, j)], theta_s[(i, j)]) = sync(costs.cost_s[(i, j)], ns[(i, j)], &mut degenerate);
            t_s[(i, j)] = costs.server_delay(i, j);
        }
    }
    let (upsilon, floored) = update_upsilon(inst, dec);
    AuxState { alpha_u, alpha_s, theta_u, theta_s, t_u: costs.t_up.clone(), t_s, upsilon, degenerate, floored }
}

/// Auxiliary state linearized as if every user were attached to every
/// server. Used by the association block: a pair with x = 0 has ϑ = 0
/// under [`update_auxiliary`], which would make attaching it worthless.
pub fn association_auxiliary(inst: &NetworkInstance, dec: &Decision) -> AuxState {
    let mut all = dec.clone();
    all.x.fill(1.0);
    update_auxiliary(inst, &all)
}

/// υ = 1/(2·x·ρ·p·φ·d·r) on attached pairs, 0 elsewhere. Returns the
/// matrix and the number of floored denominators.
pub fn update_upsilon(inst: &NetworkInstance, dec: &Decision) -> (DMatrix<f64>, usize) {
    let (n, m) = (inst.n_users, inst.n_servers);
    let mut floored = 0;
    let mut ups = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            if dec.x[(i, j)] == 0.0 {
                continue;
            }
            let bw = floor(dec.phi_bw[(i, j)], &mut floored);
            let rho = floor(dec.rho[i], &mut floored);
            let r = transmission_rate(inst, i, j, bw, rho).expect("floored share is positive");
            let chi = dec.x[(i, j)] * rho * inst.p[i] * dec.phi_off[i] * inst.d[i];
            let den = 2.0 * chi * r;
            ups[(i, j)] = if den > 0.0 {
                1.0 / den
            } else {
                floored += 1;
                1.0 / (2.0 * crate::model::EPS_FLOOR)
            };
        }
    }
    (ups, floored)
}

/// Server cost with the transmit energy written as χ²υ + 1/(4r²υ).
/// Equals the ratio-form cost when υ is at its update value.
pub fn server_cost_upsilon(inst: &NetworkInstance, dec: &Decision, i: usize, j: usize, upsilon: f64) -> f64 {
    let costs = cost_components(inst, dec);
    let bits = dec.x[(i, j)] * dec.phi_off[i] * inst.d[i];
    let delay = costs.server_delay(i, j);
    let mut energy = costs.e_sp[(i, j)] + costs.e_sg[(i, j)];
    if bits != 0.0 {
        let mut fl = 0;
        let bw = floor(dec.phi_bw[(i, j)], &mut fl);
        let rho = floor(dec.rho[i], &mut fl);
        let r = transmission_rate(inst, i, j, bw, rho).expect("floored share is positive");
        let chi = rho * inst.p[i] * bits;
        energy += chi * chi * upsilon + 1.0 / (4.0 * r * r * upsilon);
    }
    inst.omega_t * delay + inst.omega_e * energy
}

/// Multiplier-form objective Σϑ + Σα(numerator − ϑ·cost). With a
/// synchronized state the bracketed slacks vanish and this equals Σϑ.
pub fn p3_value(inst: &NetworkInstance, dec: &Decision, aux: &AuxState) -> f64 {
    let costs = cost_components(inst, dec);
    let (nu, ns) = dpe_numerators(inst, dec);
    let mut v = aux.theta_sum();
    for i in 0..inst.n_users {
        v += aux.alpha_u[i] * (nu[i] - aux.theta_u[i] * costs.cost_u[i]);
        for j in 0..inst.n_servers {
            v += aux.alpha_s[(i, j)] * (ns[(i, j)] - aux.theta_s[(i, j)] * costs.cost_s[(i, j)]);
        }
    }
    v
}
