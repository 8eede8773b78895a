//! Resource allocation with association, offload ratio and γ fixed.
//!
//! With α, ϑ and υ frozen the objective is concave in (ψ, ρ, φ_bw, ζ) and
//! separates into one problem per user (ψ) and one per server (ρ, φ_bw, ζ
//! of its attached users). Delay bounds are kept tight and eliminated.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cost_components, dpe_numerators, verification_delay, Decision, NetworkInstance};
use crate::solver::{solve_concave, ConcaveObjective, ConcaveOptions, ConvexStatus, LinearConstraints};
use crate::transforms::{server_cost_upsilon, update_upsilon, AuxState};

const LN2: f64 = std::f64::consts::LN_2;

/// Distance kept from every bound at the start of a solve.
pub const INTERIOR_MARGIN: f64 = 1e-6;

/// Local-computation cost of one user as a function of ψ.
#[derive(Debug, Clone)]
pub struct UserTerm {
    pub n: usize,
    /// α·ϑ of the user term.
    pub weight: f64,
    /// ω_t·L/f with L = (1−φ)·d·η.
    pub delay_coef: f64,
    /// ω_e·κ·L·f².
    pub energy_coef: f64,
}

impl UserTerm {
    fn cost(&self, psi: f64) -> f64 {
        self.delay_coef / psi + self.energy_coef * psi * psi
    }
}

/// One attached (user, server) pair in υ-form.
#[derive(Debug, Clone)]
pub struct PairTerm {
    pub n: usize,
    /// α·ϑ of the pair term.
    pub weight: f64,
    pub omega_t: f64,
    pub omega_e: f64,
    /// Offloaded bits x·φ·d.
    pub bits: f64,
    /// Server bandwidth, Hz.
    pub b: f64,
    /// g·p/σ².
    pub q: f64,
    /// (p·bits)²·υ.
    pub chi2_ups: f64,
    pub upsilon: f64,
    /// Processing-plus-generation delay numerator: bits·(η_s/γ + ω_b·η_gen/(1−γ))/f_s.
    pub compute_delay: f64,
    /// κ·bits·f_s²·(η_s·γ² + ω_b·η_gen·(1−γ)²).
    pub compute_energy: f64,
    /// T_bp + T_sv, constant here.
    pub fixed_delay: f64,
}

fn rate(q: f64, rho: f64, s: f64) -> f64 {
    s * (q * rho / s).ln_1p() / LN2
}

impl PairTerm {
    /// υ-form cost for (ρ, φ_bw, ζ).
    pub fn cost(&self, rho: f64, w: f64, z: f64) -> f64 {
        let r = rate(self.q, rho, w * self.b);
        self.omega_t * (self.bits / r + self.compute_delay / z + self.fixed_delay)
            + self.omega_e * (self.chi2_ups * rho * rho + 1.0 / (4.0 * r * r * self.upsilon) + self.compute_energy * z * z)
    }

    /// Gradient and Hessian of the cost in (ρ, w, z).
    fn derivatives(&self, rho: f64, w: f64, z: f64) -> ([f64; 3], [[f64; 3]; 3]) {
        let s = w * self.b;
        let u = self.q * rho / s;
        let r = rate(self.q, rho, s);
        let r_rho = self.q / (LN2 * (1.0 + u));
        let r_s = ((1.0 + u).ln() - u / (1.0 + u)) / LN2;
        let den = s * LN2 * (1.0 + u) * (1.0 + u);
        let r_rr = -self.q * self.q / den;
        let r_rs = self.q * u / den;
        let r_ss = -u * u / den;
        let (r_w, r_rw, r_ww) = (self.b * r_s, self.b * r_rs, self.b * self.b * r_ss);

        let (wt, we, ups) = (self.omega_t, self.omega_e, self.upsilon);
        let d1 = -wt * self.bits / (r * r) - we / (2.0 * ups * r * r * r);
        let d2 = 2.0 * wt * self.bits / (r * r * r) + 3.0 * we / (2.0 * ups * r.powi(4));

        let g = [
            d1 * r_rho + we * 2.0 * self.chi2_ups * rho,
            d1 * r_w,
            -wt * self.compute_delay / (z * z) + we * 2.0 * self.compute_energy * z,
        ];
        let h_rr = d2 * r_rho * r_rho + d1 * r_rr + we * 2.0 * self.chi2_ups;
        let h_rw = d2 * r_rho * r_w + d1 * r_rw;
        let h_ww = d2 * r_w * r_w + d1 * r_ww;
        let h_zz = 2.0 * wt * self.compute_delay / (z * z * z) + 2.0 * we * self.compute_energy;
        (g, [[h_rr, h_rw, 0.0], [h_rw, h_ww, 0.0], [0.0, 0.0, h_zz]])
    }
}

/// Resource subproblem of one server. Variables are laid out as
/// (ρ_k, w_k, z_k) for each attached active user k.
#[derive(Debug, Clone)]
pub struct ServerProblem {
    pub m: usize,
    pub pairs: Vec<PairTerm>,
    /// Budget left after the shares of attached users that are not optimized.
    pub bw_budget: f64,
    pub cpu_budget: f64,
}

impl ConcaveObjective for ServerProblem {
    fn dim(&self) -> usize {
        3 * self.pairs.len()
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        let mut v = 0.0;
        for (k, p) in self.pairs.iter().enumerate() {
            let (rho, w, z) = (y[3 * k], y[3 * k + 1], y[3 * k + 2]);
            if !(rho > 0.0 && w > 0.0 && z > 0.0) {
                return f64::NAN;
            }
            v -= p.weight * p.cost(rho, w, z);
        }
        v
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for (k, p) in self.pairs.iter().enumerate() {
            let (gk, _) = p.derivatives(y[3 * k], y[3 * k + 1], y[3 * k + 2]);
            for a in 0..3 {
                g[3 * k + a] = -p.weight * gk[a];
            }
        }
        g
    }

    fn hessian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for (k, p) in self.pairs.iter().enumerate() {
            let (_, hk) = p.derivatives(y[3 * k], y[3 * k + 1], y[3 * k + 2]);
            for a in 0..3 {
                for b in 0..3 {
                    h[(3 * k + a, 3 * k + b)] = -p.weight * hk[a][b];
                }
            }
        }
        h
    }
}

struct UserProblem<'a>(&'a UserTerm);

impl ConcaveObjective for UserProblem<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, y: &DVector<f64>) -> f64 {
        if y[0] > 0.0 {
            -self.0.weight * self.0.cost(y[0])
        } else {
            f64::NAN
        }
    }
    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        let t = self.0;
        DVector::from_element(1, -t.weight * (-t.delay_coef / (y[0] * y[0]) + 2.0 * t.energy_coef * y[0]))
    }
    fn hessian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let t = self.0;
        DMatrix::from_element(1, 1, -t.weight * (2.0 * t.delay_coef / y[0].powi(3) + 2.0 * t.energy_coef))
    }
}

/// The assembled resource problem for one frozen (α, ϑ, υ).
#[derive(Debug, Clone)]
pub struct P5Problem {
    pub users: Vec<UserTerm>,
    pub servers: Vec<ServerProblem>,
    pub upsilon: DMatrix<f64>,
}

/// Builds the resource problem at `dec` with the frozen auxiliary state.
/// `aux.upsilon` must match `update_upsilon(dec)`.
pub fn build_p5(inst: &NetworkInstance, dec: &Decision, aux: &AuxState) -> Result<P5Problem> {
    let (n, m) = (inst.n_users, inst.n_servers);
    check_discrete(dec)?;
    let (fresh, _) = update_upsilon(inst, dec);
    if aux.upsilon.shape() != (n, m) {
        return Err(Error::Dimension("upsilon".into()));
    }
    for (a, b) in aux.upsilon.iter().zip(fresh.iter()) {
        if (a - b).abs() > 1e-9 * b.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Contract("upsilon not synchronized with the decision".into()));
        }
    }
    Ok(assemble(inst, dec, aux, &aux.upsilon))
}

fn check_discrete(dec: &Decision) -> Result<()> {
    let (n, m) = dec.x.shape();
    for i in 0..n {
        let row: Vec<f64> = (0..m).map(|j| dec.x[(i, j)]).collect();
        if row.iter().any(|&v| v != 0.0 && v != 1.0) || row.iter().sum::<f64>() != 1.0 {
            return Err(Error::Contract(format!("x row {i} is not one-hot")));
        }
    }
    Ok(())
}

fn assemble(inst: &NetworkInstance, dec: &Decision, aux: &AuxState, upsilon: &DMatrix<f64>) -> P5Problem {
    let (n, m) = (inst.n_users, inst.n_servers);
    let mut users = Vec::new();
    for i in 0..n {
        let weight = aux.alpha_u[i] * aux.theta_u[i];
        let load = (1.0 - dec.phi_off[i]) * inst.d[i] * inst.eta_u[i];
        if weight > 0.0 && load > 0.0 {
            users.push(UserTerm {
                n: i,
                weight,
                delay_coef: inst.omega_t * load / inst.f_u[i],
                energy_coef: inst.omega_e * inst.kappa_u[i] * load * inst.f_u[i] * inst.f_u[i],
            });
        }
    }
    let mut servers = Vec::new();
    for j in 0..m {
        let mut pairs = Vec::new();
        let (mut bw_budget, mut cpu_budget) = (1.0, 1.0);
        for i in 0..n {
            if dec.x[(i, j)] != 1.0 {
                continue;
            }
            let weight = aux.alpha_s[(i, j)] * aux.theta_s[(i, j)];
            let bits = dec.phi_off[i] * inst.d[i];
            if !(weight > 0.0 && bits > 0.0) {
                bw_budget -= dec.phi_bw[(i, j)];
                cpu_budget -= dec.zeta[(i, j)];
                continue;
            }
            let g = dec.gamma[(i, j)];
            let mut fl = 0;
            pairs.push(PairTerm {
                n: i,
                weight,
                omega_t: inst.omega_t,
                omega_e: inst.omega_e,
                bits,
                b: inst.b[j],
                q: inst.gain[(i, j)] * inst.p[i] / inst.sigma2,
                chi2_ups: (inst.p[i] * bits).powi(2) * upsilon[(i, j)],
                upsilon: upsilon[(i, j)],
                compute_delay: bits * (inst.eta_s[j] / g + inst.omega_b * inst.eta_gen[j] / (1.0 - g)) / inst.f_s[j],
                compute_energy: inst.kappa_s[j]
                    * bits
                    * inst.f_s[j].powi(2)
                    * (inst.eta_s[j] * g * g + inst.omega_b * inst.eta_gen[j] * (1.0 - g).powi(2)),
                fixed_delay: inst.s_b / inst.r_wired[j] + verification_delay(inst, dec, i, j, &mut fl),
            });
        }
        servers.push(ServerProblem { m: j, pairs, bw_budget, cpu_budget });
    }
    P5Problem { users, servers, upsilon: upsilon.clone() }
}

/// Resource-block objective Σα(numerator − ϑ·cost) with the server costs
/// in υ-form under the given υ.
pub fn p5_value(inst: &NetworkInstance, dec: &Decision, aux: &AuxState, upsilon: &DMatrix<f64>) -> f64 {
    let costs = cost_components(inst, dec);
    let (nu, ns) = dpe_numerators(inst, dec);
    let mut v = 0.0;
    for i in 0..inst.n_users {
        v += aux.alpha_u[i] * (nu[i] - aux.theta_u[i] * costs.cost_u[i]);
        for j in 0..inst.n_servers {
            let w = aux.alpha_s[(i, j)] * aux.theta_s[(i, j)];
            if w == 0.0 {
                continue;
            }
            let cost = if dec.x[(i, j)] * dec.phi_off[i] > 0.0 {
                server_cost_upsilon(inst, dec, i, j, upsilon[(i, j)])
            } else {
                costs.cost_s[(i, j)]
            };
            v += aux.alpha_s[(i, j)] * ns[(i, j)] - w * cost;
        }
    }
    v
}

/// Same objective with ratio-form server costs.
pub fn p4_value(inst: &NetworkInstance, dec: &Decision, aux: &AuxState) -> f64 {
    let costs = cost_components(inst, dec);
    let (nu, ns) = dpe_numerators(inst, dec);
    let mut v = 0.0;
    for i in 0..inst.n_users {
        v += aux.alpha_u[i] * (nu[i] - aux.theta_u[i] * costs.cost_u[i]);
        for j in 0..inst.n_servers {
            v += aux.alpha_s[(i, j)] * (ns[(i, j)] - aux.theta_s[(i, j)] * costs.cost_s[(i, j)]);
        }
    }
    v
}

/// Pulls every optimized quantity at least `margin` inside its bounds.
pub fn project_interior(dec: &Decision, margin: f64) -> Decision {
    let mut out = dec.clone();
    let (n, m) = dec.x.shape();
    let clamp = |v: f64| v.clamp(margin, 1.0 - margin);
    for i in 0..n {
        out.psi[i] = clamp(out.psi[i]);
        out.rho[i] = clamp(out.rho[i]);
        for j in 0..m {
            out.phi_bw[(i, j)] = clamp(out.phi_bw[(i, j)]);
            out.zeta[(i, j)] = clamp(out.zeta[(i, j)]);
        }
    }
    for j in 0..m {
        for share in [&mut out.phi_bw, &mut out.zeta] {
            let used: f64 = (0..n).filter(|&i| dec.x[(i, j)] == 1.0).map(|i| share[(i, j)]).sum();
            if used > 1.0 - margin {
                let s = (1.0 - 2.0 * margin) / used;
                for i in 0..n {
                    if dec.x[(i, j)] == 1.0 {
                        share[(i, j)] *= s;
                    }
                }
            }
        }
    }
    out
}

/// Solves every subproblem once from `dec`; returns the new decision and a
/// merged status.
pub fn solve_p5(problem: &P5Problem, dec: &Decision, opts: &ConcaveOptions) -> Result<(Decision, ConvexStatus)> {
    let mut out = dec.clone();
    let mut status = ConvexStatus { converged: true, iterations: 0, kkt_residual: 0.0, objective: 0.0 };
    let mut merge = |st: &ConvexStatus| {
        status.converged &= st.converged;
        status.iterations += st.iterations;
        status.kkt_residual = status.kkt_residual.max(st.kkt_residual);
        status.objective += st.objective;
    };
    for u in &problem.users {
        let cons = LinearConstraints::boxed(DVector::from_element(1, 0.0), DVector::from_element(1, 1.0));
        let start = DVector::from_element(1, dec.psi[u.n]);
        let (y, st) = solve_concave(&UserProblem(u), &cons, &start, opts)?;
        out.psi[u.n] = y[0];
        merge(&st);
    }
    for sp in &problem.servers {
        let k = sp.pairs.len();
        if k == 0 {
            continue;
        }
        let dim = 3 * k;
        let mut a = DMatrix::zeros(2, dim);
        for p in 0..k {
            a[(0, 3 * p + 1)] = 1.0;
            a[(1, 3 * p + 2)] = 1.0;
        }
        let cons = LinearConstraints {
            lower: DVector::zeros(dim),
            upper: DVector::from_element(dim, 1.0),
            a,
            b: DVector::from_vec(vec![sp.bw_budget, sp.cpu_budget]),
        };
        let start = DVector::from_fn(dim, |r, _| {
            let p = &sp.pairs[r / 3];
            match r % 3 {
                0 => dec.rho[p.n],
                1 => dec.phi_bw[(p.n, sp.m)],
                _ => dec.zeta[(p.n, sp.m)],
            }
        });
        let (y, st) = solve_concave(sp, &cons, &start, opts)?;
        for (p, pair) in sp.pairs.iter().enumerate() {
            out.rho[pair.n] = y[3 * p];
            out.phi_bw[(pair.n, sp.m)] = y[3 * p + 1];
            out.zeta[(pair.n, sp.m)] = y[3 * p + 2];
        }
        merge(&st);
    }
    Ok((out, status))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FpRound {
    pub round: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpTrace {
    /// Round 0 is the start point.
    pub rounds: Vec<FpRound>,
    pub converged: bool,
    /// Change of υ in the last round, relative ∞-norm.
    pub upsilon_change: f64,
}

impl FpTrace {
    /// Alternation rounds actually performed.
    pub fn round_count(&self) -> usize {
        self.rounds.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,objective,kkt_residual\n");
        for r in &self.rounds {
            let _ = writeln!(s, "{},{},{}", r.round, r.objective, r.kkt_residual);
        }
        s
    }
}

fn relative_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&x, &y)| ((x - y) / y).abs())
        .fold(0.0, f64::max)
}

/// Alternates concave solves with υ updates until the objective's relative
/// change is at most `eps1`. α and ϑ stay frozen at `aux`.
pub fn fp_solve(
    inst: &NetworkInstance,
    dec: &Decision,
    aux: &AuxState,
    eps1: f64,
    max_rounds: usize,
    opts: &ConcaveOptions,
) -> Result<(Decision, FpTrace)> {
    check_discrete(dec)?;
    let mut cur = project_interior(dec, INTERIOR_MARGIN);
    let (mut ups, _) = update_upsilon(inst, &cur);
    let mut prev = p5_value(inst, &cur, aux, &ups);
    let mut trace = FpTrace {
        rounds: vec![FpRound { round: 0, objective: prev, kkt_residual: 0.0, solver_iterations: 0 }],
        converged: false,
        upsilon_change: f64::NAN,
    };
    for round in 1..=max_rounds {
        let problem = assemble(inst, &cur, aux, &ups);
        let (next, st) = solve_p5(&problem, &cur, opts)?;
        let (new_ups, _) = update_upsilon(inst, &next);
        let value = p5_value(inst, &next, aux, &new_ups);
        trace.upsilon_change = relative_change(&new_ups, &ups);
        trace.rounds.push(FpRound { round, objective: value, kkt_residual: st.kkt_residual, solver_iterations: st.iterations });
        cur = next;
        ups = new_ups;
        let done = (value - prev).abs() <= eps1 * prev.abs().max(f64::MIN_POSITIVE);
        prev = value;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((cur, trace))
}
