//! Outer alternation between the association block and the resource block,
//! plus the four reference schemes.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fp::fp_solve;
use crate::model::{argmax_rows, dpe_objective, one_hot, Decision, NetworkInstance};
use crate::qcqp::{assemble_qcqp, optimal_gamma, unstack_q};
use crate::rounding::round_rank1;
use crate::sdp::{dc_solve, extract_q, lift_to_sdr, objective_resolution, solve_relaxation, DcTrace};
use crate::solver::{ConcaveOptions, SdpOptions};
use crate::transforms::{association_auxiliary, update_auxiliary};

/// Stopping thresholds and knobs shared by all schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaurConfig {
    /// Resource-block relative change.
    pub eps1: f64,
    /// Association-block relative change.
    pub eps2: f64,
    /// Outer relative improvement.
    pub eps3: f64,
    pub varpi: f64,
    /// Cap per loop level.
    pub max_rounds: usize,
    /// Upper bound applied to the offload ratio read back from the relaxation.
    pub offload_cap: f64,
    /// Keep the rank penalty (true) or solve the plain relaxation (false).
    pub retain_rank1: bool,
    /// ρ used by the equal-share schemes.
    pub baseline_rho: f64,
    /// ψ used by the equal-share schemes.
    pub baseline_psi: f64,
    pub concave_tol: f64,
    pub sdp_tol: f64,
}

impl Default for DaurConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-3,
            eps2: 1e-3,
            eps3: 1e-3,
            varpi: 175.0,
            max_rounds: 20,
            offload_cap: 0.99,
            retain_rank1: true,
            baseline_rho: 1.0,
            baseline_psi: 1.0,
            concave_tol: 1e-7,
            sdp_tol: 1e-7,
        }
    }
}

impl DaurConfig {
    pub fn concave_options(&self) -> ConcaveOptions {
        ConcaveOptions { tol: self.concave_tol, ..ConcaveOptions::default() }
    }

    pub fn sdp_options(&self) -> SdpOptions {
        SdpOptions { tol: self.sdp_tol, ..SdpOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2), ("eps3", self.eps3)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative")));
            }
        }
        if !(self.varpi > 0.0) {
            return Err(Error::InvalidParameter("varpi must be positive".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidParameter("max_rounds must be >= 1".into()));
        }
        if !(self.offload_cap > 0.0 && self.offload_cap <= 1.0) {
            return Err(Error::InvalidParameter("offload_cap must lie in (0, 1]".into()));
        }
        for (name, v) in [("baseline_rho", self.baseline_rho), ("baseline_psi", self.baseline_psi)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1]")));
            }
        }
        if !(self.concave_tol > 0.0 && self.sdp_tol > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Rucaa,
    Gucaa,
    Aauco,
    Gucro,
    Daur,
}

impl Method {
    /// Canonical order.
    pub const ALL: [Method; 5] = [Method::Rucaa, Method::Gucaa, Method::Aauco, Method::Gucro, Method::Daur];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rucaa => "RUCAA",
            Method::Gucaa => "GUCAA",
            Method::Aauco => "AAUCO",
            Method::Gucro => "GUCRO",
            Method::Daur => "DAUR",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub association_ms: f64,
    pub resource_ms: f64,
    pub total_ms: f64,
}

/// Outcome of one scheme on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub method: Method,
    pub dpe: f64,
    pub outer_rounds: usize,
    pub fp_rounds: usize,
    pub qcqp_rounds: usize,
    /// Σϑ after every outer round; entry 0 is the starting point.
    pub trace: Vec<f64>,
    pub times: PhaseTimes,
    /// Every phase met its stopping rule.
    pub converged: bool,
    pub decision: Decision,
}

/// What the association block did.
#[derive(Debug, Clone)]
pub struct AssociationOutcome {
    pub decision: Decision,
    pub rounds: usize,
    pub s: DMatrix<f64>,
    pub dc_traces: Vec<DcTrace>,
    pub converged: bool,
}

fn with_gamma(inst: &NetworkInstance, mut dec: Decision) -> Result<Decision> {
    dec.gamma.fill(optimal_gamma(inst.omega_b)?);
    Ok(dec)
}

/// Round-robin, equal-share start with γ at its optimum.
pub fn starting_point(inst: &NetworkInstance) -> Result<Decision> {
    with_gamma(inst, Decision::initial(inst))
}

/// Keeps association draws independent of the topology stream for the same seed.
pub const ASSOCIATION_SALT: u64 = 0x5eed_a550_c1a7_e000;

/// Each user picks a server uniformly at random.
pub fn random_association(n_users: usize, n_servers: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let servers: Vec<usize> = (0..n_users).map(|_| rng.random_range(0..n_servers)).collect();
    one_hot(&servers, n_servers)
}

/// Relaxation, DC refinement and rank-one rounding of (x, φ_off) at fixed
/// resources. The linearization is refreshed with the continuous φ_off
/// until the penalized value settles.
pub fn association_block(inst: &NetworkInstance, dec: &Decision, cfg: &DaurConfig) -> Result<AssociationOutcome> {
    let (n, m) = (inst.n_users, inst.n_servers);
    let sdp_opts = cfg.sdp_options();
    let mut cur = dec.clone();
    let mut s_prev: Option<DMatrix<f64>> = None;
    let mut prev_value: Option<f64> = None;
    let mut traces = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    let mut s_last = None;
    for _ in 0..cfg.max_rounds {
        rounds += 1;
        let aux = association_auxiliary(inst, &cur);
        let data = assemble_qcqp(inst, &cur, &aux)?;
        let sdr = lift_to_sdr(&data, cfg.varpi)?;
        let floor = objective_resolution(&sdr, &sdp_opts);
        let (s, value) = if cfg.retain_rank1 {
            let start = match &s_prev {
                Some(s) => s.clone(),
                None => solve_relaxation(&sdr, &sdp_opts)?.0,
            };
            let out = dc_solve(&sdr, &start, cfg.eps2, cfg.max_rounds, &sdp_opts)?;
            let v = out.trace.rounds.last().map_or(f64::NAN, |r| r.objective);
            traces.push(out.trace);
            (out.s, v)
        } else {
            let (s, st) = solve_relaxation(&sdr, &sdp_opts)?;
            (s, st.objective)
        };
        let q = extract_q(&s)?;
        let (phi, x_cont) = unstack_q(&q, n, m);
        cur.phi_off = phi.map(|v| v.clamp(0.0, cfg.offload_cap));
        cur.x = x_cont;
        s_prev = Some(s.clone());
        s_last = Some(s);
        if let Some(p) = prev_value {
            if (value - p).abs() <= cfg.eps2 * p.abs().max(floor) {
                converged = true;
                break;
            }
        }
        prev_value = Some(value);
    }
    let s = s_last.expect("at least one round");
    let mut out = cur;
    out.x = round_rank1(&s, n, m);
    out.repair_budgets();
    Ok(AssociationOutcome { decision: out, rounds, s, dc_traces: traces, converged })
}

struct Tracker {
    best: Decision,
    best_dpe: f64,
}

impl Tracker {
    fn offer(&mut self, inst: &NetworkInstance, dec: &Decision) -> Result<f64> {
        let v = dpe_objective(inst, dec)?;
        if v > self.best_dpe {
            self.best_dpe = v;
            self.best = dec.clone();
        }
        Ok(v)
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Copy)]
struct Blocks {
    association: bool,
    resources: bool,
    equal_shares: bool,
}

fn alternate(inst: &NetworkInstance, start: Decision, cfg: &DaurConfig, method: Method, blocks: Blocks) -> Result<RunReport> {
    cfg.validate()?;
    let t_all = Instant::now();
    let mut times = PhaseTimes::default();
    let start = with_gamma(inst, start)?;
    let v0 = update_auxiliary(inst, &start).theta_sum();
    let mut tracker = Tracker { best: start.clone(), best_dpe: f64::NEG_INFINITY };
    tracker.offer(inst, &start)?;
    let mut trace = vec![v0];
    let (mut fp_rounds, mut qcqp_rounds, mut outer) = (0, 0, 0);
    let mut converged = true;
    let mut cur = start;
    let mut prev = v0;
    for _ in 0..cfg.max_rounds {
        outer += 1;
        if blocks.association {
            let t = Instant::now();
            let out = association_block(inst, &cur, cfg)?;
            qcqp_rounds += out.rounds;
            converged &= out.converged;
            cur = out.decision;
            if blocks.equal_shares {
                cur.reset_equal_shares();
            }
            times.association_ms += ms(t);
        }
        if blocks.resources {
            let t = Instant::now();
            let aux = update_auxiliary(inst, &cur);
            let (next, fp) = fp_solve(inst, &cur, &aux, cfg.eps1, cfg.max_rounds, &cfg.concave_options())?;
            fp_rounds += fp.round_count();
            converged &= fp.converged;
            cur = next;
            times.resource_ms += ms(t);
        }
        let value = update_auxiliary(inst, &cur).theta_sum();
        trace.push(value);
        tracker.offer(inst, &cur)?;
        let stop = value / prev - 1.0 <= cfg.eps3;
        prev = value;
        if stop {
            break;
        }
    }
    times.total_ms = ms(t_all);
    let dpe = dpe_objective(inst, &tracker.best)?;
    Ok(RunReport {
        method,
        dpe,
        outer_rounds: outer,
        fp_rounds,
        qcqp_rounds,
        trace,
        times,
        converged,
        decision: tracker.best,
    })
}

/// Full scheme: association and resource blocks alternate from the
/// round-robin, equal-share start until Σϑ stops improving by more than eps3.
pub fn daur_run(inst: &NetworkInstance, cfg: &DaurConfig) -> Result<RunReport> {
    alternate(inst, Decision::initial(inst), cfg, Method::Daur, Blocks { association: true, resources: true, equal_shares: false })
}

fn fixed_report(inst: &NetworkInstance, dec: Decision, method: Method) -> Result<RunReport> {
    let t = Instant::now();
    let dec = with_gamma(inst, dec)?;
    let dpe = dpe_objective(inst, &dec)?;
    let total_ms = ms(t);
    Ok(RunReport {
        method,
        dpe,
        outer_rounds: 0,
        fp_rounds: 0,
        qcqp_rounds: 0,
        trace: vec![dpe],
        times: PhaseTimes { total_ms, ..PhaseTimes::default() },
        converged: true,
        decision: dec,
    })
}

/// Users attached uniformly at random; equal shares.
pub fn baseline_rucaa(inst: &NetworkInstance, seed: u64, cfg: &DaurConfig) -> Result<RunReport> {
    let x = random_association(inst.n_users, inst.n_servers, seed ^ ASSOCIATION_SALT);
    let dec = Decision::equal_shares(inst, x, 0.5, cfg.baseline_rho, cfg.baseline_psi);
    fixed_report(inst, dec, Method::Rucaa)
}

/// Max-channel-gain association.
pub fn greedy_association(inst: &NetworkInstance) -> DMatrix<f64> {
    one_hot(&argmax_rows(&inst.gain), inst.n_servers)
}

/// Max-gain users, equal shares.
pub fn baseline_gucaa(inst: &NetworkInstance, cfg: &DaurConfig) -> Result<RunReport> {
    let dec = Decision::equal_shares(inst, greedy_association(inst), 0.5, cfg.baseline_rho, cfg.baseline_psi);
    fixed_report(inst, dec, Method::Gucaa)
}

/// Association block only, with equal shares re-derived after each round.
pub fn baseline_aauco(inst: &NetworkInstance, cfg: &DaurConfig) -> Result<RunReport> {
    let start = Decision::equal_shares(inst, Decision::initial(inst).x, 0.5, cfg.baseline_rho, cfg.baseline_psi);
    alternate(inst, start, cfg, Method::Aauco, Blocks { association: true, resources: false, equal_shares: true })
}

/// Max-gain association; resource block only.
pub fn baseline_gucro(inst: &NetworkInstance, cfg: &DaurConfig) -> Result<RunReport> {
    let start = Decision::equal_shares(inst, greedy_association(inst), 0.5, cfg.baseline_rho, cfg.baseline_psi);
    alternate(inst, start, cfg, Method::Gucro, Blocks { association: false, resources: true, equal_shares: false })
}

/// Dispatches one scheme; `seed` only matters for RUCAA.
pub fn run_method(method: Method, inst: &NetworkInstance, cfg: &DaurConfig, seed: u64) -> Result<RunReport> {
    match method {
        Method::Rucaa => baseline_rucaa(inst, seed, cfg),
        Method::Gucaa => baseline_gucaa(inst, cfg),
        Method::Aauco => baseline_aauco(inst, cfg),
        Method::Gucro => baseline_gucro(inst, cfg),
        Method::Daur => daur_run(inst, cfg),
    }
}
