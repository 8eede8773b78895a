//! System model: topology, channels, per-term delay/energy and the DPE objective.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to resource shares that end up in a denominator.
pub const EPS_FLOOR: f64 = 1e-9;

/// Bits per kilobyte used for task sizes.
pub const BITS_PER_KB: f64 = 8.0e3;

/// Shortest distance fed to the path-loss law, in meters.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// DPE preference profile; scales both user and server weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    Low,
    Medium,
    High,
    /// Every weight independently scaled by a uniform draw in [0, 1].
    Mixed,
}

impl Preference {
    pub fn factor(self) -> Option<f64> {
        match self {
            Preference::Low => Some(0.2),
            Preference::Medium => Some(0.5),
            Preference::High => Some(1.0),
            Preference::Mixed => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preference::Low => "low",
            Preference::Medium => "medium",
            Preference::High => "high",
            Preference::Mixed => "mixed",
        }
    }
}

/// Scenario knobs. Defaults reproduce the ten-user, two-server setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_users: usize,
    pub n_servers: usize,
    pub radius_m: f64,
    /// Total bandwidth of each server, Hz.
    pub bandwidth_hz: f64,
    /// Maximum transmit power of each user, W.
    pub user_power_w: f64,
    pub user_freq_hz: f64,
    pub server_freq_hz: f64,
    /// CPU cycles per bit, local processing.
    pub eta_user: f64,
    /// CPU cycles per bit, server-side processing.
    pub eta_server: f64,
    /// CPU cycles per bit, block generation.
    pub eta_gen: f64,
    pub kappa_user: f64,
    pub kappa_server: f64,
    pub task_kb_min: f64,
    pub task_kb_max: f64,
    pub block_bits: f64,
    /// Slowest wired link from a server to its peers, bit/s.
    pub wired_rate_bps: f64,
    pub omega_b: f64,
    pub omega_t: f64,
    pub omega_e: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_dbm_per_hz: f64,
    /// Base DPE weight before the preference factor.
    pub dpe_weight: f64,
    pub preference: Preference,
    /// Block verification workload in cycles. `None` derives it from
    /// `eta_gen * block_bits * 1e-3`.
    pub eta_v: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_users: 10,
            n_servers: 2,
            radius_m: 1000.0,
            bandwidth_hz: 10e6,
            user_power_w: 0.2,
            user_freq_hz: 1e9,
            server_freq_hz: 20e9,
            eta_user: 279.62,
            eta_server: 279.62,
            eta_gen: 737.5,
            kappa_user: 1e-27,
            kappa_server: 1e-27,
            task_kb_min: 500.0,
            task_kb_max: 2000.0,
            block_bits: 8.0 * 8.0e6,
            wired_rate_bps: 15e6,
            omega_b: 1.0,
            omega_t: 0.5,
            omega_e: 0.5,
            noise_dbm_per_hz: -134.0,
            dpe_weight: 1.0 / 5e5,
            preference: Preference::High,
            eta_v: None,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be >= 1");
        }
        if self.n_servers == 0 {
            return bad("n_servers must be >= 1");
        }
        let positives = [
            ("radius_m", self.radius_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("user_power_w", self.user_power_w),
            ("user_freq_hz", self.user_freq_hz),
            ("server_freq_hz", self.server_freq_hz),
            ("eta_user", self.eta_user),
            ("eta_server", self.eta_server),
            ("eta_gen", self.eta_gen),
            ("kappa_user", self.kappa_user),
            ("kappa_server", self.kappa_server),
            ("task_kb_min", self.task_kb_min),
            ("block_bits", self.block_bits),
            ("wired_rate_bps", self.wired_rate_bps),
            ("omega_b", self.omega_b),
            ("omega_t", self.omega_t),
            ("omega_e", self.omega_e),
            ("dpe_weight", self.dpe_weight),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.task_kb_max < self.task_kb_min {
            return bad("task_kb_max must be >= task_kb_min");
        }
        if !self.noise_dbm_per_hz.is_finite() {
            return bad("noise_dbm_per_hz must be finite");
        }
        if let Some(v) = self.eta_v {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("eta_v must be non-negative");
            }
        }
        Ok(())
    }
}

/// All fixed parameters of one random topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub n_users: usize,
    pub n_servers: usize,
    pub user_pos: Vec<[f64; 2]>,
    pub server_pos: Vec<[f64; 2]>,
    /// Linear channel power gain, N x M.
    pub gain: DMatrix<f64>,
    pub d: DVector<f64>,
    pub eta_u: DVector<f64>,
    pub f_u: DVector<f64>,
    pub p: DVector<f64>,
    pub kappa_u: DVector<f64>,
    pub eta_s: DVector<f64>,
    pub eta_gen: DVector<f64>,
    pub f_s: DVector<f64>,
    pub kappa_s: DVector<f64>,
    pub b: DVector<f64>,
    pub eta_v: f64,
    pub s_b: f64,
    pub r_wired: DVector<f64>,
    pub omega_b: f64,
    pub omega_t: f64,
    pub omega_e: f64,
    /// Noise PSD, W/Hz.
    pub sigma2: f64,
    pub c_u: DVector<f64>,
    pub c_s: DMatrix<f64>,
}

/// Path loss in dB for a distance in meters.
pub fn path_loss_db(dist_m: f64) -> f64 {
    128.1 + 37.6 * (dist_m.max(MIN_DISTANCE_M) / 1000.0).log10()
}

/// Linear gain for a distance and a small-scale fading power draw.
pub fn channel_gain(dist_m: f64, fading: f64) -> f64 {
    10f64.powf(-path_loss_db(dist_m) / 10.0) * fading
}

pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

fn uniform_in_disc(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let t = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    [r * t.cos(), r * t.sin()]
}

/// Draws one topology. The draw order (servers, users, fading, task sizes,
/// mixed weights) does not depend on the swept scalar parameters, so the
/// same seed gives the same geometry across a sweep.
pub fn generate_network(params: &ScenarioParams, seed: u64) -> Result<NetworkInstance> {
    params.validate()?;
    let (n, m) = (params.n_users, params.n_servers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let server_pos: Vec<[f64; 2]> = (0..m).map(|_| uniform_in_disc(&mut rng, params.radius_m)).collect();
    let user_pos: Vec<[f64; 2]> = (0..n).map(|_| uniform_in_disc(&mut rng, params.radius_m)).collect();

    let mut gain = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let dx = user_pos[i][0] - server_pos[j][0];
            let dy = user_pos[i][1] - server_pos[j][1];
            let h: f64 = rng.sample(Exp1);
            gain[(i, j)] = channel_gain(dx.hypot(dy), h.max(f64::MIN_POSITIVE));
        }
    }

    let d = DVector::from_fn(n, |_, _| {
        let kb = params.task_kb_min + (params.task_kb_max - params.task_kb_min) * rng.random::<f64>();
        kb * BITS_PER_KB
    });

    let w = params.dpe_weight;
    let (c_u, c_s) = match params.preference.factor() {
        Some(f) => (DVector::from_element(n, w * f), DMatrix::from_element(n, m, w * f)),
        None => {
            let c_u = DVector::from_fn(n, |_, _| w * rng.random::<f64>());
            let c_s = DMatrix::from_fn(n, m, |_, _| w * rng.random::<f64>());
            (c_u, c_s)
        }
    };

    Ok(NetworkInstance {
        n_users: n,
        n_servers: m,
        user_pos,
        server_pos,
        gain,
        d,
        eta_u: DVector::from_element(n, params.eta_user),
        f_u: DVector::from_element(n, params.user_freq_hz),
        p: DVector::from_element(n, params.user_power_w),
        kappa_u: DVector::from_element(n, params.kappa_user),
        eta_s: DVector::from_element(m, params.eta_server),
        eta_gen: DVector::from_element(m, params.eta_gen),
        f_s: DVector::from_element(m, params.server_freq_hz),
        kappa_s: DVector::from_element(m, params.kappa_server),
        b: DVector::from_element(m, params.bandwidth_hz),
        eta_v: params.eta_v.unwrap_or(params.eta_gen * params.block_bits * 1e-3),
        s_b: params.block_bits,
        r_wired: DVector::from_element(m, params.wired_rate_bps),
        omega_b: params.omega_b,
        omega_t: params.omega_t,
        omega_e: params.omega_e,
        sigma2: dbm_per_hz_to_watts(params.noise_dbm_per_hz),
        c_u,
        c_s,
    })
}

/// Shannon rate of user `n` towards server `m`.
pub fn transmission_rate(inst: &NetworkInstance, n: usize, m: usize, phi_bw: f64, rho: f64) -> Result<f64> {
    if !(phi_bw > 0.0) {
        return Err(Error::RateUndefined { n, m });
    }
    let bw = phi_bw * inst.b[m];
    let snr = inst.gain[(n, m)] * rho * inst.p[n] / (inst.sigma2 * bw);
    Ok(bw * snr.ln_1p() / std::f64::consts::LN_2)
}

/// The seven decision-variable families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub x: DMatrix<f64>,
    pub phi_off: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub phi_bw: DMatrix<f64>,
    pub rho: DVector<f64>,
    pub zeta: DMatrix<f64>,
    pub psi: DVector<f64>,
}

impl Decision {
    /// Starting point: φ_off = 0.5, shares 1/N, ρ = ψ = 1, γ = 0.5, round-robin x.
    pub fn initial(inst: &NetworkInstance) -> Self {
        let (n, m) = (inst.n_users, inst.n_servers);
        let share = 1.0 / n as f64;
        Self {
            x: round_robin(n, m),
            phi_off: DVector::from_element(n, 0.5),
            gamma: DMatrix::from_element(n, m, 0.5),
            phi_bw: DMatrix::from_element(n, m, share),
            rho: DVector::from_element(n, 1.0),
            zeta: DMatrix::from_element(n, m, share),
            psi: DVector::from_element(n, 1.0),
        }
    }

    /// Equal shares among the users attached to each server; unattached
    /// pairs keep 1/N so every share stays strictly positive.
    pub fn equal_shares(inst: &NetworkInstance, x: DMatrix<f64>, phi_off: f64, rho: f64, psi: f64) -> Self {
        let (n, m) = (inst.n_users, inst.n_servers);
        let mut dec = Self::initial(inst);
        dec.x = x;
        dec.phi_off.fill(phi_off);
        dec.rho.fill(rho);
        dec.psi.fill(psi);
        dec.reset_equal_shares();
        debug_assert_eq!(dec.phi_bw.shape(), (n, m));
        dec
    }

    pub fn reset_equal_shares(&mut self) {
        let (n, m) = self.x.shape();
        for j in 0..m {
            let load: f64 = (0..n).map(|i| self.x[(i, j)]).sum();
            for i in 0..n {
                let s = if self.x[(i, j)] > 0.5 && load > 0.0 { 1.0 / load } else { 1.0 / n as f64 };
                self.phi_bw[(i, j)] = s;
                self.zeta[(i, j)] = s;
            }
        }
    }

    /// Scales the shares of attached users down on any server whose
    /// bandwidth or computing budget is exceeded.
    pub fn repair_budgets(&mut self) {
        let (n, m) = self.x.shape();
        for j in 0..m {
            for share in [&mut self.phi_bw, &mut self.zeta] {
                let used: f64 = (0..n).map(|i| self.x[(i, j)] * share[(i, j)]).sum();
                if used > 1.0 {
                    for i in 0..n {
                        if self.x[(i, j)] > 0.0 {
                            share[(i, j)] /= used;
                        }
                    }
                }
            }
        }
    }

    /// Server index of each user (argmax of its row, lowest index on ties).
    pub fn assignment(&self) -> Vec<usize> {
        argmax_rows(&self.x)
    }

    /// Checks constraints with absolute tolerance `tol`.
    pub fn check_feasible(&self, tol: f64, discrete: bool) -> Result<()> {
        let (n, m) = self.x.shape();
        let fail = |s: String| Err(Error::Contract(s));
        for i in 0..n {
            let row: f64 = (0..m).map(|j| self.x[(i, j)]).sum();
            if discrete {
                if (0..m).any(|j| self.x[(i, j)] != 0.0 && self.x[(i, j)] != 1.0) || row != 1.0 {
                    return fail(format!("x row {i} is not one-hot"));
                }
            }
            let in_unit = |v: f64| v >= -tol && v <= 1.0 + tol;
            if !in_unit(self.phi_off[i]) || !in_unit(self.rho[i]) || !in_unit(self.psi[i]) {
                return fail(format!("user {i} ratio outside [0,1]"));
            }
            for j in 0..m {
                if !(self.gamma[(i, j)] > 0.0 && self.gamma[(i, j)] < 1.0) {
                    return fail(format!("gamma[{i}][{j}] outside (0,1)"));
                }
                if !in_unit(self.phi_bw[(i, j)]) || !in_unit(self.zeta[(i, j)]) || !in_unit(self.x[(i, j)]) {
                    return fail(format!("pair ({i},{j}) share outside [0,1]"));
                }
            }
        }
        for j in 0..m {
            let bw: f64 = (0..n).map(|i| self.x[(i, j)] * self.phi_bw[(i, j)]).sum();
            let cpu: f64 = (0..n).map(|i| self.x[(i, j)] * self.zeta[(i, j)]).sum();
            if bw > 1.0 + tol || cpu > 1.0 + tol {
                return fail(format!("server {j} budget exceeded (bw {bw}, cpu {cpu})"));
            }
        }
        Ok(())
    }
}

pub fn round_robin(n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |i, j| if i % m == j { 1.0 } else { 0.0 })
}

pub fn one_hot(assign: &[usize], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(assign.len(), m, |i, j| if assign[i] == j { 1.0 } else { 0.0 })
}

pub fn argmax_rows(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..x.ncols() {
                if x[(i, j)] > x[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Per-term delays, energies and weighted costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub t_up: DVector<f64>,
    pub e_up: DVector<f64>,
    pub t_ut: DMatrix<f64>,
    pub e_ut: DMatrix<f64>,
    pub t_sp: DMatrix<f64>,
    pub e_sp: DMatrix<f64>,
    pub t_sg: DMatrix<f64>,
    pub e_sg: DMatrix<f64>,
    pub t_bp: DMatrix<f64>,
    pub t_sv: DMatrix<f64>,
    pub cost_u: DVector<f64>,
    pub cost_s: DMatrix<f64>,
    /// Number of denominators raised to [`EPS_FLOOR`].
    pub floored: usize,
}

impl CostBreakdown {
    /// Delay part of the server cost (the tight value of its delay bound).
    pub fn server_delay(&self, n: usize, m: usize) -> f64 {
        self.t_ut[(n, m)] + self.t_sp[(n, m)] + self.t_sg[(n, m)] + self.t_bp[(n, m)] + self.t_sv[(n, m)]
    }
}

pub(crate) fn floor(v: f64, floored: &mut usize) -> f64 {
    if v < EPS_FLOOR {
        *floored += 1;
        EPS_FLOOR
    } else {
        v
    }
}

/// Verification delay seen by pair (n, m): the slowest peer m' != m.
pub fn verification_delay(inst: &NetworkInstance, dec: &Decision, n: usize, m: usize, floored: &mut usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..inst.n_servers {
        if k == m {
            continue;
        }
        let share = floor((1.0 - dec.gamma[(n, k)]) * dec.zeta[(n, k)], floored);
        worst = worst.max(inst.eta_v / (share * inst.f_s[k]));
    }
    worst
}

/// Every delay/energy term and the weighted costs.
pub fn cost_components(inst: &NetworkInstance, dec: &Decision) -> CostBreakdown {
    let (n, m) = (inst.n_users, inst.n_servers);
    let mut floored = 0usize;
    let mut t_up = DVector::zeros(n);
    let mut e_up = DVector::zeros(n);
    let mut cost_u = DVector::zeros(n);
    for i in 0..n {
        let local = (1.0 - dec.phi_off[i]) * inst.d[i] * inst.eta_u[i];
        if local != 0.0 {
            let speed = floor(dec.psi[i], &mut floored) * inst.f_u[i];
            t_up[i] = local / speed;
            e_up[i] = inst.kappa_u[i] * local * speed * speed;
        }
        cost_u[i] = inst.omega_t * t_up[i] + inst.omega_e * e_up[i];
    }

    let z = || DMatrix::zeros(n, m);
    let (mut t_ut, mut e_ut, mut t_sp, mut e_sp) = (z(), z(), z(), z());
    let (mut t_sg, mut e_sg, mut t_bp, mut t_sv, mut cost_s) = (z(), z(), z(), z(), z());
    for i in 0..n {
        for j in 0..m {
            let bits = dec.x[(i, j)] * dec.phi_off[i] * inst.d[i];
            if bits != 0.0 {
                let bw = floor(dec.phi_bw[(i, j)], &mut floored);
                let rho = floor(dec.rho[i], &mut floored);
                let r = transmission_rate(inst, i, j, bw, rho).expect("floored share is positive");
                t_ut[(i, j)] = bits / r;
                e_ut[(i, j)] = rho * inst.p[i] * t_ut[(i, j)];
                let zf = floor(dec.zeta[(i, j)], &mut floored) * inst.f_s[j];
                let g = dec.gamma[(i, j)];
                let proc = floor(g, &mut floored) * zf;
                let gen = floor(1.0 - g, &mut floored) * zf;
                t_sp[(i, j)] = bits * inst.eta_s[j] / proc;
                e_sp[(i, j)] = inst.kappa_s[j] * bits * inst.eta_s[j] * proc * proc;
                t_sg[(i, j)] = bits * inst.omega_b * inst.eta_gen[j] / gen;
                e_sg[(i, j)] = inst.kappa_s[j] * bits * inst.eta_gen[j] * inst.omega_b * gen * gen;
            }
            t_bp[(i, j)] = inst.s_b / inst.r_wired[j];
            t_sv[(i, j)] = verification_delay(inst, dec, i, j, &mut floored);
            let delay = t_ut[(i, j)] + t_sp[(i, j)] + t_sg[(i, j)] + t_bp[(i, j)] + t_sv[(i, j)];
            let energy = e_ut[(i, j)] + e_sp[(i, j)] + e_sg[(i, j)];
            cost_s[(i, j)] = inst.omega_t * delay + inst.omega_e * energy;
        }
    }
    CostBreakdown { t_up, e_up, t_ut, e_ut, t_sp, e_sp, t_sg, e_sg, t_bp, t_sv, cost_u, cost_s, floored }
}

/// Numerators of the per-user and per-pair DPE ratios.
pub fn dpe_numerators(inst: &NetworkInstance, dec: &Decision) -> (DVector<f64>, DMatrix<f64>) {
    let (n, m) = (inst.n_users, inst.n_servers);
    let nu = DVector::from_fn(n, |i, _| inst.c_u[i] * (1.0 - dec.phi_off[i]) * inst.d[i]);
    let ns = DMatrix::from_fn(n, m, |i, j| inst.c_s[(i, j)] * dec.x[(i, j)] * dec.phi_off[i] * inst.d[i]);
    (nu, ns)
}

fn ratio(num: f64, cost: f64, what: &str) -> Result<f64> {
    if num == 0.0 {
        Ok(0.0)
    } else if cost > 0.0 {
        Ok(num / cost)
    } else {
        Err(Error::Degenerate(format!("{what}: cost {cost} with numerator {num}")))
    }
}

/// Total DPE of all users and servers.
pub fn dpe_objective(inst: &NetworkInstance, dec: &Decision) -> Result<f64> {
    let costs = cost_components(inst, dec);
    let (nu, ns) = dpe_numerators(inst, dec);
    let mut total = 0.0;
    for i in 0..inst.n_users {
        total += ratio(nu[i], costs.cost_u[i], "user cost")?;
        for j in 0..inst.n_servers {
            total += ratio(ns[(i, j)], costs.cost_s[(i, j)], "server cost")?;
        }
    }
    Ok(total)
}
