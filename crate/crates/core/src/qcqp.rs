//! The association subproblem in (x, φ_off) with resources fixed, written as
//! a quadratic program over the stacked vector
//! Q = (φ_1..φ_N, x_{·,1}, .., x_{·,M}).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{transmission_rate, verification_delay, Decision, NetworkInstance, EPS_FLOOR};
use crate::transforms::AuxState;

/// Split of each server's cycles between processing and block generation.
pub fn optimal_gamma(omega_b: f64) -> Result<f64> {
    if !(omega_b > 0.0 && omega_b.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega_b must be positive, got {omega_b}")));
    }
    Ok(1.0 / (1.0 + omega_b))
}

/// Position of φ_n in Q.
pub fn phi_index(n: usize) -> usize {
    n
}

/// Position of x_{n,m} in Q.
pub fn x_index(n_users: usize, n: usize, m: usize) -> usize {
    n_users + m * n_users + n
}

/// Stacks φ_off and the columns of x.
pub fn stack_q(phi_off: &DVector<f64>, x: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = x.shape();
    let mut q = DVector::zeros(n + n * m);
    for i in 0..n {
        q[phi_index(i)] = phi_off[i];
        for j in 0..m {
            q[x_index(n, i, j)] = x[(i, j)];
        }
    }
    q
}

/// Inverse of [`stack_q`].
pub fn unstack_q(q: &DVector<f64>, n: usize, m: usize) -> (DVector<f64>, DMatrix<f64>) {
    let phi = DVector::from_fn(n, |i, _| q[phi_index(i)]);
    let x = DMatrix::from_fn(n, m, |i, j| q[x_index(n, i, j)]);
    (phi, x)
}

/// Matrices of the association QCQP.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpData {
    pub n_users: usize,
    pub n_servers: usize,
    /// B_{n,m} at (φ_n, x_{n,m}); not symmetric.
    pub p0: DMatrix<f64>,
    /// A_n on the φ entries.
    pub w0: DVector<f64>,
    pub c: f64,
    pub p2_tu: DVector<f64>,
    pub p1_tu: f64,
    pub p0_ts: DMatrix<f64>,
    pub p1_ts: f64,
    /// φ_bw and ζ laid out like the x block of Q.
    pub phi_bw_vec: DVector<f64>,
    pub zeta_vec: DVector<f64>,
    pub a: DVector<f64>,
    pub b: DMatrix<f64>,
}

impl QcqpData {
    pub fn dim(&self) -> usize {
        self.n_users + self.n_users * self.n_servers
    }

    /// Delay bounds made tight at Q.
    pub fn tight_t(&self, q: &DVector<f64>) -> (f64, f64) {
        let tu = self.p1_tu + self.p2_tu.dot(q);
        let ts = (q.transpose() * &self.p0_ts * q)[(0, 0)] + self.p1_ts;
        (tu, ts)
    }
}

/// Builds the QCQP at fixed resources. γ is read from `dec` and must be
/// strictly inside (0, 1).
pub fn assemble_qcqp(inst: &NetworkInstance, dec: &Decision, aux: &AuxState) -> Result<QcqpData> {
    let (n, m) = (inst.n_users, inst.n_servers);
    if dec.x.shape() != (n, m) || aux.alpha_s.shape() != (n, m) || aux.alpha_u.len() != n {
        return Err(Error::Dimension(format!("expected {n} users and {m} servers")));
    }
    let dim = n + n * m;
    let mut a = DVector::zeros(n);
    let mut b = DMatrix::zeros(n, m);
    let mut w0 = DVector::zeros(dim);
    let mut p2_tu = DVector::zeros(dim);
    let mut p1_tu = 0.0;
    let mut p0 = DMatrix::zeros(dim, dim);
    let mut p0_ts = DMatrix::zeros(dim, dim);
    let mut p1_ts = 0.0;
    let mut phi_bw_vec = DVector::zeros(n * m);
    let mut zeta_vec = DVector::zeros(n * m);
    let mut fl = 0usize;
    for i in 0..n {
        let speed = dec.psi[i].max(EPS_FLOOR) * inst.f_u[i];
        let (au, tu) = (aux.alpha_u[i], aux.theta_u[i]);
        a[i] = au * inst.c_u[i] * inst.d[i] - au * tu * inst.omega_e * inst.kappa_u[i] * inst.d[i] * inst.eta_u[i] * speed * speed;
        w0[phi_index(i)] = a[i];
        let wu = au * tu * inst.omega_t;
        let local_delay = inst.d[i] * inst.eta_u[i] / speed;
        p1_tu += wu * local_delay;
        p2_tu[phi_index(i)] = -wu * local_delay;
        for j in 0..m {
            let k = x_index(n, i, j);
            phi_bw_vec[k - n] = dec.phi_bw[(i, j)];
            zeta_vec[k - n] = dec.zeta[(i, j)];
            let (as_, ts) = (aux.alpha_s[(i, j)], aux.theta_s[(i, j)]);
            let g = dec.gamma[(i, j)];
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidParameter(format!("gamma[{i}][{j}] = {g}")));
            }
            let rho = dec.rho[i].max(EPS_FLOOR);
            let r = transmission_rate(inst, i, j, dec.phi_bw[(i, j)].max(EPS_FLOOR), rho)?;
            let zf = dec.zeta[(i, j)].max(EPS_FLOOR) * inst.f_s[j];
            let energy_per_bit = inst.kappa_s[j]
                * zf
                * zf
                * (inst.eta_s[j] * g * g + inst.omega_b * inst.eta_gen[j] * (1.0 - g).powi(2));
            b[(i, j)] = as_ * ts * inst.omega_e * (inst.d[i] * energy_per_bit + rho * inst.p[i] * inst.d[i] / r)
                - as_ * inst.c_s[(i, j)] * inst.d[i];
            p0[(phi_index(i), k)] = b[(i, j)];
            let ws = as_ * ts * inst.omega_t;
            let delay_per_bit = 1.0 / r + inst.eta_s[j] / (g * zf) + inst.omega_b * inst.eta_gen[j] / ((1.0 - g) * zf);
            p0_ts[(phi_index(i), k)] = ws * inst.d[i] * delay_per_bit;
            p1_ts += ws * (inst.s_b / inst.r_wired[j] + verification_delay(inst, dec, i, j, &mut fl));
        }
    }
    let c = -a.sum();
    Ok(QcqpData { n_users: n, n_servers: m, p0, w0, c, p2_tu, p1_tu, p0_ts, p1_ts, phi_bw_vec, zeta_vec, a, b })
}

/// Qᵀ·P0·Q + W0ᵀ·Q + T_u + T_s + C.
pub fn qcqp_objective(data: &QcqpData, q: &DVector<f64>, t_u: f64, t_s: f64) -> Result<f64> {
    if q.len() != data.dim() {
        return Err(Error::Dimension(format!("Q has length {}, expected {}", q.len(), data.dim())));
    }
    Ok((q.transpose() * &data.p0 * q)[(0, 0)] + data.w0.dot(q) + t_u + t_s + data.c)
}
