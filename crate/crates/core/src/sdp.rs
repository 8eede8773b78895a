//! Semidefinite relaxation of the association QCQP and the DC rank penalty.
//!
//! S = (Qᵀ, 1)ᵀ(Qᵀ, 1) with the homogenizing coordinate last.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qcqp::{phi_index, x_index, QcqpData};
use crate::solver::{solve_sdp, ConvexStatus, SdpOptions, SdpProblem, Sense, SymSparse, TraceConstraint};

/// Constraint and objective matrices of the relaxation.
#[derive(Debug, Clone)]
pub struct SdrData {
    pub dim: usize,
    pub n_users: usize,
    pub n_servers: usize,
    /// Objective block with corner C (delay bounds excluded).
    pub p1: DMatrix<f64>,
    /// S_ii − S_i,corner = 0 for every x entry.
    pub p2: Vec<SymSparse>,
    /// Σ_m x_{n,m} − 1 = 0 per user.
    pub p3: Vec<SymSparse>,
    /// φ_n − 1 <= 0 per user.
    pub p4: Vec<SymSparse>,
    /// −φ_n <= 0 per user.
    pub p4_lower: Vec<SymSparse>,
    /// φ_n² − φ_n <= 0 per user.
    pub p4_square: Vec<SymSparse>,
    /// Bandwidth budget per server.
    pub p5: Vec<SymSparse>,
    /// Computing budget per server.
    pub p6: Vec<SymSparse>,
    /// User delay bound as a trace form.
    pub p7: DMatrix<f64>,
    /// Server delay bound as a trace form.
    pub p8: DMatrix<f64>,
    /// Pins the corner entry to 1.
    pub corner: SymSparse,
    pub varpi: f64,
}

impl SdrData {
    pub fn corner_index(&self) -> usize {
        self.dim - 1
    }

    /// Objective block with the delay-bound scalars added to the corner.
    pub fn p1_with_t(&self, t_u: f64, t_s: f64) -> DMatrix<f64> {
        let mut p = self.p1.clone();
        let c = self.corner_index();
        p[(c, c)] += t_u + t_s;
        p
    }

    /// Objective with the delay bounds eliminated at their tight values.
    pub fn objective_matrix(&self) -> DMatrix<f64> {
        &self.p1 + &self.p7 + &self.p8
    }

    /// All trace constraints in solver form.
    pub fn constraints(&self) -> Vec<TraceConstraint> {
        let eq = |a: &SymSparse, rhs: f64| TraceConstraint { a: a.clone(), sense: Sense::Eq, rhs };
        let le = |a: &SymSparse| TraceConstraint { a: a.clone(), sense: Sense::Le, rhs: 0.0 };
        let mut out = vec![eq(&self.corner, 1.0)];
        out.extend(self.p2.iter().map(|a| eq(a, 0.0)));
        out.extend(self.p3.iter().map(|a| eq(a, 0.0)));
        for fam in [&self.p4, &self.p4_lower, &self.p4_square, &self.p5, &self.p6] {
            out.extend(fam.iter().map(le));
        }
        out
    }

    /// Largest violation of any trace constraint at S.
    pub fn max_violation(&self, s: &DMatrix<f64>) -> f64 {
        self.constraints()
            .iter()
            .map(|c| {
                let v = c.a.dot(s) - c.rhs;
                match c.sense {
                    Sense::Eq => v.abs(),
                    Sense::Le => v.max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }
}

/// (Qᵀ, 1)ᵀ(Qᵀ, 1).
pub fn lift(q: &DVector<f64>) -> DMatrix<f64> {
    let v = DVector::from_fn(q.len() + 1, |i, _| if i < q.len() { q[i] } else { 1.0 });
    &v * v.transpose()
}

/// Builds the relaxation of `qcqp` with penalty weight `varpi`.
pub fn lift_to_sdr(qcqp: &QcqpData, varpi: f64) -> Result<SdrData> {
    if !(varpi > 0.0) {
        return Err(Error::InvalidParameter(format!("varpi must be positive, got {varpi}")));
    }
    let (n, m) = (qcqp.n_users, qcqp.n_servers);
    let qd = qcqp.dim();
    if qcqp.p0.shape() != (qd, qd) || qcqp.w0.len() != qd {
        return Err(Error::Dimension("qcqp matrices".into()));
    }
    let dim = qd + 1;
    let d = qd;

    let mut p1 = DMatrix::zeros(dim, dim);
    let p0s = (&qcqp.p0 + qcqp.p0.transpose()) * 0.5;
    p1.view_mut((0, 0), (qd, qd)).copy_from(&p0s);
    for i in 0..qd {
        p1[(i, d)] = 0.5 * qcqp.w0[i];
        p1[(d, i)] = 0.5 * qcqp.w0[i];
    }
    p1[(d, d)] = qcqp.c;

    let mut p7 = DMatrix::zeros(dim, dim);
    for i in 0..qd {
        p7[(i, d)] = 0.5 * qcqp.p2_tu[i];
        p7[(d, i)] = 0.5 * qcqp.p2_tu[i];
    }
    p7[(d, d)] = qcqp.p1_tu;

    let mut p8 = DMatrix::zeros(dim, dim);
    let ts = (&qcqp.p0_ts + qcqp.p0_ts.transpose()) * 0.5;
    p8.view_mut((0, 0), (qd, qd)).copy_from(&ts);
    p8[(d, d)] = qcqp.p1_ts;

    let mut p2 = Vec::with_capacity(n * m);
    for j in 0..m {
        for i in 0..n {
            let k = x_index(n, i, j);
            let mut a = SymSparse::new(dim);
            a.add(k, k, 1.0);
            a.add(k, d, -0.5);
            p2.push(a);
        }
    }
    let mut p3 = Vec::with_capacity(n);
    let mut p4 = Vec::with_capacity(n);
    let mut p4_lower = Vec::with_capacity(n);
    let mut p4_square = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = SymSparse::new(dim);
        for j in 0..m {
            a.add(x_index(n, i, j), d, 0.5);
        }
        a.add(d, d, -1.0);
        p3.push(a);

        let f = phi_index(i);
        let mut up = SymSparse::new(dim);
        up.add(f, d, 0.5);
        up.add(d, d, -1.0);
        p4.push(up);
        let mut lo = SymSparse::new(dim);
        lo.add(f, d, -0.5);
        p4_lower.push(lo);
        let mut sq = SymSparse::new(dim);
        sq.add(f, f, 1.0);
        sq.add(f, d, -0.5);
        p4_square.push(sq);
    }
    let budget = |shares: &DVector<f64>, j: usize| {
        let mut a = SymSparse::new(dim);
        for i in 0..n {
            a.add(x_index(n, i, j), d, 0.5 * shares[x_index(n, i, j) - n]);
        }
        a.add(d, d, -1.0);
        a
    };
    let p5 = (0..m).map(|j| budget(&qcqp.phi_bw_vec, j)).collect();
    let p6 = (0..m).map(|j| budget(&qcqp.zeta_vec, j)).collect();
    let mut corner = SymSparse::new(dim);
    corner.add(d, d, 1.0);

    Ok(SdrData { dim, n_users: n, n_servers: m, p1, p2, p3, p4, p4_lower, p4_square, p5, p6, p7, p8, corner, varpi })
}

fn check_symmetric(s: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension("matrix is not square".into()));
    }
    let scale = s.amax().max(1.0);
    for i in 0..s.nrows() {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Contract("matrix is not symmetric".into()));
            }
        }
    }
    Ok(())
}

/// Tr(S) − λ_max(S), zero exactly on rank-one PSD matrices.
pub fn dc_penalty(s: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(s)?;
    let eig = SymmetricEigen::new(s.clone());
    Ok(s.trace() - eig.eigenvalues.max())
}

/// Unit leading eigenvector.
pub fn leading_eigenvector(s: &DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let k = eig.eigenvalues.imax();
    eig.eigenvectors.column(k).into_owned()
}

/// Q from the last column of S divided by the corner entry.
pub fn extract_q(s: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = s.nrows() - 1;
    let corner = s[(d, d)];
    if !(corner > 1e-8) {
        return Err(Error::ExtractionDegenerate(corner));
    }
    Ok(DVector::from_fn(d, |i, _| s[(i, d)] / corner))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DcRound {
    pub round: usize,
    /// Tr(P·S) + ϖ·(Tr S − λ_max S).
    pub objective: f64,
    pub penalty: f64,
    /// Tr S, the scale the penalty is judged against.
    pub trace: f64,
    pub sdp_iterations: usize,
    pub sdp_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcTrace {
    pub rounds: Vec<DcRound>,
    pub converged: bool,
}

impl DcTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,objective,penalty\n");
        for r in &self.rounds {
            let _ = writeln!(s, "{},{},{}", r.round, r.objective, r.penalty);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct DcOutcome {
    pub s: DMatrix<f64>,
    pub q: DVector<f64>,
    pub trace: DcTrace,
    pub status: ConvexStatus,
}

fn penalized(sdr: &SdrData, obj: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<(f64, f64)> {
    let sym = (s + s.transpose()) * 0.5;
    let pen = dc_penalty(&sym)?;
    Ok((obj.dot(&sym) + sdr.varpi * pen, pen))
}

/// Smallest objective change the interior-point solver can resolve; the
/// relative stopping tests are floored by it.
pub fn objective_resolution(sdr: &SdrData, opts: &SdpOptions) -> f64 {
    let scale = sdr.objective_matrix().amax().max(sdr.varpi);
    opts.tol * scale * sdr.dim as f64
}

/// Plain relaxation: the rank constraint is dropped.
pub fn solve_relaxation(sdr: &SdrData, opts: &SdpOptions) -> Result<(DMatrix<f64>, ConvexStatus)> {
    let problem = SdpProblem { dim: sdr.dim, c: sdr.objective_matrix(), constraints: sdr.constraints() };
    let sol = solve_sdp(&problem, opts)?;
    Ok((sol.s, sol.status))
}

/// Convex-concave iterations on Tr(P·S) + ϖ(Tr S − λ_max S), linearizing
/// λ_max at the previous iterate's leading eigenvector.
pub fn dc_solve(
    sdr: &SdrData,
    s_init: &DMatrix<f64>,
    eps2: f64,
    max_rounds: usize,
    opts: &SdpOptions,
) -> Result<DcOutcome> {
    if s_init.shape() != (sdr.dim, sdr.dim) {
        return Err(Error::Dimension("initial S".into()));
    }
    let obj = sdr.objective_matrix();
    let constraints = sdr.constraints();
    let floor = objective_resolution(sdr, opts);
    let mut s = (s_init + s_init.transpose()) * 0.5;
    let (mut prev, pen0) = penalized(sdr, &obj, &s)?;
    let mut trace = DcTrace {
        rounds: vec![DcRound { round: 0, objective: prev, penalty: pen0, trace: s.trace(), sdp_iterations: 0, sdp_converged: true }],
        converged: false,
    };
    let mut status = ConvexStatus { converged: false, iterations: 0, kkt_residual: 0.0, objective: prev };
    for round in 1..=max_rounds {
        let v = leading_eigenvector(&s);
        let c = &obj + (DMatrix::identity(sdr.dim, sdr.dim) - &v * v.transpose()) * sdr.varpi;
        let sol = solve_sdp(&SdpProblem { dim: sdr.dim, c, constraints: constraints.clone() }, opts)?;
        s = (&sol.s + sol.s.transpose()) * 0.5;
        let (value, pen) = penalized(sdr, &obj, &s)?;
        status = ConvexStatus {
            converged: sol.status.converged,
            iterations: status.iterations + sol.status.iterations,
            kkt_residual: sol.status.kkt_residual,
            objective: value,
        };
        trace.rounds.push(DcRound {
            round,
            objective: value,
            penalty: pen,
            trace: s.trace(),
            sdp_iterations: sol.status.iterations,
            sdp_converged: sol.status.converged,
        });
        let done = (value - prev).abs() <= eps2 * prev.abs().max(floor);
        prev = value;
        if done {
            trace.converged = true;
            break;
        }
    }
    let q = extract_q(&s)?;
    Ok(DcOutcome { s, q, trace, status })
}
