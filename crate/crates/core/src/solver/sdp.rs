//! Primal-dual interior-point method for
//!
//! ```text
//! min <C, S>  s.t.  <A_i, S> = b_i  (equalities)
//!                   <G_j, S> <= h_j (inequalities)
//!                   S PSD
//! ```
//!
//! Inequalities get a nonnegative slack each. Search directions use the
//! HKM scaling with a Mehrotra predictor-corrector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::ConvexStatus;
use crate::error::{Error, Result};

/// Sparse symmetric matrix stored as upper-triangle triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    pub dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Adds `v` to element (i, j) and, when i != j, to (j, i).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == a && e.1 == b) {
            e.2 += v;
        } else {
            self.entries.push((a, b, v));
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut s = Self::new(m.nrows());
        for j in 0..m.ncols() {
            for i in 0..=j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                if v != 0.0 {
                    s.entries.push((i, j, v));
                }
            }
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.add_to(&mut m, 1.0);
        m
    }

    pub fn add_to(&self, m: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += scale * v;
            if i != j {
                m[(j, i)] += scale * v;
            }
        }
    }

    /// Trace inner product with a symmetric matrix.
    pub fn dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { v * (x[(i, j)] + x[(j, i)]) })
            .sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    fn scaled(&self, s: f64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * s)).collect() }
    }

    /// Both (i, j) and (j, i) for off-diagonal entries.
    fn full(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
}

#[derive(Debug, Clone)]
pub struct TraceConstraint {
    pub a: SymSparse,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dim: usize,
    pub c: DMatrix<f64>,
    pub constraints: Vec<TraceConstraint>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub s: DMatrix<f64>,
    pub y: DVector<f64>,
    pub status: ConvexStatus,
}

struct Row {
    a: SymSparse,
    full: Vec<(usize, usize, f64)>,
    cols: Vec<usize>,
    slack: Option<usize>,
    b: f64,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let l = x.clone().cholesky()?.l();
    let linv = l.clone().try_inverse()?;
    let m = sym(&(&linv * dx * linv.transpose()));
    let lmin = SymmetricEigen::new(m).eigenvalues.min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Solves the problem to the relative residual/gap tolerance `opts.tol`.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    let n = problem.dim;
    if problem.c.shape() != (n, n) {
        return Err(Error::Dimension("objective matrix".into()));
    }
    let mut rows = Vec::with_capacity(problem.constraints.len());
    let mut n_lp = 0;
    for c in &problem.constraints {
        if c.a.dim != n {
            return Err(Error::Dimension("constraint matrix".into()));
        }
        let norm = c.a.frobenius();
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        let a = c.a.scaled(s);
        let full = a.full();
        let mut cols: Vec<usize> = full.iter().map(|e| e.1).collect();
        cols.sort_unstable();
        cols.dedup();
        let slack = (c.sense == Sense::Le).then(|| {
            n_lp += 1;
            n_lp - 1
        });
        rows.push(Row { a, full, cols, slack, b: c.rhs * s });
    }
    let slack_coef: Vec<f64> = {
        let mut v = vec![0.0; n_lp];
        for (r, c) in rows.iter().zip(&problem.constraints) {
            if let Some(k) = r.slack {
                let norm = c.a.frobenius();
                v[k] = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            }
        }
        v
    };
    let m = rows.len();
    let cmax = problem.c.amax();
    let cscale = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    let c = sym(&problem.c) * cscale;
    let b = DVector::from_iterator(m, rows.iter().map(|r| r.b));
    let total = (n + n_lp) as f64;

    let cnorm = c.norm();
    let bnorm = b.norm();
    let amax = rows.iter().map(|r| r.a.frobenius()).fold(0.0, f64::max);
    let xi = rows
        .iter()
        .map(|r| n as f64 * (1.0 + r.b.abs()) / (1.0 + r.a.frobenius()))
        .fold((n as f64).sqrt().max(10.0), f64::max);
    let eta = (n as f64).sqrt().max(10.0).max(cnorm.max(amax));

    let mut x = DMatrix::identity(n, n) * xi;
    let mut z = DMatrix::identity(n, n) * eta;
    let mut xl = DVector::from_element(n_lp, xi);
    let mut zl = DVector::from_element(n_lp, eta);
    let mut y = DVector::zeros(m);

    let apply = |x: &DMatrix<f64>, xl: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(
            m,
            rows.iter().map(|r| r.a.dot(x) + r.slack.map_or(0.0, |k| slack_coef[k] * xl[k])),
        )
    };
    let adjoint = |y: &DVector<f64>| -> (DMatrix<f64>, DVector<f64>) {
        let mut s = DMatrix::zeros(n, n);
        let mut sl = DVector::zeros(n_lp);
        for (i, r) in rows.iter().enumerate() {
            r.a.add_to(&mut s, y[i]);
            if let Some(k) = r.slack {
                sl[k] += slack_coef[k] * y[i];
            }
        }
        (s, sl)
    };

    let mut status = ConvexStatus { converged: false, iterations: 0, kkt_residual: f64::INFINITY, objective: f64::NAN };
    for iter in 0..=opts.max_iter {
        let rp = &b - apply(&x, &xl);
        let (ay, ayl) = adjoint(&y);
        let rd = &c - &ay - &z;
        let rdl = -&ayl - &zl;
        let pobj = c.dot(&x);
        let dobj = b.dot(&y);
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = (rd.norm_squared() + rdl.norm_squared()).sqrt() / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        status.iterations = iter;
        status.kkt_residual = pinf.max(dinf).max(gap);
        status.objective = pobj / cscale;
        if status.kkt_residual <= opts.tol {
            status.converged = true;
            break;
        }
        if dobj > 1e10 * (1.0 + cnorm) && dinf < 1e-3 {
            return Err(Error::Infeasible);
        }
        if iter == opts.max_iter {
            break;
        }

        let zch = match z.clone().cholesky() {
            Some(ch) => ch,
            None => break,
        };
        let zinv = sym(&zch.inverse());
        let mu = (x.dot(&z) + xl.dot(&zl)) / total;

        // Schur complement M_ij = Tr(A_i X A_j Z^-1) + Σ_k a_ik a_jk x_k / z_k.
        let mut schur = DMatrix::zeros(m, m);
        let mut g = DMatrix::zeros(n, n);
        let mut xa = DMatrix::zeros(n, n);
        for (j, rj) in rows.iter().enumerate() {
            for &(p, q, v) in &rj.full {
                let src = x.column(p) * v;
                let mut dst = xa.column_mut(q);
                dst += src;
            }
            g.fill(0.0);
            for &col in &rj.cols {
                g.ger(1.0, &xa.column(col), &zinv.row(col).transpose(), 1.0);
            }
            for (i, ri) in rows.iter().enumerate() {
                let mut s = 0.0;
                for &(p, q, v) in &ri.full {
                    s += v * g[(q, p)];
                }
                schur[(i, j)] = s;
            }
            for &col in &rj.cols {
                xa.column_mut(col).fill(0.0);
            }
        }
        let schur = {
            let mut s = sym(&schur);
            for (i, ri) in rows.iter().enumerate() {
                if let Some(k) = ri.slack {
                    s[(i, i)] += slack_coef[k] * slack_coef[k] * xl[k] / zl[k];
                }
            }
            s
        };
        let factor = {
            let mut reg = 0.0;
            let scale = schur.diagonal().amax().max(1e-300);
            let mut out = None;
            for _ in 0..8 {
                let mut s = schur.clone();
                for i in 0..m {
                    s[(i, i)] += reg;
                }
                if let Some(ch) = s.cholesky() {
                    out = Some(ch);
                    break;
                }
                reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
            }
            match out {
                Some(f) => f,
                None => break,
            }
        };

        let direction = |rc: &DMatrix<f64>, rcl: &DVector<f64>| {
            let t = (rc - &x * &rd) * &zinv;
            let tl = DVector::from_fn(n_lp, |k, _| (rcl[k] - xl[k] * rdl[k]) / zl[k]);
            let rhs = &rp - apply(&t, &tl);
            let dy = factor.solve(&rhs);
            let (ady, adyl) = adjoint(&dy);
            let dz = &rd - ady;
            let dzl = &rdl - adyl;
            let dx = sym(&((rc - &x * &dz) * &zinv));
            let dxl = DVector::from_fn(n_lp, |k, _| (rcl[k] - xl[k] * dzl[k]) / zl[k]);
            (dx, dxl, dy, sym(&dz), dzl)
        };
        let steps = |dx: &DMatrix<f64>, dxl: &DVector<f64>, dz: &DMatrix<f64>, dzl: &DVector<f64>| {
            let ap = max_step_psd(&x, dx).map(|s| s.min(max_step_lp(&xl, dxl)));
            let ad = max_step_psd(&z, dz).map(|s| s.min(max_step_lp(&zl, dzl)));
            (ap, ad)
        };

        let xz = &x * &z;
        let rc_aff = -&xz;
        let rcl_aff = DVector::from_fn(n_lp, |k, _| -xl[k] * zl[k]);
        let (dxa, dxla, _, dza, dzla) = direction(&rc_aff, &rcl_aff);
        let (ap, ad) = steps(&dxa, &dxla, &dza, &dzla);
        let (ap, ad) = match (ap, ad) {
            (Some(a), Some(b)) => (a.min(1.0), b.min(1.0)),
            _ => break,
        };
        let mu_aff = ((&x + &dxa * ap).dot(&(&z + &dza * ad)) + (&xl + &dxla * ap).dot(&(&zl + &dzla * ad))) / total;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let rc = DMatrix::identity(n, n) * (sigma * mu) - &xz - &dxa * &dza;
        let rcl = DVector::from_fn(n_lp, |k, _| sigma * mu - xl[k] * zl[k] - dxla[k] * dzla[k]);
        let (dx, dxl, dy, dz, dzl) = direction(&rc, &rcl);
        let (ap, ad) = steps(&dx, &dxl, &dz, &dzl);
        let (ap, ad) = match (ap, ad) {
            (Some(a), Some(b)) => ((0.95 * a).min(1.0), (0.95 * b).min(1.0)),
            _ => break,
        };
        x += &dx * ap;
        xl += &dxl * ap;
        y += &dy * ad;
        z += &dz * ad;
        zl += &dzl * ad;
        x = sym(&x);
        z = sym(&z);
    }
    Ok(SdpSolution { s: x, y: y * (1.0 / cscale), status })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym(s)).eigenvalues.min()
}
