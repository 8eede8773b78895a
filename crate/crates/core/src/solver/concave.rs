//! Log-barrier Newton method for smooth concave maximization over a box
//! and linear inequalities `A y <= b`.

use nalgebra::{DMatrix, DVector};

use super::ConvexStatus;
use crate::error::{Error, Result};

/// A twice-differentiable concave objective.
pub trait ConcaveObjective {
    fn dim(&self) -> usize;
    /// Value, or NaN outside the natural domain.
    fn value(&self, y: &DVector<f64>) -> f64;
    fn gradient(&self, y: &DVector<f64>) -> DVector<f64>;
    /// Defaults to central differences of the gradient.
    fn hessian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let k = self.dim();
        let mut h = DMatrix::zeros(k, k);
        for j in 0..k {
            let step = 1e-6 * (1.0 + y[j].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += step;
            ym[j] -= step;
            let col = (self.gradient(&yp) - self.gradient(&ym)) / (2.0 * step);
            h.set_column(j, &col);
        }
        (&h + h.transpose()) * 0.5
    }
}

/// Box bounds plus linear inequality rows.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearConstraints {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        let k = lower.len();
        Self { lower, upper, a: DMatrix::zeros(0, k), b: DVector::zeros(0) }
    }

    fn count(&self) -> usize {
        2 * self.lower.len() + self.a.nrows()
    }

    /// All slacks, boxes first. Non-positive entries mean infeasible.
    fn slacks(&self, y: &DVector<f64>) -> DVector<f64> {
        let k = y.len();
        let ay = &self.a * y;
        DVector::from_fn(self.count(), |i, _| {
            if i < k {
                y[i] - self.lower[i]
            } else if i < 2 * k {
                self.upper[i - k] - y[i - k]
            } else {
                self.b[i - 2 * k] - ay[i - 2 * k]
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConcaveOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub mu: f64,
}

impl Default for ConcaveOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_newton: 600, mu: 12.0 }
    }
}

struct Scaled<'a, F: ConcaveObjective + ?Sized> {
    f: &'a F,
    s: f64,
}

/// Maximizes `f` subject to `cons` from a strictly feasible `start`.
///
/// The objective is scaled internally so its gradient at the start has unit
/// ∞-norm; `tol` applies to the scaled problem. The reported objective is
/// unscaled.
pub fn solve_concave<F: ConcaveObjective + ?Sized>(
    f: &F,
    cons: &LinearConstraints,
    start: &DVector<f64>,
    opts: &ConcaveOptions,
) -> Result<(DVector<f64>, ConvexStatus)> {
    let k = f.dim();
    if start.len() != k || cons.lower.len() != k || cons.upper.len() != k || cons.a.ncols() != k {
        return Err(Error::Dimension(format!("concave problem of dimension {k}")));
    }
    let s0 = cons.slacks(start);
    if s0.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InfeasibleStart("start is not strictly inside the constraints".into()));
    }
    let f0 = f.value(start);
    if !f0.is_finite() {
        return Err(Error::InfeasibleStart("objective undefined at start".into()));
    }
    let g0 = f.gradient(start);
    let scale = 1.0 / g0.amax().max(1e-300);
    let sf = Scaled { f, s: scale };
    let n_cons = cons.count() as f64;

    let mut y = start.clone();
    let mut t = 1.0;
    let mut newton = 0usize;
    let mut outer_done = false;
    while !outer_done {
        // Centering on φ_t(y) = −t·f(y) − Σ log s(y).
        loop {
            if newton >= opts.max_newton {
                break;
            }
            let s = cons.slacks(&y);
            let grad_f = sf.f.gradient(&y) * sf.s;
            let hess_f = sf.f.hessian(&y) * sf.s;
            let (g, h) = barrier_derivatives(cons, &s, &grad_f, &hess_f, t);
            let step = match newton_step(&h, &g) {
                Some(d) => d,
                None => break,
            };
            let decrement = -g.dot(&step);
            // g / t is exactly the stationarity residual of the implied duals.
            if g.amax() <= 0.05 * opts.tol * t || decrement <= 1e-20 {
                break;
            }
            newton += 1;
            // Inside the quadratic-convergence region take the pure Newton
            // step; Armijo tests drown in roundoff there.
            if decrement < 0.04 {
                let cand = &y + &step;
                if barrier_value(&sf, cons, &cand, t).is_some() {
                    if cand == y {
                        break;
                    }
                    y = cand;
                    continue;
                }
            }
            let phi0 = barrier_value(&sf, cons, &y, t).expect("current iterate is feasible");
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-16 {
                let cand = &y + &step * alpha;
                if let Some(v) = barrier_value(&sf, cons, &cand, t) {
                    if v <= phi0 - 0.25 * alpha * decrement {
                        y = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if n_cons / t <= opts.tol || newton >= opts.max_newton {
            outer_done = true;
        } else {
            t *= opts.mu;
        }
    }

    // Duals implied by the central path, λ_i = 1/(t s_i).
    let s = cons.slacks(&y);
    let grad = sf.f.gradient(&y) * sf.s;
    let mut resid = grad.clone();
    let mut comp: f64 = 0.0;
    for i in 0..s.len() {
        let lam = 1.0 / (t * s[i]);
        comp = comp.max(lam * s[i]);
        if i < k {
            resid[i] += lam;
        } else if i < 2 * k {
            resid[i - k] -= lam;
        } else {
            resid -= cons.a.row(i - 2 * k).transpose() * lam;
        }
    }
    let kkt = resid.amax().max(comp * n_cons);
    let status = ConvexStatus {
        converged: kkt <= opts.tol,
        iterations: newton,
        kkt_residual: kkt,
        objective: f.value(&y),
    };
    Ok((y, status))
}

fn barrier_value<F: ConcaveObjective + ?Sized>(sf: &Scaled<F>, cons: &LinearConstraints, y: &DVector<f64>, t: f64) -> Option<f64> {
    let s = cons.slacks(y);
    if s.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let fv = sf.f.value(y) * sf.s;
    if !fv.is_finite() {
        return None;
    }
    Some(-t * fv - s.iter().map(|v| v.ln()).sum::<f64>())
}

fn barrier_derivatives(
    cons: &LinearConstraints,
    s: &DVector<f64>,
    grad_f: &DVector<f64>,
    hess_f: &DMatrix<f64>,
    t: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = grad_f.len();
    let mut g = -grad_f * t;
    let mut h = -hess_f * t;
    for i in 0..k {
        let (lo, up) = (s[i], s[i + k]);
        g[i] += -1.0 / lo + 1.0 / up;
        h[(i, i)] += 1.0 / (lo * lo) + 1.0 / (up * up);
    }
    for r in 0..cons.a.nrows() {
        let sv = s[2 * k + r];
        let a = cons.a.row(r).transpose();
        g += &a / sv;
        h += (&a * a.transpose()) / (sv * sv);
    }
    (g, h)
}

fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            return Some(-ch.solve(g));
        }
        reg = if reg == 0.0 { 1e-12 * scale } else { reg * 100.0 };
    }
    None
}
