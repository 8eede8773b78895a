//! Recovering a one-hot association from the continuous relaxation.

use std::time::Instant;

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fp::fp_solve;
use crate::model::{argmax_rows, dpe_objective, one_hot, Decision, NetworkInstance};
use crate::sdp::leading_eigenvector;
use crate::solver::ConcaveOptions;
use crate::transforms::update_auxiliary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Technique {
    Hungarian,
    Randomized,
    Secondary,
    Rank1,
    Greedy,
}

impl Technique {
    pub const ALL: [Technique; 5] =
        [Technique::Hungarian, Technique::Randomized, Technique::Secondary, Technique::Rank1, Technique::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Hungarian => "hungarian",
            Technique::Randomized => "randomized",
            Technique::Secondary => "secondary",
            Technique::Rank1 => "rank1",
            Technique::Greedy => "greedy",
        }
    }
}

/// Weight resolution used to turn scores into integers for the assignment solver.
const HUNGARIAN_SCALE: f64 = 1e9;

/// Min-cost matching on 1 − x with every server column repeated ⌈N/M⌉ times.
pub fn round_hungarian(x_cont: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = x_cont.shape();
    let copies = n.div_ceil(m);
    let cols = m * copies;
    // Maximizing Σx over the matching is the same as minimizing Σ(1 − x).
    let weights = Matrix::from_fn(n, cols, |(i, c)| (x_cont[(i, c / copies)].clamp(0.0, 1.0) * HUNGARIAN_SCALE).round() as i64);
    let (_, assign) = kuhn_munkres(&weights);
    let servers: Vec<usize> = assign.iter().map(|&c| c / copies).collect();
    one_hot(&servers, m)
}

/// Samples each user's server from its normalized row.
pub fn round_randomized(x_cont: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let (n, m) = x_cont.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut servers = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..m).map(|j| x_cont[(i, j)].max(0.0)).collect();
        let total: f64 = row.iter().sum();
        let u: f64 = rng.random();
        if !(total > 0.0) {
            servers.push(0);
            continue;
        }
        let target = u * total;
        let mut acc = 0.0;
        let mut pick = m - 1;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if target < acc {
                pick = j;
                break;
            }
        }
        // Guard against landing on a zero-probability tail through roundoff.
        while row[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        servers.push(pick);
    }
    one_hot(&servers, m)
}

/// Nearest one-hot matrix in Frobenius norm; separable into row argmaxes.
pub fn round_secondary(x_cont: &DMatrix<f64>) -> DMatrix<f64> {
    one_hot(&argmax_rows(x_cont), x_cont.ncols())
}

/// Leading eigenvector of the lifted matrix, scaled so the homogenizing
/// coordinate is 1, then row argmax on its x block.
pub fn round_rank1(s: &DMatrix<f64>, n_users: usize, n_servers: usize) -> DMatrix<f64> {
    let mut v = leading_eigenvector(s);
    let d = v.len() - 1;
    if v[d] < 0.0 {
        v = -v;
    }
    if v[d].abs() > 1e-12 {
        v /= v[d];
    }
    let x = DMatrix::from_fn(n_users, n_servers, |i, j| v[crate::qcqp::x_index(n_users, i, j)]);
    round_secondary(&x)
}

/// Repeatedly fixes the globally largest remaining entry.
pub fn round_greedy(x_cont: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = x_cont.shape();
    let mut servers = vec![usize::MAX; n];
    for _ in 0..n {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..n).filter(|&i| servers[i] == usize::MAX) {
            for j in 0..m {
                if best.is_none_or(|(bi, bj)| x_cont[(i, j)] > x_cont[(bi, bj)]) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("a free row remains");
        servers[i] = j;
    }
    one_hot(&servers, m)
}

/// Applies one technique.
pub fn round_with(technique: Technique, s: &DMatrix<f64>, x_cont: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    match technique {
        Technique::Hungarian => round_hungarian(x_cont),
        Technique::Randomized => round_randomized(x_cont, seed),
        Technique::Secondary => round_secondary(x_cont),
        Technique::Rank1 => round_rank1(s, x_cont.nrows(), x_cont.ncols()),
        Technique::Greedy => round_greedy(x_cont),
    }
}

/// True when x is binary with unit row sums.
pub fn is_one_hot(x: &DMatrix<f64>) -> bool {
    (0..x.nrows()).all(|i| {
        let row = x.row(i);
        row.iter().all(|&v| v == 0.0 || v == 1.0) && row.sum() == 1.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundingSummary {
    pub technique: Technique,
    pub mean_objective: f64,
    pub mean_wall_ms: f64,
    pub all_feasible: bool,
    pub repeats: usize,
}

/// Rounds with each technique, re-optimizes resources with `fp_solve` and
/// scores the result by DPE. `base` supplies φ_off, γ and the starting
/// resources; shares are scaled down where a rounded x overloads a server.
#[allow(clippy::too_many_arguments)]
pub fn compare_roundings(
    inst: &NetworkInstance,
    base: &Decision,
    s: &DMatrix<f64>,
    x_cont: &DMatrix<f64>,
    repeats: usize,
    seed: u64,
    eps1: f64,
    max_rounds: usize,
    opts: &ConcaveOptions,
) -> Result<Vec<RoundingSummary>> {
    let mut out = Vec::new();
    for technique in Technique::ALL {
        let (mut total, mut ms, mut feasible) = (0.0, 0.0, true);
        for r in 0..repeats {
            let t0 = Instant::now();
            let x = round_with(technique, s, x_cont, seed.wrapping_add(r as u64));
            let elapsed = t0.elapsed().as_secs_f64() * 1e3;
            feasible &= is_one_hot(&x);
            let mut dec = base.clone();
            dec.x = x;
            dec.repair_budgets();
            let aux = update_auxiliary(inst, &dec);
            let (dec, _) = fp_solve(inst, &dec, &aux, eps1, max_rounds, opts)?;
            total += dpe_objective(inst, &dec)?;
            ms += elapsed;
        }
        let k = repeats.max(1) as f64;
        out.push(RoundingSummary {
            technique,
            mean_objective: total / k,
            mean_wall_ms: ms / k,
            all_feasible: feasible,
            repeats,
        });
    }
    Ok(out)
}
