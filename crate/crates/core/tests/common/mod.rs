#![allow(dead_code)]

use daur_core::model::{generate_network, one_hot, Decision, NetworkInstance};
use daur_core::ScenarioParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn instance(n: usize, m: usize, seed: u64) -> NetworkInstance {
    let params = ScenarioParams { n_users: n, n_servers: m, ..ScenarioParams::default() };
    generate_network(&params, seed).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random feasible point with one-hot x, interior ratios and shares that
/// use a random fraction of every server budget.
pub fn random_decision(inst: &NetworkInstance, rng: &mut ChaCha8Rng) -> Decision {
    let (n, m) = (inst.n_users, inst.n_servers);
    let servers: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    let x = one_hot(&servers, m);
    let mut dec = Decision::initial(inst);
    dec.x = x;
    dec.phi_off = DVector::from_fn(n, |_, _| rng.random_range(0.05..0.95));
    dec.gamma = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.1..0.9));
    dec.rho = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
    dec.psi = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
    for j in 0..m {
        for share in [&mut dec.phi_bw, &mut dec.zeta] {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let attached: f64 = (0..n).filter(|&i| servers[i] == j).map(|i| raw[i]).sum();
            let fill = rng.random_range(0.5..1.0);
            for i in 0..n {
                share[(i, j)] = if servers[i] == j { raw[i] / attached * fill } else { raw[i] / n as f64 };
            }
        }
    }
    dec
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Every one-hot association of n users to m servers.
pub fn all_associations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let s = code % m;
                    code /= m;
                    s
                })
                .collect()
        })
        .collect()
}
