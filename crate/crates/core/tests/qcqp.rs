mod common;

use common::{all_associations, instance, random_decision, rng};
use daur_core::fp::p4_value;
use daur_core::model::{cost_components, one_hot, Decision, NetworkInstance};
use daur_core::qcqp::{assemble_qcqp, optimal_gamma, qcqp_objective, stack_q, x_index, QcqpData};
use daur_core::transforms::{association_auxiliary, update_auxiliary};
use daur_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn gamma_examples() {
    assert_eq!(optimal_gamma(1.0).unwrap(), 0.5);
    assert_eq!(optimal_gamma(3.0).unwrap(), 0.25);
    assert!(matches!(optimal_gamma(0.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(optimal_gamma(-1.0), Err(Error::InvalidParameter(_))));
}

/// T_sp + T_sg of pair (0, 0) at split γ, from the cost model.
fn split_delay(inst: &NetworkInstance, dec: &Decision, gamma: f64) -> f64 {
    let mut d = dec.clone();
    d.gamma.fill(gamma);
    let c = cost_components(inst, &d);
    c.t_sp[(0, 0)] + c.t_sg[(0, 0)]
}

fn scan_argmin(inst: &NetworkInstance, dec: &Decision) -> (f64, f64) {
    let points = 10_000;
    let step = 1.0 / (points + 1) as f64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..=points {
        let g = k as f64 * step;
        let v = split_delay(inst, dec, g);
        if v < best.0 {
            best = (v, g);
        }
    }
    (best.1, step)
}

fn attached_pair(mut inst: NetworkInstance, omega_b: f64, eta_gen: Option<f64>) -> (NetworkInstance, Decision) {
    inst.omega_b = omega_b;
    if let Some(e) = eta_gen {
        inst.eta_gen.fill(e);
    }
    let mut dec = Decision::initial(&inst);
    dec.x = one_hot(&vec![0; inst.n_users], inst.n_servers);
    (inst, dec)
}

#[test]
fn single_cycle_count_split_is_half_at_unit_ratio() {
    let base = instance(3, 2, 9);
    let eta = base.eta_s[0];
    let (inst, dec) = attached_pair(base, 1.0, Some(eta));
    let (g, step) = scan_argmin(&inst, &dec);
    assert!((g - optimal_gamma(1.0).unwrap()).abs() <= step, "{g}");
}

#[test]
fn scan_minimum_follows_square_root_rule() {
    for omega_b in [0.5, 1.0, 2.0] {
        for eta_gen in [None, Some(instance(3, 2, 9).eta_s[0])] {
            let (inst, dec) = attached_pair(instance(3, 2, 9), omega_b, eta_gen);
            let (g, step) = scan_argmin(&inst, &dec);
            let expected = 1.0 / (1.0 + (omega_b * inst.eta_gen[0] / inst.eta_s[0]).sqrt());
            assert!((g - expected).abs() <= step, "ω_b {omega_b}: {g} vs {expected}");
        }
    }
}

fn random_q(r: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| r.random_range(0.0..1.0))
}

fn setup(n: usize, m: usize, seed: u64) -> (NetworkInstance, Decision, QcqpData) {
    let inst = instance(n, m, seed);
    let mut r = rng(seed ^ 0xabc);
    let dec = random_decision(&inst, &mut r);
    let aux = association_auxiliary(&inst, &dec);
    let data = assemble_qcqp(&inst, &dec, &aux).unwrap();
    (inst, dec, data)
}

#[test]
fn quadratic_form_matches_direct_double_sum() {
    let mut r = rng(1);
    for trial in 0..100 {
        let (n, m) = (r.random_range(1..6), r.random_range(1..4));
        let (_, _, data) = setup(n, m, trial);
        let q = random_q(&mut r, data.dim());
        let quad = (q.transpose() * &data.p0 * &q)[(0, 0)];
        let mut direct = 0.0;
        for i in 0..n {
            for j in 0..m {
                direct += data.b[(i, j)] * q[x_index(n, i, j)] * q[i];
            }
        }
        assert!((quad - direct).abs() <= 1e-10 * (1.0 + direct.abs()), "trial {trial}");
        let lin: f64 = (0..n).map(|i| data.a[i] * q[i]).sum();
        assert!((data.w0.dot(&q) - lin).abs() <= 1e-10 * (1.0 + lin.abs()));
    }
}

#[test]
fn zero_server_multipliers_give_zero_form() {
    let inst = instance(3, 2, 4);
    let dec = random_decision(&inst, &mut rng(4));
    let mut aux = association_auxiliary(&inst, &dec);
    aux.alpha_s.fill(0.0);
    let data = assemble_qcqp(&inst, &dec, &aux).unwrap();
    assert_eq!(data.b, DMatrix::zeros(3, 2));
    assert_eq!(data.p0, DMatrix::zeros(data.dim(), data.dim()));
}

/// P0 rebuilt from B by its defining placement.
fn rebuild_p0(data: &QcqpData) -> DMatrix<f64> {
    let (n, m) = (data.n_users, data.n_servers);
    let mut p0 = DMatrix::zeros(data.dim(), data.dim());
    for i in 0..n {
        for j in 0..m {
            p0[(i, x_index(n, i, j))] = data.b[(i, j)];
        }
    }
    p0
}

#[test]
fn assembled_p0_is_the_placed_b() {
    let (_, _, data) = setup(4, 3, 2);
    assert_eq!(rebuild_p0(&data), data.p0);
}

#[test]
fn unit_a_selects_offload_ratios() {
    let (_, _, mut data) = setup(4, 2, 3);
    data.a.fill(1.0);
    let mut w0 = DVector::zeros(data.dim());
    for i in 0..data.n_users {
        w0[i] = data.a[i];
    }
    let q = random_q(&mut rng(3), data.dim());
    let phi_sum: f64 = (0..data.n_users).map(|i| q[i]).sum();
    assert!((w0.dot(&q) - phi_sum).abs() < 1e-15);
}

#[test]
fn zero_point_gives_constant() {
    let (_, _, data) = setup(3, 2, 5);
    let q = DVector::zeros(data.dim());
    assert_eq!(qcqp_objective(&data, &q, 0.0, 0.0).unwrap(), data.c);
    assert!(matches!(qcqp_objective(&data, &DVector::zeros(2), 0.0, 0.0), Err(Error::Dimension(_))));
}

#[test]
fn negating_coefficients_negates_variable_part() {
    let (_, _, data) = setup(3, 2, 6);
    let mut neg = data.clone();
    neg.p0 = -&data.p0;
    neg.w0 = -&data.w0;
    neg.c = -data.c;
    let q = random_q(&mut rng(6), data.dim());
    let a = qcqp_objective(&data, &q, 0.0, 0.0).unwrap() - data.c;
    let b = qcqp_objective(&neg, &q, 0.0, 0.0).unwrap() - neg.c;
    assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
}

fn discrete_points(inst: &NetworkInstance, dec: &Decision, grid: &[f64]) -> Vec<Decision> {
    let n = inst.n_users;
    let mut out = Vec::new();
    for assign in all_associations(n, inst.n_servers) {
        let combos = grid.len().pow(n as u32);
        for mut code in 0..combos {
            let mut d = dec.clone();
            d.x = one_hot(&assign, inst.n_servers);
            for i in 0..n {
                d.phi_off[i] = grid[code % grid.len()];
                code /= grid.len();
            }
            out.push(d);
        }
    }
    out
}

/// The min-form at tight bounds is the negated resource-fixed objective
/// evaluated term by term from the cost model.
#[test]
fn min_form_matches_term_wise_objective() {
    for seed in 0..10 {
        let inst = instance(2, 2, seed);
        let dec = random_decision(&inst, &mut rng(seed));
        let aux = association_auxiliary(&inst, &dec);
        let data = assemble_qcqp(&inst, &dec, &aux).unwrap();
        for d in discrete_points(&inst, &dec, &[0.0, 0.3, 0.5, 1.0]) {
            let q = stack_q(&d.phi_off, &d.x);
            let (tu, ts) = data.tight_t(&q);
            let v = qcqp_objective(&data, &q, tu, ts).unwrap();
            let direct = -p4_value(&inst, &d, &aux);
            assert!((v - direct).abs() <= 1e-10 * direct.abs().max(1.0), "seed {seed}: {v} vs {direct}");
        }
    }
}

#[test]
fn min_form_argmin_is_max_form_argmax() {
    for seed in 0..10 {
        let inst = instance(2, 2, 40 + seed);
        let dec = random_decision(&inst, &mut rng(seed));
        let aux = update_auxiliary(&inst, &dec);
        let data = assemble_qcqp(&inst, &dec, &aux).unwrap();
        let points = discrete_points(&inst, &dec, &[0.0, 0.5, 1.0]);
        let argmin = points
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let q = stack_q(&d.phi_off, &d.x);
                let (tu, ts) = data.tight_t(&q);
                (k, qcqp_objective(&data, &q, tu, ts).unwrap())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        let argmax = points
            .iter()
            .enumerate()
            .map(|(k, d)| (k, p4_value(&inst, d, &aux)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        let value = |k: usize| p4_value(&inst, &points[k], &aux);
        assert!(argmin == argmax || (value(argmin) - value(argmax)).abs() <= 1e-12 * value(argmax).abs());
    }
}

#[test]
fn invalid_gamma_is_rejected() {
    let inst = instance(2, 2, 1);
    let mut dec = random_decision(&inst, &mut rng(1));
    let aux = update_auxiliary(&inst, &dec);
    dec.gamma[(1, 1)] = 1.0;
    assert!(matches!(assemble_qcqp(&inst, &dec, &aux), Err(Error::InvalidParameter(_))));
}

#[test]
fn mismatched_aux_is_a_dimension_error() {
    let inst = instance(3, 2, 1);
    let other = instance(2, 2, 1);
    let dec = Decision::initial(&inst);
    let aux = update_auxiliary(&other, &Decision::initial(&other));
    assert!(matches!(assemble_qcqp(&inst, &dec, &aux), Err(Error::Dimension(_))));
}
