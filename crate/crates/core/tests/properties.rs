mod common;

use common::{all_associations, instance, random_decision, rng};
use daur_core::fp::{p4_value, p5_value};
use daur_core::model::{cost_components, dpe_objective, one_hot, transmission_rate};
use daur_core::qcqp::{assemble_qcqp, stack_q, unstack_q, x_index};
use daur_core::rounding::{is_one_hot, round_with, Technique};
use daur_core::sdp::{dc_penalty, lift};
use daur_core::transforms::{association_auxiliary, server_cost_upsilon, update_auxiliary};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rate_increases_in_power_gain_and_band(seed in 0u64..1000, n in 0usize..10, m in 0usize..2,
                                             bw in 0.01f64..0.99, rho in 0.01f64..0.99, step in 1e-3f64..0.01) {
        let inst = instance(10, 2, seed);
        let base = transmission_rate(&inst, n, m, bw, rho).unwrap();
        prop_assert!(transmission_rate(&inst, n, m, bw, rho + step).unwrap() > base);
        // Saturates at low SNR, so only non-decreasing in the band share.
        prop_assert!(transmission_rate(&inst, n, m, bw + step, rho).unwrap() >= base);
        let mut louder = inst.clone();
        louder.gain[(n, m)] *= 1.0 + step;
        prop_assert!(transmission_rate(&louder, n, m, bw, rho).unwrap() > base);
    }

    #[test]
    fn objective_scales_with_preference_weights(seed in 0u64..1000, k in 0.01f64..100.0) {
        let inst = instance(5, 2, seed);
        let dec = random_decision(&inst, &mut rng(seed));
        let mut scaled = inst.clone();
        scaled.c_u *= k;
        scaled.c_s *= k;
        let (a, b) = (dpe_objective(&inst, &dec).unwrap(), dpe_objective(&scaled, &dec).unwrap());
        prop_assert!((b - k * a).abs() <= 1e-12 * (k * a).abs());
    }

    #[test]
    fn interior_decisions_have_positive_costs(seed in 0u64..1000) {
        let inst = instance(5, 3, seed);
        let dec = random_decision(&inst, &mut rng(seed));
        let c = cost_components(&inst, &dec);
        for i in 0..5 {
            prop_assert!(c.t_up[i] > 0.0 && c.e_up[i] > 0.0 && c.cost_u[i] > 0.0);
            for j in 0..3 {
                prop_assert!(c.cost_s[(i, j)] > 0.0);
                if dec.x[(i, j)] == 1.0 {
                    for v in [c.t_ut[(i, j)], c.e_ut[(i, j)], c.t_sp[(i, j)], c.e_sp[(i, j)], c.t_sg[(i, j)], c.e_sg[(i, j)]] {
                        prop_assert!(v > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn upsilon_form_bounds_ratio_form(seed in 0u64..1000, factor in 0.05f64..20.0) {
        let inst = instance(4, 2, seed);
        let dec = random_decision(&inst, &mut rng(seed));
        let aux = update_auxiliary(&inst, &dec);
        let costs = cost_components(&inst, &dec);
        for i in 0..4 {
            for j in 0..2 {
                if dec.x[(i, j)] == 1.0 {
                    let exact = server_cost_upsilon(&inst, &dec, i, j, aux.upsilon[(i, j)]);
                    prop_assert!((exact - costs.cost_s[(i, j)]).abs() <= 1e-9 * costs.cost_s[(i, j)]);
                    let skewed = server_cost_upsilon(&inst, &dec, i, j, aux.upsilon[(i, j)] * factor);
                    prop_assert!(skewed >= costs.cost_s[(i, j)] * (1.0 - 1e-12));
                }
            }
        }
        let skewed = aux.upsilon.map(|u| u * factor);
        prop_assert!(p5_value(&inst, &dec, &aux, &skewed) <= p4_value(&inst, &dec, &aux) + 1e-9);
    }

    #[test]
    fn every_rounding_is_one_hot(n in 1usize..12, m in 1usize..5, seed in 0u64..1000,
                                 vals in prop::collection::vec(-0.2f64..1.2, 60)) {
        let x = DMatrix::from_fn(n, m, |i, j| vals[(i * m + j) % vals.len()]);
        let assign: Vec<usize> = (0..n).map(|i| i % m).collect();
        let s = lift(&stack_q(&DVector::from_element(n, 0.5), &one_hot(&assign, m)));
        for t in Technique::ALL {
            prop_assert!(is_one_hot(&round_with(t, &s, &x, seed)));
        }
    }

    #[test]
    fn secondary_is_nearest_one_hot(n in 1usize..4, m in 1usize..4, vals in prop::collection::vec(0.0f64..1.0, 9)) {
        let x = DMatrix::from_fn(n, m, |i, j| vals[i * 3 + j]);
        let got = round_with(Technique::Secondary, &DMatrix::zeros(1, 1), &x, 0);
        let best = all_associations(n, m)
            .into_iter()
            .map(|a| (&one_hot(&a, m) - &x).norm_squared())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((&got - &x).norm_squared() <= best + 1e-12);
    }

    #[test]
    fn penalty_is_nonnegative(k in 1usize..7, vals in prop::collection::vec(-1.0f64..1.0, 49)) {
        let g = DMatrix::from_fn(k, k, |i, j| vals[i * 7 + j]);
        let s = &g * g.transpose();
        prop_assert!(dc_penalty(&s).unwrap() >= -1e-8 * s.trace().max(1.0));
    }

    #[test]
    fn stacking_round_trips(n in 1usize..8, m in 1usize..4, vals in prop::collection::vec(0.0f64..1.0, 40)) {
        let phi = DVector::from_fn(n, |i, _| vals[i]);
        let x = DMatrix::from_fn(n, m, |i, j| vals[8 + i * 4 + j]);
        let q = stack_q(&phi, &x);
        prop_assert_eq!(q.len(), n + n * m);
        prop_assert_eq!(q[x_index(n, n - 1, m - 1)], x[(n - 1, m - 1)]);
        let (p2, x2) = unstack_q(&q, n, m);
        prop_assert_eq!(p2, phi);
        prop_assert_eq!(x2, x);
    }

    #[test]
    fn quadratic_form_equivalence(seed in 0u64..1000, n in 1usize..6, m in 1usize..4,
                                  vals in prop::collection::vec(0.0f64..1.0, 30)) {
        let inst = instance(n, m, seed);
        let dec = random_decision(&inst, &mut rng(seed));
        let data = assemble_qcqp(&inst, &dec, &association_auxiliary(&inst, &dec)).unwrap();
        let q = DVector::from_fn(data.dim(), |k, _| vals[k % vals.len()]);
        let quad = (q.transpose() * &data.p0 * &q)[(0, 0)];
        let mut direct = 0.0;
        for i in 0..n {
            for j in 0..m {
                direct += data.b[(i, j)] * q[x_index(n, i, j)] * q[i];
            }
        }
        prop_assert!((quad - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }
}
