use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use conformable::control::{build_gramian, exact_null_control_semilinear, synthesize_null_control, verify_null_inequality};
use conformable::evolution::{
    build_kernel, build_propagator, conformable_residual, generator_envelope, oracle_matrix, propagate_forced_oracle,
    regularized_residual, OperatorFamily, PropagatorOptions, PropagatorTable,
};
use conformable::mild::{n_constant, picard_solve, variation_of_constants, ControlProblem};
use conformable::{FractionalOrder, GridFunction, TimeGrid};

fn grid(alpha: f64, t0: f64, t1: f64, n: usize) -> TimeGrid {
    TimeGrid::from_tau(FractionalOrder::new(alpha).unwrap(), t0, t1, n).unwrap()
}

fn heat(p: f64, modes: usize) -> OperatorFamily {
    OperatorFamily::spectral_heat(move |_| p, modes).unwrap()
}

fn dense(family: &OperatorFamily, g: &TimeGrid) -> PropagatorTable {
    build_propagator(family, g, PropagatorOptions::default()).unwrap()
}

fn vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_factors_are_contractions(p in 0.0f64..5.0, alpha in 0.2f64..=1.0, n in 5usize..60) {
        let g = grid(alpha, 0.0, 1.0, n);
        let table = build_propagator(&heat(p, 5), &g, PropagatorOptions::default()).unwrap();
        for mode in 1..=5 {
            for i in 0..n {
                prop_assert_eq!(table.mode_factor(mode, i, i).unwrap(), 1.0);
                for j in 0..i {
                    let f = table.mode_factor(mode, i, j).unwrap();
                    prop_assert!(f > 0.0 && f <= 1.0);
                }
            }
        }
    }

    #[test]
    fn mild_map_is_linear(c in -2.0f64..2.0, d in -2.0f64..2.0, seed in 0u64..1000) {
        let g = grid(0.7, 0.0, 1.0, 31);
        let table = dense(&OperatorFamily::random_smooth(3, seed).unwrap(), &g);
        let x = vector(&[1.0, -0.5, 0.25]);
        let y = vector(&[-0.3, 0.8, 0.1]);
        let gx: Vec<_> = (0..31).map(|i| vector(&[(i as f64).sin(), 0.1, 0.0])).collect();
        let gy: Vec<_> = (0..31).map(|i| vector(&[0.0, 0.2 * i as f64, -1.0])).collect();
        let gz: Vec<_> = gx.iter().zip(&gy).map(|(a, b)| a * c + b * d).collect();
        let lhs = variation_of_constants(&table, &(&x * c + &y * d), &gz);
        let sx = variation_of_constants(&table, &x, &gx);
        let sy = variation_of_constants(&table, &y, &gy);
        for i in 0..31 {
            prop_assert!((&lhs[i] - (&sx[i] * c + &sy[i] * d)).norm() <= 1e-10);
        }
    }

    #[test]
    fn gramian_is_symmetric_and_control_reaches_zero(
        seed in 0u64..1000,
        b in proptest::collection::vec(-1.0f64..1.0, 6),
        x0 in proptest::collection::vec(-2.0f64..2.0, 3),
    ) {
        let g = grid(0.8, 0.0, 1.0, 41);
        let family = OperatorFamily::random_smooth(3, seed).unwrap();
        let table = dense(&family, &g);
        let mut b = DMatrix::from_row_slice(3, 2, &b);
        b[(0, 0)] += 2.0;
        b[(1, 1)] += 2.0;
        b[(2, 0)] += 1.0;
        b[(2, 1)] -= 1.0;
        let gram = build_gramian(&family, &b, &table).unwrap();
        prop_assert!(gram.symmetry_defect() <= 1e-12);
        prop_assert!(gram.w().symmetric_eigenvalues().min() > 0.0);
        let z0 = vector(&x0);
        let forcing = GridFunction::sample(g.clone(), |t| vector(&[t.cos(), 0.0, 0.3])).unwrap();
        let out = synthesize_null_control(&gram, &z0, &forcing).unwrap();
        prop_assert!(out.final_state_norm <= 1e-8 * z0.norm().max(1.0));
    }

    #[test]
    fn picard_residual_is_below_tolerance(c in -1.0f64..1.0, p in 0.0f64..2.0) {
        let g = grid(0.6, 0.0, 1.0, 101);
        let family = heat(p, 4);
        let table = dense(&family, &g);
        let problem = ControlProblem::new(family, g, vector(&[1.0, 0.5, -0.5, 0.2]), DMatrix::identity(4, 4))
            .unwrap()
            .with_nonlinearity(move |_, x: &DVector<f64>| x.map(|v| c * v.sin()), c.abs());
        let out = picard_solve(&problem, &table).unwrap();
        prop_assert!(out.residual <= 10.0 * problem.picard_tol);
    }
}

#[test]
fn composition_and_identity_on_dense_backend() {
    let g = grid(0.75, 0.5, 1.5, 61);
    let table = dense(&OperatorFamily::random_smooth(3, 5).unwrap(), &g);
    for i in 0..61 {
        assert!((table.matrix(i, i) - DMatrix::identity(3, 3)).norm() < 1e-14);
    }
    assert!(table.composition_defect() < 1e-5);
}

#[test]
fn dense_matches_oracle_and_converges_at_second_order() {
    let family = OperatorFamily::random_smooth(3, 9).unwrap();
    let order = FractionalOrder::new(0.7).unwrap();
    let err = |n: usize| {
        let g = grid(0.7, 0.2, 1.2, n);
        let table = dense(&family, &g);
        let exact = oracle_matrix(&family, order, g.t(0), g.t(n - 1), 2000).unwrap();
        (table.matrix(n - 1, 0) - exact).norm()
    };
    let (coarse, fine) = (err(41), err(81));
    assert!(fine < 1e-4);
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn kernel_series_terms_eventually_decrease() {
    let family = OperatorFamily::random_smooth(3, 2).unwrap();
    let g = grid(0.75, 0.5, 1.5, 41);
    let kernel = build_kernel(&family, &g, 200, 1e-12).unwrap();
    let norms = kernel.term_norms();
    assert!(norms.len() >= 3);
    let tail = &norms[norms.len().min(3) - 1..];
    assert!(tail.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    assert!(*norms.last().unwrap() <= 1e-12);
}

#[test]
fn propagator_is_continuous_at_first_order() {
    let family = OperatorFamily::random_smooth(2, 4).unwrap();
    let step = |n: usize| dense(&family, &grid(0.8, 0.0, 1.0, n)).max_step_change();
    let ratio = step(41) / step(81);
    assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn growth_estimate_is_stable_under_refinement() {
    let family = OperatorFamily::random_smooth(3, 6).unwrap();
    let m = |n: usize| dense(&family, &grid(0.8, 0.0, 1.0, n)).m_est();
    let (a, b) = (m(41), m(81));
    assert!((a - b).abs() / b < 1e-2, "{a} {b}");
}

#[test]
fn regularized_residual_shrinks_with_the_cut() {
    let family = OperatorFamily::random_smooth(3, 8).unwrap();
    let g = grid(0.75, 0.5, 1.5, 81);
    let table = dense(&family, &g);
    let (i, j) = (60, 10);
    let r: Vec<f64> = [4, 2, 1].iter().map(|&cut| regularized_residual(&table, &family, i, j, cut).unwrap()).collect();
    assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
    let plain = conformable_residual(&table, &family, i, j).unwrap();
    assert!(plain < r[2]);
}

#[test]
fn generator_envelope_is_finite() {
    let family = OperatorFamily::random_smooth(3, 3).unwrap();
    let table = dense(&family, &grid(0.75, 0.5, 1.5, 41));
    let e = generator_envelope(&table, &family, 0);
    assert!(e.is_finite() && e > 0.0);
}

#[test]
fn forced_trajectory_is_second_order_accurate() {
    let family = OperatorFamily::random_smooth(2, 12).unwrap();
    let order = FractionalOrder::new(0.65).unwrap();
    let x0 = vector(&[1.0, -1.0]);
    let g_of = |tau: f64| vector(&[(3.0 * tau).sin(), 0.5]);
    let exact = propagate_forced_oracle(&family, order, order.t_of(0.0), order.t_of(1.0), &x0, |tau| Some(g_of(tau)), 4000)
        .unwrap();
    let err = |n: usize| {
        let g = grid(0.65, 0.0, 1.0, n);
        let table = dense(&family, &g);
        let forcing: Vec<_> = (0..n).map(|i| g_of(g.tau(i))).collect();
        (variation_of_constants(&table, &x0, &forcing)[n - 1].clone() - &exact).norm()
    };
    let ratio = err(41) / err(81);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn n_constant_is_continuous_across_one_half() {
    let at_half = n_constant(0.5, 0.2, 1.3);
    for e in [1e-3, 1e-5, 1e-7] {
        assert!((n_constant(0.5 + e, 0.2, 1.3) - at_half).abs() < 10.0 * e * at_half);
        assert!((n_constant(0.5 - e, 0.2, 1.3) - at_half).abs() < 10.0 * e * at_half);
    }
}

#[test]
fn mode_truncation_is_stable() {
    let run = |modes: usize| {
        let g = grid(0.8, 0.0, 1.0, 201);
        let family = heat(1.0, modes);
        let table = dense(&family, &g);
        let mut x0 = DVector::zeros(modes);
        x0[0] = 1.0;
        x0[1] = -0.5;
        let problem = ControlProblem::new(family.clone(), g, x0, DMatrix::identity(modes, modes))
            .unwrap()
            .with_linear_gain(0.05);
        let gram = build_gramian(&family, &problem.b, &table).unwrap();
        exact_null_control_semilinear(&problem, &gram, &table).unwrap()
    };
    let (six, twelve) = (run(6), run(12));
    assert!(six.final_state_norm <= 1e-8 && twelve.final_state_norm <= 1e-8);
    assert!(twelve.final_state_norm.max(1e-14) <= 10.0 * six.final_state_norm.max(1e-14));
    // Low modes of the control barely move when high modes are added.
    for k in 0..six.control.grid().n_nodes() {
        let a = six.control.value(k).rows(0, 2).into_owned();
        let b = twelve.control.value(k).rows(0, 2).into_owned();
        assert!((a - b).norm() <= 1e-6 * (1.0 + six.control.sup_norm()));
    }
}

#[test]
fn inequality_constant_requires_an_observable_b() {
    let g = grid(0.8, 0.0, 1.0, 101);
    let family = heat(1.0, 5);
    let table = dense(&family, &g);
    let gram = build_gramian(&family, &DMatrix::identity(5, 5), &table).unwrap();
    let (gamma, passes) = verify_null_inequality(&gram, &table, 1.0, 200, 3).unwrap();
    assert!(passes && gamma > 0.0);
    let zero = build_gramian(&family, &DMatrix::zeros(5, 5), &table).unwrap_err();
    assert_eq!(zero.code(), "E_CONTROLLABILITY");
}
