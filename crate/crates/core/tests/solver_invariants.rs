use osnst_core::linalg::{orth_basis, Mat};
use osnst_core::model::relative_error;
use osnst_core::solver::{feedback_step, select_support, Osnst};
use osnst_core::{osnst_solve, somp_solve, FeedbackSchedule, ProblemInstance, SolverConfig};
use osnst_testkit::{
    best_single_column, feedback_formula, gaussian, rng, somp_reference, sparse_signal,
};
use proptest::prelude::*;

fn instance(m: usize, n: usize, l: usize, s: usize, seed: u64) -> ProblemInstance {
    let mut g = rng(seed);
    let phi = gaussian(m, n, &mut g);
    let (x, _) = sparse_signal(n, l, s, &mut g);
    ProblemInstance::from_truth(phi, x, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_iteration_is_feasible_orthonormal_and_orthogonal(
        seed in any::<u64>(), s in 2usize..14, slope in 1usize..7,
    ) {
        let p = instance(30, 90, 4, s, seed);
        let cfg = SolverConfig { max_iter: 40, ..SolverConfig::with_schedule(FeedbackSchedule::Linear(slope)) };
        let y_norm = p.y().norm();
        for state in Osnst::new(&p, &cfg).unwrap() {
            let state = state.unwrap();
            let feas = (p.phi() * &state.x - p.y()).norm();
            prop_assert!(feas <= 1e-10 * y_norm, "k={} infeasible {feas}", state.k);

            let q = orth_basis(&state.x, cfg.rank_tol).unwrap();
            let gap = (q.tr_mul(&q) - Mat::identity(q.ncols(), q.ncols())).amax();
            prop_assert!(gap <= 1e-12);

            let block = p.phi().select_columns(&state.selection.support);
            let ortho = block.tr_mul(&(p.phi() * &state.w - p.y())).norm();
            prop_assert!(ortho <= 1e-10 * y_norm, "k={} feedback residual {ortho}", state.k);
            prop_assert_eq!(state.selection.support.len(), cfg.schedule.eval(state.k, 29));
        }
    }

    #[test]
    fn selection_ignores_right_factors(seed in any::<u64>()) {
        let mut g = rng(seed);
        let x = gaussian(40, 3, &mut g);
        let base = select_support(&x, 7, 1e-10).unwrap();
        let mut sorted = base.scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted[6] - sorted[7] > 1e-8);
        let factor = gaussian(3, 3, &mut g);
        prop_assume!(factor.determinant().abs() > 1e-3);
        let moved = select_support(&(&x * factor), 7, 1e-10).unwrap();
        prop_assert_eq!(moved.support, base.support);
    }
}

#[test]
fn exact_support_is_a_fixpoint() {
    for seed in 0..20 {
        let p = instance(25, 70, 3, 6, 1000 + seed);
        let truth = p.truth().unwrap();
        let mut t = p.true_support().unwrap().to_vec();
        for i in 0..4 {
            if !t.contains(&i) {
                t.push(i);
            }
        }
        t.sort_unstable();
        let w = feedback_step(&p, &t).unwrap();
        for &i in p.true_support().unwrap() {
            for j in 0..3 {
                assert!((w[(i, j)] - truth[(i, j)]).abs() <= 1e-8 * truth.amax());
            }
        }
        assert!(relative_error(truth, &w) < 1e-8);
        assert!((p.phi() * &w - p.y()).norm() <= 1e-12 * p.y().norm());
    }
}

#[test]
fn feedback_matches_displayed_formula() {
    for seed in 0..30 {
        let mut g = rng(seed);
        let phi = gaussian(10, 25, &mut g);
        let y = gaussian(10, 3, &mut g);
        let p = ProblemInstance::new(phi.clone(), y).unwrap();
        let pinv = osnst_core::RowPseudoInverse::new(&phi).unwrap();
        let w_prev = gaussian(25, 3, &mut g);
        let x = osnst_core::solver::nst_project(&p, &pinv, &w_prev).unwrap();
        let t: Vec<usize> = (0..6).map(|i| (4 * i + seed as usize) % 25).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let ours = feedback_step(&p, &t).unwrap();
        let oracle = feedback_formula(&phi, &x, &t);
        assert!((ours - &oracle).amax() <= 1e-8 * oracle.amax().max(1.0));
    }
}

#[test]
fn single_atom_matches_exhaustive_column_search() {
    for seed in 0..40 {
        let p = instance(20, 60, 1, 1, 500 + seed);
        let (j, coef, _) = best_single_column(p.phi(), p.y());
        let cfg = SolverConfig { record_supports: true, ..SolverConfig::with_schedule(FeedbackSchedule::Linear(1)) };
        let r = osnst_solve(&p, &cfg).unwrap();
        assert_eq!(r.support_history[0], vec![j], "seed {seed}");
        assert_eq!(r.iterations, 1);
        assert_eq!(osnst_core::model::row_support(&r.estimate), vec![j]);
        assert!((r.estimate[(j, 0)] - coef[0]).abs() < 1e-10 * coef[0].abs().max(1.0));
        assert_eq!(p.true_support().unwrap(), &[j]);
    }
}

#[test]
fn somp_matches_reference_greedy() {
    for seed in 0..30 {
        let p = instance(15, 40, 3, 5, 700 + seed);
        let order = somp_reference(p.phi(), p.y(), 5);
        let r = somp_solve(&p, 5).unwrap();
        let mut expected = order.clone();
        expected.sort_unstable();
        assert_eq!(r.support, expected, "seed {seed}");
        for (k, step) in r.support_history.iter().enumerate() {
            let mut prefix = order[..=k].to_vec();
            prefix.sort_unstable();
            assert_eq!(step, &prefix);
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let p = instance(30, 90, 4, 10, 99);
    let cfg = SolverConfig { record_supports: true, ..SolverConfig::default() };
    let a = osnst_solve(&p, &cfg).unwrap();
    let b = osnst_solve(&p, &cfg).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.support_history, b.support_history);
    assert_eq!(a.residual_history, b.residual_history);
}
