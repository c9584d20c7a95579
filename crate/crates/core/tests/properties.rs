use std::time::Duration;

use proptest::prelude::*;
use rspca::dual::{baseline1, dual_bound, pla_gap_bound, pla_interpolant, DualOptions};
use rspca::geometry::{cr2_membership, sample_feasible, MEMBERSHIP_TOL};
use rspca::instances::{parse_dense_csv, parse_matrix_market, to_dense_csv, to_matrix_market};
use rspca::oracle::brute_force_opt;
use rspca::primal::{exact_support_objective, greedy_search, multistart, proxy_objective, PrimalContext};
use rspca::rng::{random_subset, seeded, NormalSampler};
use rspca::submatrix::{proposition_cross_check, submatrix_upper_bound, CrossCheck};
use rspca::SymmetricMatrix;

fn random_psd(d: usize, rank: usize, seed: u64) -> SymmetricMatrix {
    let g = NormalSampler::new(seed).matrix(d, rank);
    SymmetricMatrix::new(&g * g.transpose()).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_invariant_under_relabeling(seed in 0u64..10_000, d in 5usize..9, scale in 0.1f64..10.0) {
        let a = random_psd(d, d, seed);
        let (opt, _) = brute_force_opt(&a, 3, 2).unwrap();
        let mut perm: Vec<usize> = (0..d).collect();
        perm.rotate_left((seed as usize) % d);
        perm.swap(0, d - 1);
        let (popt, _) = brute_force_opt(&a.permuted(&perm).unwrap(), 3, 2).unwrap();
        prop_assert!(close(opt, popt, 1e-9));
        let (sopt, _) = brute_force_opt(&a.scaled(scale), 3, 2).unwrap();
        prop_assert!(close(sopt, scale * opt, 1e-9));
    }

    #[test]
    fn greedy_is_monotone_and_consistent(seed in 0u64..10_000, d in 6usize..30, rank in 1usize..30) {
        let k = 2 + (seed as usize) % (d / 2);
        let r = 1 + (seed as usize / 7) % k.min(3);
        let a = random_psd(d, rank.min(d), seed);
        let s0 = random_subset(&mut seeded(seed), d, k);
        let sol = greedy_search(&a, k, r, &s0, d).unwrap();
        for w in sol.trajectory.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        prop_assert_eq!(sol.trajectory.len(), sol.iterations + 1);
        let (f, _) = exact_support_objective(&a, &sol.support, r).unwrap();
        prop_assert!(close(f, sol.objective, 1e-10));
        let (f0, _) = exact_support_objective(&a, &s0, r).unwrap();
        prop_assert!(sol.objective >= f0 - 1e-9 * f0.abs().max(1.0));
        prop_assert!(sol.factor.orthonormality_defect() <= 1e-9);
        prop_assert!(sol.support.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn proxy_plus_objective_is_trace(seed in 0u64..10_000, d in 3usize..25) {
        let a = random_psd(d, d, seed);
        let k = 1 + (seed as usize) % d;
        let r = 1 + (seed as usize / 3) % k;
        let s = random_subset(&mut seeded(seed ^ 0xabc), d, k);
        let ctx = PrimalContext::new(&a).unwrap();
        let (f, factor) = exact_support_objective(&a, &s, r).unwrap();
        let fbar = proxy_objective(ctx.sqrt(), &factor.support, &factor.block).unwrap();
        prop_assert!((fbar + f - a.trace()).abs() <= 1e-8 * a.trace().max(1.0));
    }

    #[test]
    fn multistart_never_beats_oracle(seed in 0u64..10_000) {
        let a = random_psd(9, 9, seed);
        let (opt, _) = brute_force_opt(&a, 3, 2).unwrap();
        let sol = multistart(&a, 3, 2, 10, seed).unwrap();
        prop_assert!(sol.objective <= opt + 1e-9 * opt);
        prop_assert!(baseline1(&a, 3).unwrap() >= opt - 1e-9 * opt);
    }

    #[test]
    fn feasible_samples_lie_in_cr2(seed in 0u64..100_000, d in 2usize..20) {
        let k = 1 + (seed as usize) % d;
        let r = 1 + (seed as usize / 5) % k;
        let v = sample_feasible(d, r, k, seed).unwrap();
        prop_assert!(v.orthonormality_defect() <= 1e-10);
        prop_assert!(cr2_membership(&v.to_dense(), k, MEMBERSHIP_TOL).unwrap().is_member());
    }

    #[test]
    fn cross_term_inequality(seed in 0u64..100_000, m in 1usize..7, n in 1usize..7, r in 1usize..4) {
        let x = NormalSampler::new(seed).matrix(m, n);
        let res = proposition_cross_check(&x, r.min(m + n), 20, seed).unwrap();
        prop_assert!(matches!(res, CrossCheck::Pass { .. }), "{:?}", res);
    }

    #[test]
    fn interpolant_overestimates_within_gap(theta in 0.01f64..2.0, n in 1usize..60, t in -1.0f64..1.0) {
        let g = t * theta;
        let gap = pla_interpolant(g, theta, n) - g * g;
        prop_assert!(gap >= -1e-12);
        prop_assert!(gap <= pla_gap_bound(theta, n) + 1e-12);
    }

    #[test]
    fn matrix_files_round_trip(seed in 0u64..10_000, d in 1usize..12) {
        let a = random_psd(d, d, seed);
        prop_assert_eq!(parse_dense_csv(&to_dense_csv(&a)).unwrap(), a.clone());
        prop_assert_eq!(parse_matrix_market(&to_matrix_market(&a)).unwrap(), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dual_bound_is_valid(seed in 0u64..10_000, rank in 1usize..7) {
        let a = random_psd(6, rank, seed);
        let k = 2 + (seed as usize) % 2;
        let r = 1 + (seed as usize / 2) % k.min(2);
        let (opt, _) = brute_force_opt(&a, k, r).unwrap();
        let mut options = DualOptions::default();
        options.bnb.time_limit = Duration::from_millis(500);
        let rep = dual_bound(&a, k, r, &options).unwrap();
        prop_assert!(rep.upper_bound >= opt - 1e-6, "ub {} < opt {}", rep.upper_bound, opt);
        prop_assert!(rep.upper_bound <= rep.root_bound + 1e-9);
    }

    #[test]
    fn submatrix_bound_is_valid(seed in 0u64..10_000) {
        let a = random_psd(9, 9, seed);
        let (opt, _) = brute_force_opt(&a, 3, 2).unwrap();
        let (ub, plan) = submatrix_upper_bound(&a, 3, 2, 2.0, Duration::from_millis(300)).unwrap();
        prop_assert!(ub >= opt - 1e-6);
        prop_assert_eq!(plan.s.len(), 6);
        prop_assert_eq!(plan.per_ktilde.len(), 4);
    }
}
