use lsnsum::corrstruct::{build_natural, precision_summary, LognormalSumSpec, DEFAULT_ZERO_TOL};
use lsnsum::dist::lsn_moments;
use lsnsum::fit::{fit_lsn, sum_moments};
use lsnsum::probscale::{lsn_tail_slopes, scln_tail_slopes};
use lsnsum::NATS_PER_DB;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn equicorrelated(mu_db: Vec<f64>, sigma_db: Vec<f64>, rho: f64) -> LognormalSumSpec {
    let n = mu_db.len();
    let corr = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
    LognormalSumSpec::new(mu_db, sigma_db, corr).unwrap()
}

prop_compose! {
    fn heterogeneous_spec()(n in 1usize..=12)(
        mu_db in prop::collection::vec(-10.0f64..10.0, n),
        sigma_db in prop::collection::vec(1.0f64..12.0, n),
        rho in 0.0f64..0.95,
    ) -> LognormalSumSpec {
        equicorrelated(mu_db, sigma_db, rho)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_and_lower_slope_are_matched(spec in heterogeneous_spec()) {
        let r = fit_lsn(&spec).unwrap();
        let fitted = lsn_moments(&r.params).unwrap();
        prop_assert!((fitted.mean / r.moments.mean - 1.0).abs() <= 1e-8);
        prop_assert!((fitted.variance / r.moments.variance - 1.0).abs() <= 1e-8);
        let lower = lsn_tail_slopes(&r.params).lower;
        let target = scln_tail_slopes(&r.precision).lower;
        prop_assert!((lower / target - 1.0).abs() <= 1e-10);
        prop_assert!(r.params.lambda >= 0.0);
    }

    #[test]
    fn common_mean_shift_moves_only_eps(spec in heterogeneous_spec(), c_db in -20.0f64..20.0) {
        let shifted = LognormalSumSpec::new(
            spec.mu_db().iter().map(|m| m + c_db).collect(),
            spec.sigma_db().to_vec(),
            spec.corr().clone(),
        )
        .unwrap();
        let a = fit_lsn(&spec).unwrap().params;
        let b = fit_lsn(&shifted).unwrap().params;
        prop_assert!((a.lambda - b.lambda).abs() <= 1e-12 * a.lambda.max(1.0));
        prop_assert!((a.omega - b.omega).abs() <= 1e-12 * a.omega);
        prop_assert!((b.eps_db() - a.eps_db() - c_db).abs() <= 1e-9);
    }

    #[test]
    fn component_order_does_not_matter(spec in heterogeneous_spec(), seed in any::<u64>()) {
        let n = spec.n();
        // deterministic shuffle from the seed
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let permuted = spec.permuted(&perm).unwrap();

        let a = precision_summary(&build_natural(&spec).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        let b = precision_summary(&build_natural(&permuted).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((a.row_sums[i] - b.row_sums[k]).abs() <= 1e-9 * a.row_sums.amax());
        }
        prop_assert!((a.sum_b_tilde / b.sum_b_tilde - 1.0).abs() <= 1e-10);
        prop_assert!((a.max_diag_b_tilde / b.max_diag_b_tilde - 1.0).abs() <= 1e-10);

        let fa = fit_lsn(&spec).unwrap().params;
        let fb = fit_lsn(&permuted).unwrap().params;
        prop_assert!((fa.lambda - fb.lambda).abs() <= 1e-8 * fa.lambda.max(1.0));
        prop_assert!((fa.omega / fb.omega - 1.0).abs() <= 1e-10);
        prop_assert!((fa.eps - fb.eps).abs() <= 1e-10 * fa.eps.abs().max(1.0));
    }

    #[test]
    fn single_component_is_always_lognormal(mu_db in -30.0f64..30.0, sigma_db in 0.5f64..15.0) {
        let spec = LognormalSumSpec::homogeneous(1, mu_db, sigma_db, 0.0).unwrap();
        let r = fit_lsn(&spec).unwrap();
        prop_assert!(r.params.lambda <= 1e-8);
        prop_assert!((r.params.eps - NATS_PER_DB * mu_db).abs() <= 1e-8);
        prop_assert!((r.params.omega - NATS_PER_DB * sigma_db).abs() <= 1e-8);
    }
}

#[test]
fn lambda_grows_with_spread() {
    for n in [2, 8, 20] {
        for rho in [0.0, 0.3, 0.7, 0.9] {
            let mut prev = -1.0;
            for sigma_db in [1.0, 3.0, 6.0, 9.0, 12.0] {
                let spec = LognormalSumSpec::homogeneous(n, 0.0, sigma_db, rho).unwrap();
                let lambda = fit_lsn(&spec).unwrap().params.lambda;
                assert!(lambda > prev, "N={n} rho={rho} sigma={sigma_db}: {lambda} <= {prev}");
                prev = lambda;
            }
        }
    }
}

#[test]
fn documented_fits() {
    let spec = LognormalSumSpec::homogeneous(1, 0.0, 6.0, 0.0).unwrap();
    let r = fit_lsn(&spec).unwrap();
    assert_eq!(r.params.lambda, 0.0);
    assert!(r.params.eps.abs() < 1e-14);
    assert!((r.params.omega - 6.0 * NATS_PER_DB).abs() < 1e-14);

    let spec = LognormalSumSpec::homogeneous(20, 0.0, 9.0, 0.3).unwrap();
    let r = fit_lsn(&spec).unwrap();
    assert!(r.params.lambda > 0.0);
    let lower = lsn_tail_slopes(&r.params).lower;
    assert!((lower - r.precision.sum_b_tilde.sqrt()).abs() < 1e-12);
}

#[test]
fn sum_moment_examples() {
    let s2 = 0.6f64;
    let sigma_db = s2.sqrt() / NATS_PER_DB;
    let spec = LognormalSumSpec::homogeneous(2, 0.0, sigma_db, 0.0).unwrap();
    let m = sum_moments(&build_natural(&spec).unwrap()).unwrap();
    assert!((m.mean / (2.0 * (s2 / 2.0).exp()) - 1.0).abs() < 1e-14);
    assert!((m.variance / (2.0 * s2.exp() * s2.exp_m1()) - 1.0).abs() < 1e-13);
}

#[test]
fn negative_correlation_still_fits() {
    // equicorrelation is positive definite down to −1/(n−1)
    let spec = LognormalSumSpec::homogeneous(4, 0.0, 6.0, -0.3).unwrap();
    let r = fit_lsn(&spec).unwrap();
    let fitted = lsn_moments(&r.params).unwrap();
    assert!((fitted.variance / r.moments.variance - 1.0).abs() < 1e-8);
    let bad = LognormalSumSpec::homogeneous(4, 0.0, 6.0, -0.34).unwrap();
    assert!(matches!(fit_lsn(&bad), Err(lsnsum::Error::NonPositiveDefinite)));
}
