use lsnsum::baselines::{fw_from_moments, LognormalParams};
use lsnsum::corrstruct::{build_natural, LognormalSumSpec};
use lsnsum::dist::{inv_std_normal_cdf, lsn_cdf, std_normal_pdf, LsnParams};
use lsnsum::fit::fit_lsn;
use lsnsum::mc::{compare, kolmogorov_bound_99, model_quantile, sample_sum, EmpiricalCdf, Sampler};
use lsnsum::NATS_PER_DB;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lognormal(mu_db: f64, sigma_db: f64) -> LognormalParams {
    let s = NATS_PER_DB * sigma_db;
    LognormalParams::new(NATS_PER_DB * mu_db, s * s).unwrap()
}

#[test]
fn single_component_matches_its_lognormal() {
    let n = 100_000;
    let spec = LognormalSumSpec::homogeneous(1, 2.0, 6.0, 0.0).unwrap();
    let e = sample_sum(&build_natural(&spec).unwrap(), n, 11).unwrap();
    let m = compare(&lognormal(2.0, 6.0), &e, &[0.5]).unwrap();
    assert!(m.ks_distance <= kolmogorov_bound_99(n), "KS {}", m.ks_distance);
}

#[test]
fn fully_correlated_pair_collapses() {
    // X₁ = X₂ almost surely, so the sum is 2e^X
    let n = 100_000;
    let spec = LognormalSumSpec::homogeneous(2, 0.0, 5.0, 1.0).unwrap();
    assert!(build_natural(&spec).is_err());
    let sums = Sampler::from_spec(&spec).unwrap().sample_sums(n, 12);
    let e = EmpiricalCdf::new(sums).unwrap();
    let doubled = LognormalParams::new(2f64.ln(), (5.0 * NATS_PER_DB).powi(2)).unwrap();
    let m = compare(&doubled, &e, &[0.5]).unwrap();
    assert!(m.ks_distance <= kolmogorov_bound_99(n), "KS {}", m.ks_distance);
}

#[test]
fn empirical_quantiles_within_three_standard_errors() {
    let n = 200_000;
    let (mu_db, sigma_db) = (0.0, 4.0);
    let spec = LognormalSumSpec::homogeneous(1, mu_db, sigma_db, 0.0).unwrap();
    let e = sample_sum(&build_natural(&spec).unwrap(), n, 13).unwrap();
    let law = lognormal(mu_db, sigma_db);
    for p in [0.1, 0.5, 0.9, 0.99] {
        let z = inv_std_normal_cdf(p).unwrap();
        let q = (law.mu_z + law.sigma_z() * z).exp();
        let density = std_normal_pdf(z) / (q * law.sigma_z());
        let se = (p * (1.0 - p) / n as f64).sqrt() / density;
        let got = e.quantile(p).unwrap();
        assert!((got - q).abs() <= 3.0 * se, "p={p}: {got} vs {q} (se {se})");

        // same statement in dB through compare()
        let dev = compare(&law, &e, &[p]).unwrap().db_deviation[0];
        let se_db = se / (q * NATS_PER_DB);
        assert!(dev.abs() <= 3.0 * se_db, "p={p}: {dev} dB (se {se_db})");
    }
}

#[test]
fn inverse_cdf_draws_from_a_fitted_lsn_pass_ks() {
    let spec = LognormalSumSpec::homogeneous(8, 0.0, 9.0, 0.3).unwrap();
    let params: LsnParams = fit_lsn(&spec).unwrap().params;
    assert!(params.lambda > 0.5);

    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let draws = (0..n)
        .map(|_| {
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            model_quantile(&params, u, 1.0).unwrap()
        })
        .collect();
    let e = EmpiricalCdf::new(draws).unwrap();
    let m = compare(&|l: f64| lsn_cdf(l, &params), &e, &[0.5]).unwrap();
    assert!(m.ks_distance <= kolmogorov_bound_99(n), "KS {}", m.ks_distance);
}

#[test]
fn lsn_beats_fenton_wilkinson_at_upper_levels() {
    // σ = 3 dB, ρ = 0.7, N = 8: |dB deviation| of LSN below FW at each level
    let spec = LognormalSumSpec::homogeneous(8, 0.0, 3.0, 0.7).unwrap();
    let report = fit_lsn(&spec).unwrap();
    let fw = fw_from_moments(&report.moments);
    let e = sample_sum(&build_natural(&spec).unwrap(), 1_000_000, 1).unwrap();
    let levels = [0.9, 0.99, 0.999];
    let lsn = compare(&report.params, &e, &levels).unwrap();
    let base = compare(&fw, &e, &levels).unwrap();
    for (i, p) in levels.iter().enumerate() {
        let (a, b) = (lsn.db_deviation[i], base.db_deviation[i]);
        assert!(a.abs() < b.abs(), "p={p}: LSN {a:+.5} dB, FW {b:+.5} dB");
    }
}
