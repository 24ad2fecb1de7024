use std::path::Path;

use lsnsum::baselines::{fw_from_moments, LognormalParams};
use lsnsum::corrstruct::build_natural;
use lsnsum::dist::{lsn_pdf, CdfModel, LsnParams};
use lsnsum::fit::{fit_natural, FitOptions, FitReport};
use lsnsum::mc::{compare as compare_metrics, write_raw_f64, EmpiricalCdf, Sampler};
use lsnsum::probscale::{
    empirical_probit_slope, lsn_tail_slopes, probit_at, scln_tail_slopes, to_probit_scale,
};
use lsnsum::NATS_PER_DB;

use crate::output::{csv, num, write_atomic};
use crate::scenario::{Grid, Scenario};
use crate::CliError;

fn options(literal: bool) -> FitOptions {
    FitOptions {
        literal_eps: literal,
        ..FitOptions::default()
    }
}

fn fit_scenario(s: &Scenario, literal: bool) -> Result<FitReport, CliError> {
    let np = build_natural(&s.spec)?;
    Ok(fit_natural(&np, &options(literal))?)
}

fn db(l: f64) -> f64 {
    l.ln() / NATS_PER_DB
}

fn from_db(x_db: f64) -> f64 {
    (NATS_PER_DB * x_db).exp()
}

pub fn fit(s: &Scenario, literal: bool) -> Result<(), CliError> {
    let r = fit_scenario(s, literal)?;
    let fw = fw_from_moments(&r.moments);
    let p = &r.params;
    println!("components          {}", s.spec.n());
    println!("lambda_opt          {:.12e}", p.lambda);
    println!("eps                 {:.12e}", p.eps);
    println!("eps_db              {:.12e}", p.eps_db());
    println!("omega               {:.12e}", p.omega);
    println!("omega_db            {:.12e}", p.omega_db());
    println!("lambda0             {:.12e}", r.lambda0);
    println!("iterations          {}", r.iterations);
    println!("residual            {:.3e}", r.residual);
    println!("mean_residual       {:.3e}", r.moment_residuals.mean);
    println!("variance_residual   {:.3e}", r.moment_residuals.variance);
    println!("slope_match         {:.3e}", r.slope_match);
    println!("sum_b_tilde         {:.12e}", r.precision.sum_b_tilde);
    println!("reduced_size        {}", r.precision.reduced_len());
    println!("assumption_ok       {}", r.assumption_ok);
    println!("sum_mean            {:.12e}", r.moments.mean);
    println!("sum_variance        {:.12e}", r.moments.variance);
    println!("fw_mu_db            {:.12e}", fw.mu_db());
    println!("fw_sigma_db         {:.12e}", fw.sigma_db());
    for w in &r.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

/// FW median ± 5 FW standard deviations, in whole steps of 0.25 dB.
fn default_grid(fw: &LognormalParams) -> Grid {
    let step = 0.25;
    let snap = |v: f64| (v / step).round() * step;
    Grid {
        min_db: snap(fw.mu_db() - 5.0 * fw.sigma_db()),
        max_db: snap(fw.mu_db() + 5.0 * fw.sigma_db()),
        step_db: step,
    }
}

fn probit_cell<M: CdfModel + ?Sized>(model: &M, l: f64) -> String {
    probit_at(model, l.ln()).map(num).unwrap_or_default()
}

fn split_levels(levels: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = 1.0 / n as f64;
    levels.iter().partition(|&&p| p >= lo && p <= 1.0 - lo)
}

pub fn compare(s: &Scenario, literal: bool, out: Option<&Path>) -> Result<(), CliError> {
    let np = build_natural(&s.spec)?;
    let r = fit_natural(&np, &options(literal))?;
    let fw = fw_from_moments(&r.moments);
    let lsn = r.params;
    let e = EmpiricalCdf::new(Sampler::from_natural(&np).sample_sums(s.samples, s.seed))?;
    let n = e.n();

    let grid = s.grid.unwrap_or_else(|| default_grid(&fw));
    let clip = 1.0 / n as f64;
    let rows: Vec<Vec<String>> = grid
        .points()
        .into_iter()
        .map(|x_db| {
            let l = from_db(x_db);
            let cdf_mc = e.ecdf_at(l);
            let probit_mc = if n >= 2 {
                to_probit_scale(cdf_mc.clamp(clip, 1.0 - clip))
                    .map(num)
                    .unwrap_or_default()
            } else {
                String::new()
            };
            vec![
                num(x_db),
                num(cdf_mc),
                num(lsn.cdf(l)),
                num(fw.cdf(l)),
                num(e.eccdf_at(l)),
                num(lsn.ccdf(l)),
                num(fw.ccdf(l)),
                probit_mc,
                probit_cell(&lsn, l),
                probit_cell(&fw, l),
            ]
        })
        .collect();
    let table = csv(
        &[
            "x_db",
            "cdf_mc",
            "cdf_lsn",
            "cdf_fw",
            "ccdf_mc",
            "ccdf_lsn",
            "ccdf_fw",
            "probit_mc",
            "probit_lsn",
            "probit_fw",
        ],
        &rows,
    );

    let (levels, absent) = split_levels(&s.levels, n);
    for p in &absent {
        eprintln!("warning: level {p} is outside the empirical support [1/n, 1 - 1/n] for n = {n}; marked absent");
    }
    let m_lsn = compare_metrics(&lsn, &e, &levels)?;
    let m_fw = compare_metrics(&fw, &e, &levels)?;

    let mut report = String::new();
    report.push_str(&format!("samples {n}, seed {}\n", s.seed));
    report.push_str(&format!(
        "ks_distance      lsn {:.6e}   fw {:.6e}\n",
        m_lsn.ks_distance, m_fw.ks_distance
    ));
    report.push_str("level            db_dev_lsn        db_dev_fw\n");
    let mut k = 0;
    for &p in &s.levels {
        if absent.contains(&p) {
            report.push_str(&format!("{p:<16} absent            absent\n"));
        } else {
            report.push_str(&format!(
                "{p:<16} {:<+17.6e} {:+.6e}\n",
                m_lsn.db_deviation[k], m_fw.db_deviation[k]
            ));
            k += 1;
        }
    }

    match out {
        Some(path) => {
            write_atomic(path, table.as_bytes())?;
            print!("{report}");
        }
        None => {
            print!("{table}");
            eprint!("{report}");
        }
    }
    Ok(())
}

pub fn sample(s: &Scenario, out: Option<&Path>) -> Result<(), CliError> {
    // the rank-revealing factor also admits perfectly correlated components
    let sampler = Sampler::from_spec(&s.spec)?;
    let sums = sampler.sample_sums(s.samples, s.seed);
    if let Some(path) = out {
        let mut bytes = Vec::with_capacity(sums.len() * 8);
        write_raw_f64(&mut bytes, &sums)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        write_atomic(path, &bytes)?;
    }
    let nf = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / nf;
    let var = sums.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0).max(1.0);
    let e = EmpiricalCdf::new(sums)?;

    println!("samples           {}", e.n());
    println!("seed              {}", s.seed);
    println!("mean              {mean:.12e}");
    println!("variance          {var:.12e}");
    println!("level             quantile_db");
    let (_, absent) = split_levels(&s.levels, e.n());
    for &p in &s.levels {
        if absent.contains(&p) {
            eprintln!("warning: level {p} is outside the empirical support; marked absent");
            println!("{p:<17} absent");
        } else {
            println!("{p:<17} {:.12e}", db(e.quantile(p)?));
        }
    }
    Ok(())
}

/// Probe at `x0`, halving |x0| while the fitted CDF saturates there.
fn probe_slope(p: &LsnParams, mut x0: f64, step: f64) -> Option<(f64, f64)> {
    while x0.abs() >= 1.0 {
        if let Ok(v) = empirical_probit_slope(p, x0, step) {
            return Some((x0, v));
        }
        x0 *= 0.5;
    }
    None
}

pub fn slopes(s: &Scenario, literal: bool, probe: f64, step: f64) -> Result<(), CliError> {
    if !(probe > 0.0 && probe.is_finite()) {
        return Err(CliError::Input(format!("--probe = {probe} must be > 0")));
    }
    if !(step > 0.0 && step < probe) {
        return Err(CliError::Input(format!("--step = {step} must lie in (0, probe)")));
    }
    let r = fit_scenario(s, literal)?;
    let sum = scln_tail_slopes(&r.precision);
    let fitted = lsn_tail_slopes(&r.params);
    let fw = fw_from_moments(&r.moments);
    let cell = |v: Option<(f64, f64)>| match v {
        Some((x0, slope)) => format!("{slope:<12.8} (x0 = {x0})"),
        None => "saturated".to_string(),
    };
    let lower = probe_slope(&r.params, -probe, step);
    let upper = probe_slope(&r.params, probe, step);

    println!("{:17}{:<28} upper", " ", "lower");
    println!("{:<16} {:<28.8} {:.8}", "sum (theory)", sum.lower, sum.upper);
    println!("{:<16} {:<28.8} {:.8}", "lsn (theory)", fitted.lower, fitted.upper);
    println!("{:<16} {:<28} {}", "lsn (probe)", cell(lower), cell(upper));
    println!("{:<16} {:<28.8} {:.8}", "fw", 1.0 / fw.sigma_z(), 1.0 / fw.sigma_z());
    println!("lower slope match  {:.3e}", r.slope_match);
    if !r.assumption_ok {
        println!("warning: upper-tail slope assumption does not hold for this covariance");
    }
    Ok(())
}

pub fn eval(s: &Scenario, literal: bool, points_db: &[f64], out: Option<&Path>) -> Result<(), CliError> {
    if let Some(bad) = points_db.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Input(format!("evaluation point {bad} is not finite")));
    }
    let r = fit_scenario(s, literal)?;
    let p = r.params;
    let rows: Vec<Vec<String>> = points_db
        .iter()
        .map(|&x_db| {
            let l = from_db(x_db);
            vec![num(x_db), num(p.cdf(l)), num(p.ccdf(l)), num(lsn_pdf(l, &p))]
        })
        .collect();
    let table = csv(&["x_db", "cdf", "ccdf", "pdf"], &rows);
    match out {
        Some(path) => write_atomic(path, table.as_bytes()),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
