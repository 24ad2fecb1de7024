//! LSN fit to a sum of correlated lognormals.
//!
//! The shape λ solves the moment-ratio equation
//!
//! ```text
//! d2/m² = e^{(1+λ²)/S} Φ(2λ/√S) / (2Φ²(λ/√S)) − 1,     S = ΣB̃ᵢ,
//! ```
//!
//! after which ω = √((1+λ²)/S) pins the lower-tail slope and ε fixes the mean.

use crate::corrstruct::{
    build_natural, precision_summary, LognormalSumSpec, NaturalParams, PrecisionSummary,
    DEFAULT_ZERO_TOL,
};
use crate::dist::{ln_std_normal_cdf, lsn_moments, std_normal_cdf, LsnParams};
use crate::error::{Error, Result};
use crate::probscale::lsn_tail_slopes;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 200;

/// Exact mean and variance of Λ = Σ e^{Xᵢ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumMoments {
    pub mean: f64,
    pub variance: f64,
    /// variance / mean², computed without forming either.
    pub ratio: f64,
    /// ln(mean); stays finite when the mean itself would overflow.
    pub ln_mean: f64,
}

/// m = Σ e^{μᵢ+σᵢ²/2}, d2 = Σᵢⱼ e^{μᵢ+μⱼ+(σᵢ²+σⱼ²)/2}(e^{M(i,j)} − 1).
///
/// Every term is scaled by the largest e^{μᵢ+σᵢ²/2} before summation, so the
/// ratio d2/m² is available even when m or d2 are not representable.
pub fn sum_moments(np: &NaturalParams) -> Result<SumMoments> {
    let n = np.n();
    let a: Vec<f64> = (0..n).map(|i| np.mu[i] + 0.5 * np.m_cov[(i, i)]).collect();
    let shift = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut mean = Neumaier::default();
    let mut var = Neumaier::default();
    for i in 0..n {
        mean.add((a[i] - shift).exp());
        for j in 0..n {
            let g = np.m_cov[(i, j)].exp_m1();
            if !g.is_finite() {
                return Err(Error::Overflow { i, j });
            }
            let term = (a[i] + a[j] - 2.0 * shift).exp() * g;
            if !term.is_finite() {
                return Err(Error::Overflow { i, j });
            }
            var.add(term);
        }
    }
    let (mean_s, var_s) = (mean.total(), var.total());
    if !(mean_s > 0.0) || !(var_s > 0.0) {
        return Err(Error::MomentOverflow("sum moments are not positive"));
    }
    let ln_mean = shift + mean_s.ln();
    let ratio = var_s / (mean_s * mean_s);
    let mean = ln_mean.exp();
    let variance = (2.0 * shift + var_s.ln()).exp();
    if !mean.is_finite() || !variance.is_finite() {
        return Err(Error::MomentOverflow("sum mean or variance"));
    }
    Ok(SumMoments {
        mean,
        variance,
        ratio,
        ln_mean,
    })
}

#[derive(Debug, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn ln_rhs_plus_one(lambda: f64, sum_b_tilde: f64) -> f64 {
    let root = sum_b_tilde.sqrt();
    (1.0 + lambda * lambda) / sum_b_tilde + ln_std_normal_cdf(2.0 * lambda / root)
        - std::f64::consts::LN_2
        - 2.0 * ln_std_normal_cdf(lambda / root)
}

/// Right-hand side of the λ equation, evaluated in log space.
pub fn lambda_equation_rhs(lambda: f64, sum_b_tilde: f64) -> f64 {
    ln_rhs_plus_one(lambda, sum_b_tilde).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    pub iterations: usize,
    /// |rhs(λ) − target|
    pub residual: f64,
}

/// Solves rhs(λ) = `target_ratio` for λ ≥ 0.
///
/// The bracket grows geometrically from max(λ₀, 1) until it contains the
/// root; Brent's method then refines it until |rhs − target| ≤ tol·target.
pub fn solve_lambda(
    target_ratio: f64,
    sum_b_tilde: f64,
    lambda0: f64,
    tol: f64,
) -> Result<LambdaSolution> {
    if !(target_ratio > 0.0 && target_ratio.is_finite()) {
        return Err(Error::domain("target_ratio", target_ratio));
    }
    if !(sum_b_tilde > 0.0 && sum_b_tilde.is_finite()) {
        return Err(Error::NonPositiveTailSum(sum_b_tilde));
    }
    let f = |lambda: f64| lambda_equation_rhs(lambda, sum_b_tilde) - target_ratio;
    let goal = tol * target_ratio;

    let f0 = f(0.0);
    if f0.abs() <= goal {
        return Ok(LambdaSolution {
            lambda: 0.0,
            iterations: 0,
            residual: f0.abs(),
        });
    }
    if f0 > 0.0 {
        return Err(Error::NoRoot {
            target: target_ratio,
            floor: f0 + target_ratio,
        });
    }

    let mut iterations = 0;
    let (mut a, mut fa) = (0.0, f0);
    let mut b = if lambda0.is_finite() { lambda0.max(1.0) } else { 1.0 };
    let mut fb = f(b);
    while fb < 0.0 {
        iterations += 1;
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NonConvergence { iterations });
        }
        (a, fa) = (b, fb);
        b *= 2.0;
        fb = f(b);
    }
    // rhs may overflow to +∞ at the far end of the bracket; that still brackets
    if fb.is_nan() {
        return Err(Error::NonConvergence { iterations });
    }

    // Brent (1973), zero-in
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    loop {
        if fb.abs() <= goal {
            return Ok(LambdaSolution {
                lambda: b,
                iterations,
                residual: fb.abs(),
            });
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NonConvergence { iterations });
        }
        iterations += 1;
        if (fb > 0.0) == (fc > 0.0) {
            (c, fc) = (a, fa);
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            (a, fa) = (b, fb);
            (b, fb) = (c, fc);
            (c, fc) = (a, fa);
        }
        let xtol = 2.0 * f64::EPSILON * b.abs() + 0.5e-300;
        let m = 0.5 * (c - b);
        if m.abs() <= xtol {
            // the bracket is down to adjacent floats; no better λ exists
            return Ok(LambdaSolution {
                lambda: b,
                iterations,
                residual: fb.abs(),
            });
        }
        if e.abs() >= xtol && fa.abs() > fb.abs() && fb.is_finite() && fa.is_finite() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (xtol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        (a, fa) = (b, fb);
        b += if d.abs() > xtol { d } else { xtol.copysign(m) };
        fb = f(b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSeed {
    pub value: f64,
    /// true when the tail-slope formula produced no usable value and 1 was used
    pub fell_back: bool,
}

/// λ₀ from matching both LSN tail slopes to the sum's:
/// λ₀ = √(max B̃(i,i)² · ΣB̃ᵢ − 1), or 1 when the radicand is negative or
/// not finite.
pub fn lambda_seed(ps: &PrecisionSummary) -> LambdaSeed {
    let arg = ps.max_diag_b_tilde * ps.max_diag_b_tilde * ps.sum_b_tilde - 1.0;
    if arg.is_finite() && arg >= 0.0 {
        LambdaSeed {
            value: arg.sqrt(),
            fell_back: false,
        }
    } else {
        LambdaSeed {
            value: 1.0,
            fell_back: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Relative threshold under which a precision-matrix row sum counts as zero.
    pub zero_tol: f64,
    /// Relative tolerance on the λ equation.
    pub tol: f64,
    /// Use ε = ln m − ω²/2 − ln Φ(λ/√S), dropping the ln 2 that makes the
    /// fitted mean exact. Only useful for comparison studies.
    pub literal_eps: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            zero_tol: DEFAULT_ZERO_TOL,
            tol: DEFAULT_TOL,
            literal_eps: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentResiduals {
    /// fitted mean / m − 1
    pub mean: f64,
    /// fitted variance / d2 − 1
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: LsnParams,
    pub lambda0: f64,
    pub iterations: usize,
    pub residual: f64,
    pub moments: SumMoments,
    pub moment_residuals: MomentResiduals,
    /// fitted lower slope / √(ΣB̃ᵢ) − 1
    pub slope_match: f64,
    pub assumption_ok: bool,
    pub precision: PrecisionSummary,
    pub warnings: Vec<String>,
}

pub fn fit_lsn(spec: &LognormalSumSpec) -> Result<FitReport> {
    fit_lsn_with(spec, &FitOptions::default())
}

pub fn fit_lsn_with(spec: &LognormalSumSpec, opts: &FitOptions) -> Result<FitReport> {
    fit_natural(&build_natural(spec)?, opts)
}

/// Fits directly from natural-unit parameters.
pub fn fit_natural(np: &NaturalParams, opts: &FitOptions) -> Result<FitReport> {
    let ps = precision_summary(np, opts.zero_tol)?;
    let moments = sum_moments(np)?;
    let s = ps.sum_b_tilde;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NonPositiveTailSum(s));
    }

    let mut warnings = Vec::new();
    if !ps.assumption_ok {
        warnings.push("upper-tail slope assumption does not hold; λ₀ may be poor".to_string());
    }
    let seed = lambda_seed(&ps);
    if seed.fell_back {
        warnings.push("λ₀ radicand was negative or not finite; seeded with λ₀ = 1".to_string());
    }

    let sol = solve_lambda(moments.ratio, s, seed.value, opts.tol)?;
    let lambda = sol.lambda;
    let omega = ((1.0 + lambda * lambda) / s).sqrt();
    let phi = std_normal_cdf(lambda / s.sqrt());
    let mass = if opts.literal_eps { phi } else { 2.0 * phi };
    let eps = moments.ln_mean - 0.5 * omega * omega - mass.ln();
    let params = LsnParams::new(lambda, eps, omega)?;
    if opts.literal_eps {
        warnings.push("literal ε formula in use; the fitted mean is not exact".to_string());
    }

    let fitted = lsn_moments(&params)?;
    let moment_residuals = MomentResiduals {
        mean: fitted.mean / moments.mean - 1.0,
        variance: fitted.variance / moments.variance - 1.0,
    };
    let slope_match = lsn_tail_slopes(&params).lower / s.sqrt() - 1.0;

    Ok(FitReport {
        params,
        lambda0: seed.value,
        iterations: sol.iterations,
        residual: sol.residual,
        moments,
        moment_residuals,
        slope_match,
        assumption_ok: ps.assumption_ok,
        precision: ps,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NATS_PER_DB;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn single_component_moments() {
        let (mu, s2): (f64, f64) = (0.4, 0.9);
        let np = NaturalParams::new(dvector![mu], dmatrix![s2]).unwrap();
        let m = sum_moments(&np).unwrap();
        assert!((m.mean / (mu + s2 / 2.0).exp() - 1.0).abs() < 1e-15);
        let var = (2.0 * mu + s2).exp() * s2.exp_m1();
        assert!((m.variance / var - 1.0).abs() < 1e-14);
        assert!((m.ratio / s2.exp_m1() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_moments() {
        let s2: f64 = 0.7;
        let np = NaturalParams::new(dvector![0.0, 0.0], dmatrix![s2, 0.0; 0.0, s2]).unwrap();
        let m = sum_moments(&np).unwrap();
        assert!((m.mean / (2.0 * (s2 / 2.0).exp()) - 1.0).abs() < 1e-15);
        assert!((m.variance / (2.0 * s2.exp() * s2.exp_m1()) - 1.0).abs() < 1e-14);

        // perfectly correlated pair is 2L; the moments do not need a factorization
        let np = NaturalParams {
            mu: dvector![0.0, 0.0],
            m_cov: dmatrix![s2, s2; s2, s2],
            chol: dmatrix![s2.sqrt(), 0.0; s2.sqrt(), 0.0],
        };
        let m = sum_moments(&np).unwrap();
        assert!((m.variance / (4.0 * s2.exp() * s2.exp_m1()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rhs_values() {
        for s in [0.25, 1.0, 4.0] {
            let want = (1.0f64 / s).exp_m1();
            assert!((lambda_equation_rhs(0.0, s) / want - 1.0).abs() < 1e-15);
        }
        // e²Φ(2)/(2Φ²(1)) − 1 = 4.1005453641382708...
        let v = lambda_equation_rhs(1.0, 1.0);
        assert!((v - 4.100_545_364_138_271).abs() < 1e-12, "{v}");
        // rhs itself overflows past λ ≈ 26 at S = 1, so scan ln(1 + rhs)
        for s in [0.25, 1.0, 4.0] {
            let mut prev = ln_rhs_plus_one(0.0, s);
            for k in 1..=500 {
                let next = ln_rhs_plus_one(k as f64 * 0.1, s);
                assert!(next > prev, "S={s}, λ={}", k as f64 * 0.1);
                prev = next;
            }
        }
        assert_eq!(lambda_equation_rhs(50.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn solver_round_trips() {
        let target = lambda_equation_rhs(1.0, 1.0);
        let sol = solve_lambda(target, 1.0, 0.3, DEFAULT_TOL).unwrap();
        assert!((sol.lambda - 1.0).abs() < 1e-8);
        assert!(sol.residual <= DEFAULT_TOL * target);

        let zero = solve_lambda(1f64.exp_m1(), 1.0, 5.0, DEFAULT_TOL).unwrap();
        assert_eq!(zero.lambda, 0.0);
        assert_eq!(zero.iterations, 0);
    }

    #[test]
    fn target_below_floor_has_no_root() {
        let err = solve_lambda(0.5, 1.0, 1.0, DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::NoRoot { .. }));
    }

    #[test]
    fn seeds() {
        let np = NaturalParams::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let seed = lambda_seed(&precision_summary(&np, 1e-10).unwrap());
        assert_eq!(seed, LambdaSeed { value: 0.0, fell_back: false });

        let np = NaturalParams::new(dvector![0.0, 0.0], dmatrix![1.0, 0.5; 0.5, 1.0]).unwrap();
        let seed = lambda_seed(&precision_summary(&np, 1e-10).unwrap());
        assert!((seed.value - (64.0f64 / 27.0 - 1.0).sqrt()).abs() < 1e-12);

        let np = NaturalParams::new(dvector![0.0], dmatrix![4.0]).unwrap();
        let seed = lambda_seed(&precision_summary(&np, 1e-10).unwrap());
        assert_eq!(seed, LambdaSeed { value: 1.0, fell_back: true });
    }

    #[test]
    fn single_lognormal_is_reproduced() {
        let spec = LognormalSumSpec::homogeneous(1, 0.0, 6.0, 0.0).unwrap();
        let r = fit_lsn(&spec).unwrap();
        assert_eq!(r.params.lambda, 0.0);
        assert!(r.params.eps.abs() < 1e-12);
        assert!((r.params.omega - 6.0 * NATS_PER_DB).abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_matches_moments() {
        let spec = LognormalSumSpec::homogeneous(2, 0.0, 3.0, 0.7).unwrap();
        let r = fit_lsn(&spec).unwrap();
        let fitted = lsn_moments(&r.params).unwrap();
        assert!((fitted.mean / r.moments.mean - 1.0).abs() < 1e-9);
        assert!((fitted.variance / r.moments.variance - 1.0).abs() < 1e-9);
        assert!(r.params.lambda > 0.0);
    }

    #[test]
    fn literal_eps_differs_by_ln_2() {
        let spec = LognormalSumSpec::homogeneous(4, 0.0, 6.0, 0.3).unwrap();
        let exact = fit_lsn(&spec).unwrap();
        let literal = fit_lsn_with(
            &spec,
            &FitOptions {
                literal_eps: true,
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert!((literal.params.eps - exact.params.eps - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((literal.moment_residuals.mean - 1.0).abs() < 1e-9);
    }
}
