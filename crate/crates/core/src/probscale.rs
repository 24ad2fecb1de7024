//! Lognormal probability paper: the transform x ↦ Φ⁻¹(F(eˣ)) and the
//! asymptotic slopes of both tails on that scale.
//!
//! A lognormal CDF becomes a straight line of slope 1/σ. A lognormal sum has
//! different limiting slopes in its two tails, which is what the LSN fit is
//! built to reproduce.

use crate::corrstruct::PrecisionSummary;
use crate::dist::{inv_std_normal_cdf, inv_std_normal_cdf_ln, CdfModel, LsnParams};
use crate::error::{Error, Result};

/// Default probe abscissas (natural-log units) for [`empirical_probit_slope`].
pub const DEFAULT_LOWER_PROBE: f64 = -30.0;
pub const DEFAULT_UPPER_PROBE: f64 = 30.0;
pub const DEFAULT_PROBE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSlopes {
    /// slope as x → +∞
    pub upper: f64,
    /// slope as x → −∞
    pub lower: f64,
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn to_probit_scale(cdf_value: f64) -> Result<f64> {
    inv_std_normal_cdf(cdf_value)
}

/// F̃(x) = Φ⁻¹(F(eˣ)), evaluated from whichever tail is smaller so that both
/// ends of the curve stay resolved long after F or 1 − F underflows.
pub fn probit_at<M: CdfModel + ?Sized>(model: &M, x: f64) -> Result<f64> {
    let l = x.exp();
    let ln_cdf = model.ln_cdf(l);
    if ln_cdf < -std::f64::consts::LN_2 {
        if ln_cdf == f64::NEG_INFINITY || ln_cdf.is_nan() {
            return Err(Error::domain("cdf (saturated at 0)", x));
        }
        return inv_std_normal_cdf_ln(ln_cdf);
    }
    let ln_ccdf = model.ln_ccdf(l);
    if !(ln_ccdf < 0.0) || ln_ccdf == f64::NEG_INFINITY {
        return Err(Error::domain("cdf (saturated at 1)", x));
    }
    Ok(-inv_std_normal_cdf_ln(ln_ccdf)?)
}

/// Limiting slopes of the correlated lognormal sum: lower = √(ΣB̃ᵢ) and
/// upper = 1/max B̃(i,i).
///
/// The upper expression is kept exactly as derived in the literature it comes
/// from even though it does not reduce to 1/σ for a single lognormal; it is
/// only used to seed the λ solver.
pub fn scln_tail_slopes(ps: &PrecisionSummary) -> TailSlopes {
    TailSlopes {
        upper: 1.0 / ps.max_diag_b_tilde,
        lower: ps.sum_b_tilde.sqrt(),
    }
}

/// Limiting slopes of an LSN: upper = 1/ω, lower = √(1+λ²)/ω.
pub fn lsn_tail_slopes(p: &LsnParams) -> TailSlopes {
    TailSlopes {
        upper: 1.0 / p.omega,
        lower: p.lambda.hypot(1.0) / p.omega,
    }
}

/// Central-difference slope of F̃ at `x0` with half-step `h`.
pub fn empirical_probit_slope<M: CdfModel + ?Sized>(model: &M, x0: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain("h", h));
    }
    if !x0.is_finite() {
        return Err(Error::domain("x0", x0));
    }
    let hi = probit_at(model, x0 + h)?;
    let lo = probit_at(model, x0 - h)?;
    Ok((hi - lo) / (2.0 * h))
}
