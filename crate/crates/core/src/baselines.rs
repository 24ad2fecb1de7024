//! Fenton–Wilkinson baseline: a single lognormal with the sum's first two
//! moments.

use crate::corrstruct::{build_natural, LognormalSumSpec};
use crate::dist::{ln_std_normal_ccdf, ln_std_normal_cdf, std_normal_ccdf, std_normal_cdf, CdfModel};
use crate::error::{Error, Result};
use crate::fit::{sum_moments, SumMoments};
use crate::NATS_PER_DB;

/// e^Z with Z ~ N(mu_z, sigma2_z), natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalParams {
    pub mu_z: f64,
    pub sigma2_z: f64,
}

impl LognormalParams {
    pub fn new(mu_z: f64, sigma2_z: f64) -> Result<Self> {
        if !mu_z.is_finite() {
            return Err(Error::InvalidParameter(format!("mu_z = {mu_z} must be finite")));
        }
        if !(sigma2_z > 0.0 && sigma2_z.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2_z = {sigma2_z} must be finite and > 0"
            )));
        }
        Ok(Self { mu_z, sigma2_z })
    }

    pub fn sigma_z(&self) -> f64 {
        self.sigma2_z.sqrt()
    }

    pub fn mu_db(&self) -> f64 {
        self.mu_z / NATS_PER_DB
    }

    pub fn sigma_db(&self) -> f64 {
        self.sigma_z() / NATS_PER_DB
    }

    /// (mean, variance) of e^Z.
    pub fn moments(&self) -> (f64, f64) {
        let mean = (self.mu_z + 0.5 * self.sigma2_z).exp();
        (mean, mean * mean * self.sigma2_z.exp_m1())
    }

    fn standardize(&self, l: f64) -> f64 {
        (l.ln() - self.mu_z) / self.sigma_z()
    }
}

pub fn fit_fw(spec: &LognormalSumSpec) -> Result<LognormalParams> {
    Ok(fw_from_moments(&sum_moments(&build_natural(spec)?)?))
}

/// Inverts m = e^{μ+σ²/2}, d2/m² = e^{σ²} − 1.
pub fn fw_from_moments(m: &SumMoments) -> LognormalParams {
    let sigma2_z = m.ratio.ln_1p();
    LognormalParams {
        mu_z: m.ln_mean - 0.5 * sigma2_z,
        sigma2_z,
    }
}

pub fn fw_cdf(l: f64, p: &LognormalParams) -> f64 {
    if !(l > 0.0) {
        return 0.0;
    }
    std_normal_cdf(p.standardize(l))
}

pub fn fw_ccdf(l: f64, p: &LognormalParams) -> f64 {
    if !(l > 0.0) {
        return 1.0;
    }
    std_normal_ccdf(p.standardize(l))
}

impl CdfModel for LognormalParams {
    fn cdf(&self, x: f64) -> f64 {
        fw_cdf(x, self)
    }

    fn ccdf(&self, x: f64) -> f64 {
        fw_ccdf(x, self)
    }

    fn ln_cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        ln_std_normal_cdf(self.standardize(x))
    }

    fn ln_ccdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        ln_std_normal_ccdf(self.standardize(x))
    }
}
