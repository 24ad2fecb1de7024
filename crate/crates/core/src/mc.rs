//! Monte Carlo reference for Λ = Σ e^{Xᵢ}, X ~ N(μ, M).
//!
//! Samples are produced in fixed-size chunks. Chunk `k` draws from the
//! ChaCha8 stream `k` of the generator keyed by the seed, so the output does
//! not depend on how many worker threads ran the chunks.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corrstruct::{semidefinite_factor, LognormalSumSpec, NaturalParams};
use crate::dist::{inv_std_normal_cdf, CdfModel};
use crate::error::{Error, Result};
use crate::NATS_PER_DB;

pub const DEFAULT_SAMPLES: usize = 10_000_000;
pub const CHUNK_SIZE: usize = 1 << 14;

/// X = μ + C·Z with C·Cᵀ = M. C is the Cholesky factor when M is positive
/// definite and a rank-revealing factor otherwise, which lets perfectly
/// correlated components be simulated.
#[derive(Debug, Clone)]
pub struct Sampler {
    mu: DVector<f64>,
    factor: DMatrix<f64>,
}

impl Sampler {
    pub fn from_natural(np: &NaturalParams) -> Self {
        Self {
            mu: np.mu.clone(),
            factor: np.chol.clone(),
        }
    }

    /// Accepts positive semidefinite covariance (ρ = 1 pairs).
    pub fn from_spec(spec: &LognormalSumSpec) -> Result<Self> {
        let (mu, cov) = spec.natural_moments();
        let factor = semidefinite_factor(&cov)?;
        Ok(Self { mu, factor })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Gaussian vectors X, row-major (`n_samples × dim`).
    pub fn sample_components(&self, n_samples: usize, seed: u64) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; n_samples * dim];
        out.par_chunks_mut(CHUNK_SIZE * dim)
            .enumerate()
            .for_each(|(k, chunk)| {
                let mut rng = chunk_rng(seed, k);
                let mut z = vec![0.0; dim];
                for x in chunk.chunks_exact_mut(dim) {
                    self.draw(&mut rng, &mut z, x);
                }
            });
        out
    }

    /// Sums Σ e^{Xᵢ} in generation order.
    pub fn sample_sums(&self, n_samples: usize, seed: u64) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; n_samples];
        out.par_chunks_mut(CHUNK_SIZE)
            .enumerate()
            .for_each(|(k, chunk)| {
                let mut rng = chunk_rng(seed, k);
                let mut z = vec![0.0; dim];
                let mut x = vec![0.0; dim];
                for s in chunk.iter_mut() {
                    self.draw(&mut rng, &mut z, &mut x);
                    *s = x.iter().map(|v| v.exp()).sum();
                }
            });
        out
    }

    fn draw(&self, rng: &mut ChaCha8Rng, z: &mut [f64], x: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = inv_std_normal_cdf(open_unit(rng)).expect("uniform draw lies in (0, 1)");
        }
        for (i, xi) in x.iter_mut().enumerate() {
            let mut acc = self.mu[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.factor[(i, j)] * zj;
            }
            // the semidefinite factor is lower triangular as well
            *xi = acc;
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Uniform on the open interval (0, 1) with 53 random bits.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Sorted sample of Λ for the given Gaussian structure.
pub fn sample_sum(np: &NaturalParams, n_samples: usize, seed: u64) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(Sampler::from_natural(np).sample_sums(n_samples, seed))
}

/// Writes values as contiguous little-endian f64 with no header.
pub fn write_raw_f64<W: Write>(mut w: W, values: &[f64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empirical CDF needs at least one sample".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::domain("sample", *bad));
        }
        samples.par_sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    /// #{samples ≤ x} / n
    pub fn ecdf_at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.n() as f64
    }

    /// #{samples > x} / n
    pub fn eccdf_at(&self, x: f64) -> f64 {
        (self.n() - self.sorted.partition_point(|&v| v <= x)) as f64 / self.n() as f64
    }

    /// Order statistic of rank ⌈p·n⌉.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain("p", p));
        }
        let rank = (p * self.n() as f64).ceil() as usize;
        Ok(self.sorted[rank.clamp(1, self.n()) - 1])
    }
}

impl CdfModel for EmpiricalCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.ecdf_at(x)
    }

    fn ccdf(&self, x: f64) -> f64 {
        self.eccdf_at(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMetrics {
    /// max |F(xᵢ) − Fₙ(xᵢ)| over the sample points
    pub ks_distance: f64,
    /// 10log₁₀ q_fit − 10log₁₀ q_emp at each level
    pub db_deviation: Vec<f64>,
    pub levels: Vec<f64>,
}

/// Tolerance in probability for fitted quantiles.
pub const QUANTILE_TOL: f64 = 1e-10;

/// Quantile of a continuous model by bisection on ln l, started from `hint`.
///
/// Upper levels are matched through the model's ccdf so that 1 − p keeps its
/// relative precision.
pub fn model_quantile<M: CdfModel + Sync + ?Sized>(model: &M, p: f64, hint: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("p", p));
    }
    let upper = p > 0.5;
    let q = 1.0 - p;
    // positive when x lies above the quantile
    let excess = |x: f64| {
        let l = x.exp();
        if upper {
            q - model.ccdf(l)
        } else {
            model.cdf(l) - p
        }
    };
    let x0 = if hint > 0.0 && hint.is_finite() { hint.ln() } else { 0.0 };
    let (mut lo, mut hi) = (x0, x0);
    let mut step = 0.25;
    while excess(lo) > 0.0 {
        lo -= step;
        step *= 2.0;
        if lo < -745.0 {
            return Err(Error::domain("quantile level", p));
        }
    }
    step = 0.25;
    while excess(hi) < 0.0 {
        hi += step;
        step *= 2.0;
        if hi > 709.0 {
            return Err(Error::domain("quantile level", p));
        }
    }
    let tol = QUANTILE_TOL * if upper { q.min(1.0) } else { p.min(1.0) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = excess(mid);
        if f.abs() <= tol || mid <= lo || mid >= hi {
            return Ok(mid.exp());
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// KS distance and per-level dB quantile gaps between `model` and `e`.
pub fn compare<M: CdfModel + Sync + ?Sized>(
    model: &M,
    e: &EmpiricalCdf,
    levels: &[f64],
) -> Result<ComparisonMetrics> {
    let n = e.n() as f64;
    for &p in levels {
        if !(p >= 1.0 / n && p <= 1.0 - 1.0 / n) {
            return Err(Error::domain("level outside the empirical support", p));
        }
    }
    let s = &e.sorted;
    let ks_distance = (0..s.len())
        .into_par_iter()
        .filter(|&i| i + 1 == s.len() || s[i + 1] != s[i])
        .map(|i| {
            let emp = (i + 1) as f64 / n;
            (model.cdf(s[i]) - emp).abs()
        })
        .reduce(|| 0.0, f64::max);

    let db_deviation = levels
        .iter()
        .map(|&p| {
            let q_emp = e.quantile(p)?;
            let q_fit = model_quantile(model, p, q_emp)?;
            Ok((q_fit.ln() - q_emp.ln()) / NATS_PER_DB)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ComparisonMetrics {
        ks_distance,
        db_deviation,
        levels: levels.to_vec(),
    })
}

/// 1.63/√n, the asymptotic 99% point of the one-sample Kolmogorov statistic.
pub fn kolmogorov_bound_99(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn ecdf_and_quantile() {
        let e = EmpiricalCdf::new(vec![3.0, 1.0, 2.0, 2.0, 5.0]).unwrap();
        assert_eq!(e.sorted_samples(), &[1.0, 2.0, 2.0, 3.0, 5.0]);
        assert_eq!(e.ecdf_at(0.5), 0.0);
        assert_eq!(e.ecdf_at(2.0), 0.6);
        assert_eq!(e.ecdf_at(9.0), 1.0);
        assert_eq!(e.quantile(0.5).unwrap(), 2.0);
        assert_eq!(e.quantile(0.61).unwrap(), 3.0);
        assert!(e.quantile(1.0).is_err());
        assert!(e.quantile(0.0).is_err());
        assert!(EmpiricalCdf::new(vec![]).is_err());
        assert!(EmpiricalCdf::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn identical_ecdfs_have_zero_distance() {
        let np = NaturalParams::new(dvector![0.0, 0.1], dmatrix![0.4, 0.1; 0.1, 0.3]).unwrap();
        let e = sample_sum(&np, 5000, 3).unwrap();
        let twin = e.clone();
        let m = compare(&twin, &e, &[]).unwrap();
        assert_eq!(m.ks_distance, 0.0);
    }

    #[test]
    fn open_unit_never_hits_the_ends() {
        let mut rng = chunk_rng(0, 0);
        for _ in 0..100_000 {
            let u = open_unit(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let np = NaturalParams::new(dvector![0.0, 0.0], dmatrix![1.0, 0.3; 0.3, 1.0]).unwrap();
        let s = Sampler::from_natural(&np);
        let n = 3 * CHUNK_SIZE + 17;
        assert_eq!(s.sample_sums(n, 9), s.sample_sums(n, 9));
        assert_ne!(s.sample_sums(64, 9), s.sample_sums(64, 10));
        // a shorter run is a prefix of a longer one
        let long = s.sample_sums(n, 9);
        let short = s.sample_sums(CHUNK_SIZE + 5, 9);
        assert_eq!(&long[..short.len()], &short[..]);
    }

    #[test]
    fn raw_dump_is_little_endian() {
        let mut buf = Vec::new();
        write_raw_f64(&mut buf, &[1.0, -2.5]).unwrap();
        assert_eq!(buf.len(), 16);
        assert_eq!(&buf[..8], &1.0f64.to_le_bytes());
        assert_eq!(f64::from_le_bytes(buf[8..].try_into().unwrap()), -2.5);
    }
}
