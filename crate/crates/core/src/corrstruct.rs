//! Gaussian structure of the log-domain vector: problem statement in dB,
//! natural-unit mean and covariance, and the precision-matrix quantities that
//! govern the tails of the sum.
//!
//! Perfectly correlated pairs (ρ = 1) make M singular and are rejected here.
//! Such components can be merged by hand: e^{X} + e^{X + c} = e^{X + ln(1 + e^c)},
//! i.e. one lognormal whose mean is shifted by ln(1 + e^c).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::NATS_PER_DB;

/// Row sums smaller than this fraction of the largest |row sum| count as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// Per-component dB means and standard deviations plus a correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LognormalSumSpec {
    mu_db: Vec<f64>,
    sigma_db: Vec<f64>,
    corr: DMatrix<f64>,
}

impl LognormalSumSpec {
    pub fn new(mu_db: Vec<f64>, sigma_db: Vec<f64>, corr: DMatrix<f64>) -> Result<Self> {
        let n = mu_db.len();
        if n == 0 {
            return Err(Error::EmptySpec);
        }
        if sigma_db.len() != n {
            return Err(Error::DimensionMismatch {
                what: "sigma_db",
                expected: n,
                found: sigma_db.len(),
            });
        }
        if corr.nrows() != n || corr.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "correlation matrix",
                expected: n,
                found: if corr.nrows() != n { corr.nrows() } else { corr.ncols() },
            });
        }
        for (index, &value) in mu_db.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::InvalidMean { index, value });
            }
        }
        for (index, &value) in sigma_db.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidSigma { index, value });
            }
        }

        let mut corr = corr;
        for i in 0..n {
            let d = corr[(i, i)];
            if (d - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry ({i}, {i}) = {d}, expected 1"
                )));
            }
            corr[(i, i)] = 1.0;
            for j in 0..i {
                let (a, b) = (corr[(i, j)], corr[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidCorrelation(format!("entry ({i}, {j}) is not finite")));
                }
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let r = 0.5 * (a + b);
                if !(-1.0..=1.0).contains(&r) {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i}, {j}) = {r} outside [-1, 1]"
                    )));
                }
                corr[(i, j)] = r;
                corr[(j, i)] = r;
            }
        }
        Ok(Self {
            mu_db,
            sigma_db,
            corr,
        })
    }

    /// `n` identically distributed components with common pairwise correlation `rho`.
    pub fn homogeneous(n: usize, mu_db: f64, sigma_db: f64, rho: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySpec);
        }
        let corr = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
        Self::new(vec![mu_db; n], vec![sigma_db; n], corr)
    }

    pub fn independent(mu_db: Vec<f64>, sigma_db: Vec<f64>) -> Result<Self> {
        let n = mu_db.len();
        Self::new(mu_db, sigma_db, DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.mu_db.len()
    }

    pub fn mu_db(&self) -> &[f64] {
        &self.mu_db
    }

    pub fn sigma_db(&self) -> &[f64] {
        &self.sigma_db
    }

    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    /// Natural-unit mean vector and covariance, without any definiteness check.
    pub(crate) fn natural_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let sigma: Vec<f64> = self.sigma_db.iter().map(|s| NATS_PER_DB * s).collect();
        let mu = DVector::from_iterator(n, self.mu_db.iter().map(|m| NATS_PER_DB * m));
        let cov = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                sigma[i] * sigma[i]
            } else {
                self.corr[(i, j)] * sigma[i] * sigma[j]
            }
        });
        (mu, cov)
    }

    /// Reorders components by `perm` (component `k` of the result is
    /// component `perm[k]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                what: "permutation",
                expected: n,
                found: perm.len(),
            });
        }
        let corr = DMatrix::from_fn(n, n, |i, j| self.corr[(perm[i], perm[j])]);
        Self::new(
            perm.iter().map(|&k| self.mu_db[k]).collect(),
            perm.iter().map(|&k| self.sigma_db[k]).collect(),
            corr,
        )
    }
}

/// Natural-log-scale mean vector μ and covariance M with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub mu: DVector<f64>,
    pub m_cov: DMatrix<f64>,
    /// Lower triangular, chol·cholᵀ = M.
    pub chol: DMatrix<f64>,
}

impl NaturalParams {
    /// Builds from a mean vector and a covariance matrix given directly in
    /// natural units.
    pub fn new(mu: DVector<f64>, m_cov: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::EmptySpec);
        }
        if m_cov.nrows() != n || m_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "covariance matrix",
                expected: n,
                found: m_cov.nrows(),
            });
        }
        let chol = Cholesky::new(m_cov.clone())
            .ok_or(Error::NonPositiveDefinite)?
            .l();
        if chol.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::NonPositiveDefinite);
        }
        Ok(Self { mu, m_cov, chol })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// σᵢ = √M(i,i)
    pub fn sigma(&self, i: usize) -> f64 {
        self.m_cov[(i, i)].sqrt()
    }

    /// M⁻¹ through the Cholesky factor, symmetrized.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        invert_spd(&self.m_cov, "covariance matrix M")
    }
}

pub fn build_natural(spec: &LognormalSumSpec) -> Result<NaturalParams> {
    let (mu, cov) = spec.natural_moments();
    NaturalParams::new(mu, cov)
}

fn invert_spd(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let inv = Cholesky::new(m.clone())
        .ok_or(Error::SingularMatrix(what))?
        .inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix(what));
    }
    Ok(0.5 * (&inv + inv.transpose()))
}

/// Factor C with C·Cᵀ = M for a positive semidefinite M.
///
/// Pivots below `1e-12·max diag(M)` are taken as exact zeros, which is what
/// lets perfectly correlated components share one underlying variate.
pub fn semidefinite_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-8 * scale {
            return Err(Error::NonPositiveDefinite);
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

/// Precision matrix B = M⁻¹ and the reduced quantities built from its row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSummary {
    pub b: DMatrix<f64>,
    /// Bᵢ = Σₖ B(i,k)
    pub row_sums: DVector<f64>,
    /// Ĩ: indices i with Bᵢ ≠ 0, ascending, in original component order.
    pub reduced_index: Vec<usize>,
    /// B̃ = M̃⁻¹ with M̃ the principal submatrix of M on Ĩ.
    pub b_tilde: DMatrix<f64>,
    pub b_tilde_row_sums: DVector<f64>,
    /// ΣB̃ᵢ, the squared lower-tail slope of the sum on probability paper.
    pub sum_b_tilde: f64,
    pub max_diag_b_tilde: f64,
    /// w = B̃⁻¹1 / 1ᵀB̃⁻¹1, indexed like `reduced_index`.
    pub w: DVector<f64>,
    /// Non-degeneracy condition for the upper-tail slope theorem.
    pub assumption_ok: bool,
}

impl PrecisionSummary {
    pub fn reduced_len(&self) -> usize {
        self.reduced_index.len()
    }

    /// w padded with zeros to the full dimension.
    pub fn w_padded(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.b.nrows());
        for (k, &i) in self.reduced_index.iter().enumerate() {
            out[i] = self.w[k];
        }
        out
    }
}

pub fn precision_summary(np: &NaturalParams, zero_tol: f64) -> Result<PrecisionSummary> {
    let n = np.n();
    let b = np.precision()?;
    let row_sums = DVector::from_iterator(n, b.row_iter().map(|r| r.sum()));
    let largest = row_sums.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let reduced_index: Vec<usize> = (0..n)
        .filter(|&i| largest > 0.0 && row_sums[i].abs() >= zero_tol * largest)
        .collect();
    if reduced_index.is_empty() {
        return Err(Error::EmptyReducedSet);
    }

    let (b_tilde, m_tilde) = if reduced_index.len() == n {
        (b.clone(), np.m_cov.clone())
    } else {
        let k = reduced_index.len();
        let m_tilde = DMatrix::from_fn(k, k, |i, j| np.m_cov[(reduced_index[i], reduced_index[j])]);
        (invert_spd(&m_tilde, "reduced covariance matrix")?, m_tilde)
    };
    let k = reduced_index.len();
    let b_tilde_row_sums = DVector::from_iterator(k, b_tilde.row_iter().map(|r| r.sum()));
    let sum_b_tilde: f64 = b_tilde_row_sums.iter().sum();
    if !(sum_b_tilde > 0.0) || !sum_b_tilde.is_finite() {
        return Err(Error::NonPositiveTailSum(sum_b_tilde));
    }
    let max_diag_b_tilde = b_tilde.diagonal().iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // B̃⁻¹ = M̃, so w = M̃1 / 1ᵀM̃1
    let m_row_sums = DVector::from_iterator(k, m_tilde.row_iter().map(|r| r.sum()));
    let total: f64 = m_row_sums.iter().sum();
    let w = m_row_sums / total;

    let mut summary = PrecisionSummary {
        b,
        row_sums,
        reduced_index,
        b_tilde,
        b_tilde_row_sums,
        sum_b_tilde,
        max_diag_b_tilde,
        w,
        assumption_ok: true,
    };
    summary.assumption_ok = check_assumption(&summary, zero_tol);
    Ok(summary)
}

/// For every i outside Ĩ: (eⁱ − w̃)ᵀ B w̃ ≠ 0.
fn check_assumption(ps: &PrecisionSummary, zero_tol: f64) -> bool {
    let n = ps.b.nrows();
    let w_full = ps.w_padded();
    let bw = &ps.b * &w_full;
    let wbw = w_full.dot(&bw);
    (0..n)
        .filter(|i| !ps.reduced_index.contains(i))
        .all(|i| (bw[i] - wbw).abs() > zero_tol)
}
