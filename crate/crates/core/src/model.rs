//! Per-group least-squares fits and the pooled Wald-type statistic Q0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_sf;
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, spd_sqrt};

/// Smallest-to-largest singular value ratio below which a design counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Residual variances below this fraction of the mean squared response are rejected.
pub const S2_REL_FLOOR: f64 = 1e-12;

/// Negative quadratic forms down to this (scaled) magnitude are round-off and clamp to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

/// One regression group: an `n x p` design and its response.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionGroup {
    label: String,
    design: DMatrix<f64>,
    response: DVector<f64>,
}

impl RegressionGroup {
    /// Checks shapes, finiteness and `n > p >= 1`. Rank is checked by [`fit_group`].
    pub fn new(label: impl Into<String>, design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        let label = label.into();
        let (n, p) = design.shape();
        if p == 0 {
            return Err(Error::InvalidInput(format!("group {label}: design has no columns")));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "group {label}: design has {n} rows but response has {} entries",
                response.len()
            )));
        }
        if n <= p {
            return Err(Error::InsufficientData { group: label, n, p });
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("group {label}: non-finite value")));
        }
        Ok(Self { label, design, response })
    }

    /// Intercept-only group (design is a column of ones).
    pub fn intercept_only(label: impl Into<String>, response: &[f64]) -> Result<Self> {
        let n = response.len();
        Self::new(label, DMatrix::from_element(n, 1, 1.0), DVector::from_column_slice(response))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }
}

/// Fitted summary of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEstimate {
    pub label: String,
    pub n: usize,
    pub beta_hat: DVector<f64>,
    /// Unbiased residual variance `RSS / (n - p)`.
    pub s2: f64,
    /// `X'X`
    pub gram: DMatrix<f64>,
    /// Symmetric square root of `X'X`.
    pub gram_sqrt: DMatrix<f64>,
    pub df: usize,
}

impl GroupEstimate {
    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    /// Builds an estimate directly from summaries (no raw data).
    pub fn from_summary(
        label: impl Into<String>,
        n: usize,
        beta_hat: DVector<f64>,
        s2: f64,
        gram: DMatrix<f64>,
    ) -> Result<Self> {
        let label = label.into();
        let p = beta_hat.len();
        if gram.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!("group {label}: gram is not {p}x{p}")));
        }
        if n <= p {
            return Err(Error::InsufficientData { group: label, n, p });
        }
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::DegenerateFit { group: label, s2 });
        }
        let gram_sqrt = spd_sqrt(&gram)?;
        Ok(Self { label, n, beta_hat, s2, gram, gram_sqrt, df: n - p })
    }
}

/// Ordinary least squares for a single group.
pub fn fit_group(group: &RegressionGroup) -> Result<GroupEstimate> {
    let x = group.design();
    let y = group.response();
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InsufficientData { group: group.label.clone(), n, p });
    }

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { group: group.label.clone(), ratio });
    }
    let beta_hat = svd
        .solve(y, 0.0)
        .map_err(|e| Error::NumericallySingular(e.to_string()))?;

    let resid = y - x * &beta_hat;
    let df = n - p;
    let s2 = resid.norm_squared() / df as f64;
    let mean_sq = y.norm_squared() / n as f64;
    if s2 <= S2_REL_FLOOR * mean_sq {
        return Err(Error::DegenerateFit { group: group.label.clone(), s2 });
    }

    let gram = x.transpose() * x;
    let gram = (&gram + gram.transpose()) * 0.5;
    let gram_sqrt = spd_sqrt(&gram)?;
    Ok(GroupEstimate {
        label: group.label.clone(),
        n,
        beta_hat,
        s2,
        gram,
        gram_sqrt,
        df,
    })
}

/// Fits every group, stopping at the first failure.
pub fn fit_groups(groups: &[RegressionGroup]) -> Result<Vec<GroupEstimate>> {
    groups.iter().map(fit_group).collect()
}

/// Q0 together with the pooled weight matrices that enter it.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledStatistic {
    pub q0: f64,
    /// `Σ s_i^{-2} X_i'X_i`
    pub weight_sum: DMatrix<f64>,
    pub weight_sum_inv: DMatrix<f64>,
    /// Precision-weighted common coefficient vector.
    pub pooled_beta: DVector<f64>,
    pub k: usize,
    pub p: usize,
    pub df_chi2: usize,
}

pub(crate) fn check_common_p(estimates: &[GroupEstimate]) -> Result<usize> {
    let p = estimates
        .first()
        .map(GroupEstimate::p)
        .ok_or(Error::NeedTwoGroups(0))?;
    if let Some(bad) = estimates.iter().find(|e| e.p() != p) {
        return Err(Error::DimensionMismatch(format!(
            "group {} has {} coefficients, expected {p}",
            bad.label,
            bad.p()
        )));
    }
    Ok(p)
}

pub(crate) fn clamp_quadratic(value: f64, scale: f64, what: &str) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_CLAMP * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!(
            "{what} is negative ({value:e}) beyond round-off"
        )))
    }
}

/// `Σ s_i^{-2} X_i'X_i` and its inverse.
pub fn weight_sum(estimates: &[GroupEstimate]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = check_common_p(estimates)?;
    let mut a = DMatrix::zeros(p, p);
    for e in estimates {
        a += &e.gram / e.s2;
    }
    let inv = spd_inverse(&a)?;
    Ok((a, inv))
}

/// The observed statistic
/// `Q0 = Σ s_i^{-2} b_i' G_i b_i - [Σ s_i^{-2} b_i' G_i] A^{-1} [Σ s_i^{-2} G_i b_i]`,
/// with `G_i = X_i'X_i` and `A = Σ s_i^{-2} G_i`.
///
/// Evaluated in the centered form `Σ s_i^{-2} (b_i - b̄)' G_i (b_i - b̄)`, `b̄ = A^{-1} Σ s_i^{-2} G_i b_i`,
/// which is algebraically identical and avoids cancellation.
pub fn compute_q0(estimates: &[GroupEstimate]) -> Result<PooledStatistic> {
    let k = estimates.len();
    if k < 2 {
        return Err(Error::NeedTwoGroups(k));
    }
    let p = check_common_p(estimates)?;
    let (weight_sum, weight_sum_inv) = weight_sum(estimates)?;

    let mut rhs = DVector::zeros(p);
    for e in estimates {
        rhs += (&e.gram * &e.beta_hat) / e.s2;
    }
    let pooled_beta = &weight_sum_inv * rhs;

    let mut q0 = 0.0;
    let mut scale = 0.0;
    for e in estimates {
        let d = &e.beta_hat - &pooled_beta;
        q0 += (d.transpose() * &e.gram * &d)[(0, 0)] / e.s2;
        scale += (e.beta_hat.transpose() * &e.gram * &e.beta_hat)[(0, 0)] / e.s2;
    }
    let q0 = clamp_quadratic(q0, scale, "Q0")?;

    Ok(PooledStatistic {
        q0,
        weight_sum,
        weight_sum_inv,
        pooled_beta,
        k,
        p,
        df_chi2: p * (k - 1),
    })
}

/// Large-sample reference p-value `P(χ²_{p(k-1)} > Q0)`.
pub fn chi2_pvalue(stat: &PooledStatistic) -> f64 {
    chi2_sf(stat.q0, stat.df_chi2)
}

/// Serializable per-group summary, enough to recompute Q0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub p: usize,
    pub beta_hat: Vec<f64>,
    pub s2: f64,
    /// Row-major `X'X`.
    pub gram: Vec<f64>,
}

impl From<&GroupEstimate> for GroupSummary {
    fn from(e: &GroupEstimate) -> Self {
        let p = e.p();
        Self {
            label: e.label.clone(),
            n: e.n,
            p,
            beta_hat: e.beta_hat.iter().copied().collect(),
            s2: e.s2,
            gram: (0..p * p).map(|i| e.gram[(i / p, i % p)]).collect(),
        }
    }
}

impl GroupSummary {
    pub fn to_estimate(&self) -> Result<GroupEstimate> {
        if self.beta_hat.len() != self.p || self.gram.len() != self.p * self.p {
            return Err(Error::DimensionMismatch(format!("summary for group {}", self.label)));
        }
        GroupEstimate::from_summary(
            self.label.clone(),
            self.n,
            DVector::from_column_slice(&self.beta_hat),
            self.s2,
            DMatrix::from_row_slice(self.p, self.p, &self.gram),
        )
    }
}
