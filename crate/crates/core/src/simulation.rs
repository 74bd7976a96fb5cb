//! Simulated datasets, empirical size of the three tests, and two-sample
//! Kolmogorov-Smirnov comparisons between Monte Carlo engines.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::{
    mc_pvalue, sample_values, ChiSquareSampler, Engine, FiducialSampler, GeneralizedSampler, QuantitySampler,
};
use crate::error::{Error, Result};
use crate::model::{chi2_pvalue, compute_q0, fit_groups, GroupEstimate, RegressionGroup};
use crate::rng::{inner_seed, keyed, Domain};

/// Lower bound accepted for any `σ_i²` in a scenario.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Asymptotic two-sample KS coefficient at the 1% level.
pub const KS_C_1PCT: f64 = 1.628;

/// How each replicate's design matrices are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignSpec {
    /// Intercept column plus `p - 1` i.i.d. Uniform(0, 1) covariates, redrawn per replicate.
    #[default]
    Generated,
    /// One fixed `n_i x p` matrix per group, given as rows.
    Fixed { matrices: Vec<Vec<Vec<f64>>> },
}

/// Population model for simulated data, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub k: usize,
    pub p: usize,
    pub n: Vec<usize>,
    /// True coefficients per group; all zero when omitted.
    #[serde(default)]
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationScenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut s: Self = toml::from_str(text).map_err(|e| Error::Schema(format!("scenario: {e}")))?;
        if s.beta.is_empty() {
            s.beta = vec![vec![0.0; s.p]; s.k];
        }
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let (k, p) = (self.k, self.p);
        if k < 2 {
            return Err(Error::NeedTwoGroups(k));
        }
        if p == 0 {
            return Err(Error::InvalidInput("p must be at least 1".into()));
        }
        if self.n.len() != k || self.sigma2.len() != k || self.beta.len() != k {
            return Err(Error::Schema(format!("n, sigma2 and beta must each have k = {k} entries")));
        }
        if let Some(b) = self.beta.iter().find(|b| b.len() != p) {
            return Err(Error::Schema(format!("beta vector {b:?} does not have p = {p} entries")));
        }
        if let Some((i, &n)) = self.n.iter().enumerate().find(|(_, &n)| n <= p) {
            return Err(Error::InsufficientData { group: format!("g{}", i + 1), n, p });
        }
        if self.sigma2.iter().any(|&s| !(s >= SIGMA2_FLOOR && s.is_finite())) {
            return Err(Error::InvalidInput(format!("every sigma2 must be finite and >= {SIGMA2_FLOOR:e}")));
        }
        if let DesignSpec::Fixed { matrices } = &self.design {
            if matrices.len() != k {
                return Err(Error::Schema(format!("fixed design needs {k} matrices")));
            }
            for (i, m) in matrices.iter().enumerate() {
                if m.len() != self.n[i] || m.iter().any(|row| row.len() != p) {
                    return Err(Error::Schema(format!("fixed design {} must be {} x {p}", i + 1, self.n[i])));
                }
            }
        }
        Ok(())
    }

    /// True when every group shares the same coefficient vector.
    pub fn is_null(&self) -> bool {
        self.beta.windows(2).all(|w| w[0] == w[1])
    }

    pub fn df_chi2(&self) -> usize {
        self.p * (self.k - 1)
    }
}

/// Replicate `replicate_index` of the scenario: `Y_i = X_i β_i + ε_i`, `ε_i ~ N(0, σ_i² I)`.
pub fn generate_dataset(scenario: &SimulationScenario, replicate_index: u64) -> Result<Vec<RegressionGroup>> {
    scenario.validate()?;
    let mut rng = keyed(scenario.seed, Domain::Dataset, replicate_index, 0);
    let p = scenario.p;
    (0..scenario.k)
        .map(|i| {
            let n = scenario.n[i];
            let design = match &scenario.design {
                DesignSpec::Generated => {
                    DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() })
                }
                DesignSpec::Fixed { matrices } => {
                    DMatrix::from_fn(n, p, |r, c| matrices[i][r][c])
                }
            };
            let beta = DVector::from_column_slice(&scenario.beta[i]);
            let sd = scenario.sigma2[i].sqrt();
            let noise = DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
            let response = &design * beta + noise;
            RegressionGroup::new(format!("g{}", i + 1), design, response)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chi2,
    Fiducial,
    Generalized,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Chi2 => "chi2",
            Method::Fiducial => "fiducial",
            Method::Generalized => "generalized",
        })
    }
}

/// p-value of one dataset under `method`; `draws` and `seed` only matter for Monte Carlo methods.
pub fn method_pvalue(method: Method, estimates: &[GroupEstimate], draws: usize, seed: u64) -> Result<f64> {
    let stat = compute_q0(estimates)?;
    match method {
        Method::Chi2 => Ok(chi2_pvalue(&stat)),
        Method::Fiducial => Ok(mc_pvalue(Engine::Fiducial, &stat, estimates, draws, seed)?.p_value),
        Method::Generalized => Ok(mc_pvalue(Engine::Generalized, &stat, estimates, draws, seed)?.p_value),
    }
}

/// Empirical rejection rate of a test under a null scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub method: Method,
    pub nominal_alpha: f64,
    pub rejections: u64,
    pub replications: u64,
    pub empirical_size: f64,
    /// Normal-approximation 95% binomial half-width around `empirical_size`.
    pub mc_half_width: f64,
}

impl SizeReport {
    pub fn excess(&self) -> f64 {
        self.empirical_size - self.nominal_alpha
    }
}

/// Runs `replications` null datasets and counts rejections at `p <= alpha`.
///
/// Replicate `r` draws its data from substream `(seed, r)` and its inner Monte
/// Carlo p-value from a separate seed derived from `(seed, r)`.
pub fn estimate_size(
    scenario: &SimulationScenario,
    method: Method,
    alpha: f64,
    replications: usize,
    draws: usize,
) -> Result<SizeReport> {
    if replications == 0 {
        return Err(Error::InvalidInput("replications must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !scenario.is_null() {
        return Err(Error::InvalidInput("size study needs equal beta across groups".into()));
    }
    scenario.validate()?;
    let rejections = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let est = fit_groups(&generate_dataset(scenario, r)?)?;
            let pv = method_pvalue(method, &est, draws, inner_seed(scenario.seed, r))?;
            Ok::<u64, Error>(u64::from(pv <= alpha))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let size = rejections as f64 / replications as f64;
    Ok(SizeReport {
        method,
        nominal_alpha: alpha,
        rejections,
        replications: replications as u64,
        empirical_size: size,
        mc_half_width: 1.96 * (size * (1.0 - size) / replications as f64).sqrt(),
    })
}

/// Average Q0 over `replications` datasets from the scenario.
pub fn mean_q0(scenario: &SimulationScenario, replications: usize) -> Result<f64> {
    if replications == 0 {
        return Err(Error::InvalidInput("replications must be positive".into()));
    }
    let qs = (0..replications as u64)
        .into_par_iter()
        .map(|r| Ok(compute_q0(&fit_groups(&generate_dataset(scenario, r)?)?)?.q0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(qs.iter().sum::<f64>() / replications as f64)
}

/// Two-sample KS distance `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 1% critical value for sample sizes `m` and `n`.
pub fn ks_critical_1pct(m: usize, n: usize) -> f64 {
    KS_C_1PCT * ((m + n) as f64 / (m as f64 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsComparison {
    pub draws: u64,
    pub distance: f64,
    pub critical_value: f64,
    pub passed: bool,
}

/// KS comparison of `draws` values from each of two samplers with independent seeds.
pub fn compare_samplers<A: QuantitySampler, B: QuantitySampler>(
    a: &A,
    seed_a: u64,
    b: &B,
    seed_b: u64,
    draws: usize,
) -> Result<KsComparison> {
    if draws < 1000 {
        return Err(Error::InvalidInput("distribution comparison needs at least 1000 draws".into()));
    }
    let xa = sample_values(a, draws, seed_a)?;
    let xb = sample_values(b, draws, seed_b)?;
    let distance = ks_distance(&xa, &xb);
    let critical_value = ks_critical_1pct(draws, draws);
    Ok(KsComparison { draws: draws as u64, distance, critical_value, passed: distance < critical_value })
}

/// Separate seed for the second sample of a comparison.
fn partner_seed(seed: u64) -> u64 {
    keyed(seed, Domain::Inner, u64::MAX, 1).next_u64()
}

/// `Q_F` draws against `Q_G` draws on the same estimates.
pub fn compare_distributions(estimates: &[GroupEstimate], draws: usize, seed: u64) -> Result<KsComparison> {
    compare_samplers(
        &FiducialSampler::new(estimates)?,
        seed,
        &GeneralizedSampler::new(estimates)?,
        partner_seed(seed),
        draws,
    )
}

/// `Q_F` draws against `χ²_{p(k-1)}` draws.
pub fn compare_fiducial_to_chi2(estimates: &[GroupEstimate], draws: usize, seed: u64) -> Result<KsComparison> {
    let k = estimates.len();
    if k < 2 {
        return Err(Error::NeedTwoGroups(k));
    }
    let df = estimates[0].p() * (k - 1);
    compare_samplers(
        &FiducialSampler::new(estimates)?,
        seed,
        &ChiSquareSampler { df },
        partner_seed(seed),
        draws,
    )
}
