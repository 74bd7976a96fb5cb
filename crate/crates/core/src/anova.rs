//! Equality of means under unequal variances: the intercept-only special case
//! (`p = 1`, `X_i = 1`), written with scalar summaries instead of matrices.

use nalgebra::{DMatrix, DVector};

use crate::engines::QuantitySampler;
use crate::error::{Error, Result};
use crate::linalg::spd_inv_sqrt;
use crate::model::{clamp_quadratic, RegressionGroup};
use crate::rng::Stream;
use crate::sampling::{sample_chi2, sample_std_normal_vec};

/// Sample mean, unbiased variance and size of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaGroupSummary {
    pub mean: f64,
    pub s2: f64,
    pub n: usize,
}

impl AnovaGroupSummary {
    pub fn new(mean: f64, s2: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientData { group: format!("mean {mean}"), n, p: 1 });
        }
        if !(s2 > 0.0 && s2.is_finite() && mean.is_finite()) {
            return Err(Error::DegenerateFit { group: format!("mean {mean}"), s2 });
        }
        Ok(Self { mean, s2, n })
    }

    pub fn from_sample(sample: &[f64]) -> Result<Self> {
        let n = sample.len();
        if n < 2 {
            return Err(Error::InsufficientData { group: "sample".into(), n, p: 1 });
        }
        let mean = sample.iter().sum::<f64>() / n as f64;
        let s2 = sample.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self::new(mean, s2, n)
    }

    fn df(&self) -> f64 {
        (self.n - 1) as f64
    }

    /// Precision weight `n / s²`.
    fn weight(&self) -> f64 {
        self.n as f64 / self.s2
    }
}

/// Intercept-only regression groups, labelled `g1, g2, ...`.
pub fn to_regression(samples: &[Vec<f64>]) -> Result<Vec<RegressionGroup>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.len() < 2 {
                return Err(Error::InsufficientData { group: format!("g{}", i + 1), n: s.len(), p: 1 });
            }
            RegressionGroup::intercept_only(format!("g{}", i + 1), s)
        })
        .collect()
}

pub fn summarize(samples: &[Vec<f64>]) -> Result<Vec<AnovaGroupSummary>> {
    samples.iter().map(|s| AnovaGroupSummary::from_sample(s)).collect()
}

/// Q0 for means: `Σ w_i (ȳ_i - ȳ_w)²` with `w_i = n_i / s_i²`.
pub fn anova_q0(summaries: &[AnovaGroupSummary]) -> Result<f64> {
    if summaries.len() < 2 {
        return Err(Error::NeedTwoGroups(summaries.len()));
    }
    let wsum: f64 = summaries.iter().map(AnovaGroupSummary::weight).sum();
    let wmean = summaries.iter().map(|g| g.weight() * g.mean).sum::<f64>() / wsum;
    Ok(summaries.iter().map(|g| g.weight() * (g.mean - wmean).powi(2)).sum())
}

/// Squared Welch statistic `(ȳ_1 - ȳ_2)² / (s_1²/n_1 + s_2²/n_2)`.
pub fn welch_statistic_squared(a: &AnovaGroupSummary, b: &AnovaGroupSummary) -> f64 {
    (a.mean - b.mean).powi(2) / (a.s2 / a.n as f64 + b.s2 / b.n as f64)
}

/// `Σ t_i² - (Σ w_i t_i)² / Σ w_i²` with `w_i = √n_i / s_i`, evaluated as
/// `Σ (t_i - w_i m)²`, `m = Σ w_i t_i / Σ w_i²`.
pub fn compute_qf_anova_draw(summaries: &[AnovaGroupSummary], t_values: &[f64]) -> Result<f64> {
    if summaries.len() != t_values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} groups but {} t values",
            summaries.len(),
            t_values.len()
        )));
    }
    let w = |g: &AnovaGroupSummary| (g.n as f64).sqrt() / g.s2.sqrt();
    let cross: f64 = summaries.iter().zip(t_values).map(|(g, t)| w(g) * t).sum();
    let wsum: f64 = summaries.iter().map(AnovaGroupSummary::weight).sum();
    let m = cross / wsum;
    Ok(summaries.iter().zip(t_values).map(|(g, t)| (t - w(g) * m).powi(2)).sum())
}

/// Whitened contrast for the means problem: `C = [I_{k-1} : -1]`, `W = (C S C')^{-1/2}`,
/// `S = diag(s_i² / n_i)`.
#[derive(Debug, Clone)]
pub struct AnovaOperator {
    // C'W', k x (k-1)
    lifted_whitener: DMatrix<f64>,
}

impl AnovaOperator {
    pub fn new(summaries: &[AnovaGroupSummary]) -> Result<Self> {
        let k = summaries.len();
        if k < 2 {
            return Err(Error::NeedTwoGroups(k));
        }
        // C S C' = diag(v_1..v_{k-1}) + v_k 11'
        let v: Vec<f64> = summaries.iter().map(|g| g.s2 / g.n as f64).collect();
        let css = DMatrix::from_fn(k - 1, k - 1, |i, j| if i == j { v[i] + v[k - 1] } else { v[k - 1] });
        let w = spd_inv_sqrt(&css).map_err(|e| Error::NumericallySingular(format!("C S C': {e}")))?;
        let c = DMatrix::from_fn(k - 1, k, |i, j| {
            if j == k - 1 {
                -1.0
            } else if i == j {
                1.0
            } else {
                0.0
            }
        });
        Ok(Self { lifted_whitener: c.transpose() * w.transpose() })
    }

    pub fn qg(&self, summaries: &[AnovaGroupSummary], z: &DVector<f64>, u: &[f64]) -> Result<f64> {
        let k = summaries.len();
        if z.len() + 1 != k || u.len() != k || self.lifted_whitener.nrows() != k {
            return Err(Error::DimensionMismatch(format!(
                "{k} groups, z of length {}, {} chi-square draws",
                z.len(),
                u.len()
            )));
        }
        if u.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("chi-square draws must be positive and finite".into()));
        }
        let y = &self.lifted_whitener * z;
        let mut q = 0.0;
        for (i, g) in summaries.iter().enumerate() {
            q += g.df() * g.s2 / (g.n as f64 * u[i]) * y[i] * y[i];
        }
        clamp_quadratic(q, q.abs(), "Q_G")
    }
}

/// `Z' W C diag((n_i - 1) s_i² / (n_i U_i)) C' W' Z`.
pub fn compute_qg_anova_draw(summaries: &[AnovaGroupSummary], z: &DVector<f64>, u: &[f64]) -> Result<f64> {
    AnovaOperator::new(summaries)?.qg(summaries, z, u)
}

/// Fiducial draws for the means problem; consumes `V_1..V_k` then `U_1..U_k`,
/// matching the general fiducial sampler with `p = 1`.
pub struct AnovaFiducialSampler<'a> {
    pub summaries: &'a [AnovaGroupSummary],
}

impl QuantitySampler for AnovaFiducialSampler<'_> {
    fn sample(&self, rng: &mut Stream) -> Result<f64> {
        let v: Vec<f64> = self.summaries.iter().map(|_| sample_std_normal_vec(1, rng)[0]).collect();
        let u: Vec<f64> = self.summaries.iter().map(|g| sample_chi2(g.n - 1, rng)).collect();
        let t: Vec<f64> = v
            .iter()
            .zip(&u)
            .zip(self.summaries)
            .map(|((vi, ui), g)| vi * (g.df() / ui).sqrt())
            .collect();
        compute_qf_anova_draw(self.summaries, &t)
    }
}

/// Generalized draws for the means problem; consumes `Z` then `U_1..U_k`.
pub struct AnovaGeneralizedSampler<'a> {
    summaries: &'a [AnovaGroupSummary],
    op: AnovaOperator,
}

impl<'a> AnovaGeneralizedSampler<'a> {
    pub fn new(summaries: &'a [AnovaGroupSummary]) -> Result<Self> {
        Ok(Self { summaries, op: AnovaOperator::new(summaries)? })
    }
}

impl QuantitySampler for AnovaGeneralizedSampler<'_> {
    fn sample(&self, rng: &mut Stream) -> Result<f64> {
        let z = sample_std_normal_vec(self.summaries.len() - 1, rng);
        let u: Vec<f64> = self.summaries.iter().map(|g| sample_chi2(g.n - 1, rng)).collect();
        self.op.qg(self.summaries, &z, &u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::{build_generalized_operator, compute_qf_draw, compute_qg_draw};
    use crate::model::{compute_q0, fit_groups, weight_sum};

    fn samples() -> Vec<Vec<f64>> {
        vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn conversion_recovers_mean_and_variance() {
        let est = fit_groups(&to_regression(&samples()).unwrap()).unwrap();
        assert!((est[0].beta_hat[0] - 2.0).abs() < 1e-14 && (est[1].beta_hat[0] - 4.0).abs() < 1e-14);
        assert!((est[0].s2 - 1.0).abs() < 1e-14 && (est[1].s2 - 4.0).abs() < 1e-14);
    }

    #[test]
    fn single_observation_rejected() {
        assert!(matches!(
            to_regression(&[vec![1.0, 2.0], vec![3.0]]),
            Err(Error::InsufficientData { n: 1, .. })
        ));
    }

    #[test]
    fn empty_group_list_needs_two_groups() {
        let est = fit_groups(&to_regression(&[]).unwrap()).unwrap();
        assert_eq!(compute_q0(&est), Err(Error::NeedTwoGroups(0)));
        assert_eq!(anova_q0(&[]), Err(Error::NeedTwoGroups(0)));
    }

    #[test]
    fn q0_matches_general_and_welch() {
        let s = summarize(&samples()).unwrap();
        let q = anova_q0(&s).unwrap();
        assert!((q - 2.4).abs() < 1e-12);
        assert!(rel(q, welch_statistic_squared(&s[0], &s[1])) < 1e-12);
        let general = compute_q0(&fit_groups(&to_regression(&samples()).unwrap()).unwrap()).unwrap().q0;
        assert!(rel(q, general) < 1e-12);
    }

    #[test]
    fn qf_edge_cases() {
        let s = summarize(&samples()).unwrap();
        assert_eq!(compute_qf_anova_draw(&s, &[0.0, 0.0]).unwrap(), 0.0);
        for t in [-3.0, 0.2, 11.0] {
            assert!(compute_qf_anova_draw(&s[..1], &[t]).unwrap() <= 1e-12 * t * t);
        }
        assert!(matches!(compute_qf_anova_draw(&s, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn qf_matches_general() {
        let data = vec![vec![0.3, 1.9, 2.2, 0.7], vec![5.0, 4.1, 6.6], vec![-1.0, 0.5, 0.1, 2.0, 1.4]];
        let s = summarize(&data).unwrap();
        let est = fit_groups(&to_regression(&data).unwrap()).unwrap();
        let (_, inv) = weight_sum(&est).unwrap();
        for t in [[0.5, -1.2, 2.0], [3.1, 0.0, -0.4], [-2.2, -2.2, 1.0]] {
            let tv: Vec<_> = t.iter().map(|&x| DVector::from_vec(vec![x])).collect();
            let general = compute_qf_draw(&est, &inv, &tv).unwrap();
            assert!(rel(compute_qf_anova_draw(&s, &t).unwrap(), general) < 1e-12);
        }
    }

    #[test]
    fn qg_matches_general_and_scalar_case() {
        let s = summarize(&samples()).unwrap();
        assert_eq!(compute_qg_anova_draw(&s, &DVector::zeros(1), &[1.0, 1.0]).unwrap(), 0.0);
        for z in [0.7, -2.5] {
            let q = compute_qg_anova_draw(&s, &DVector::from_vec(vec![z]), &[2.0, 2.0]).unwrap();
            assert!((q - z * z).abs() < 1e-14);
        }

        let data = vec![vec![0.3, 1.9, 2.2, 0.7], vec![5.0, 4.1, 6.6], vec![-1.0, 0.5, 0.1, 2.0, 1.4]];
        let s = summarize(&data).unwrap();
        let est = fit_groups(&to_regression(&data).unwrap()).unwrap();
        let op = build_generalized_operator(&est).unwrap();
        let z = DVector::from_vec(vec![1.1, -0.6]);
        let u = [2.5, 0.9, 6.1];
        let general = compute_qg_draw(&op, &est, &z, &u).unwrap();
        assert!(rel(compute_qg_anova_draw(&s, &z, &u).unwrap(), general) < 1e-12);
    }
}
