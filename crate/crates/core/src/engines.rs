//! Fiducial and generalized Monte Carlo engines, and a coupled engine that
//! evaluates both quantities from one shared set of normal and chi-square draws.
//!
//! Notation used below, per group `i` with `G_i = X_i'X_i`, `R_i = G_i^{1/2}`,
//! `A = Σ s_i^{-2} G_i` and `ν_i = n_i - p`:
//!
//! * fiducial quantity
//!   `Q_F = Σ t_i't_i - [Σ s_i^{-1} t_i' R_i] A^{-1} [Σ s_i^{-1} R_i t_i]`,
//!   `t_i ~ t_p(ν_i, 0, I)` independent;
//! * generalized test variable
//!   `Q_G = Z' W H diag(ν_i s_i² / U_i · G_i^{-1}) H' W' Z`,
//!   with `H = C ⊗ I_p`, `S = diag(s_i² G_i^{-1})`, `W'W = (H S H')^{-1}`,
//!   `Z ~ N(0, I_{p(k-1)})`, `U_i ~ χ²_{ν_i}`;
//! * coupled form `Q_G* = V' P D P V`, with `q_i = s_i^{-1} R_i A^{-1/2}`,
//!   `P = I - q q'`, `D = diag(ν_i / U_i) ⊗ I_p = D*²`, `V ~ N(0, I_{kp})`.
//!
//! With `T_i = sqrt(ν_i / U_i) V_i`, `Q_F = V' D* P D* V`. `P` and `D*` do not
//! commute, so this is not `V' P D P V` draw by draw. Both matrices are
//! `B'B` and `B B'` for `B = D* P`, however, so they share eigenvalues, and with
//! a spherical `V` the two quadratic forms have the same distribution given `U`.
//! [`compute_rotated_coupled_draw`] makes this exact per draw by feeding the
//! fiducial side `O V`, where `O` is the orthogonal polar factor of `B`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, kron, rel_max_diff, spd_inv_sqrt, spd_inverse};
use crate::model::{check_common_p, clamp_quadratic, weight_sum, GroupEstimate, PooledStatistic};
use crate::rng::{draw_stream, Stream};
use crate::sampling::{mvt_from_parts, sample_chi2, sample_std_normal_vec};

/// Default number of Monte Carlo draws.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Required accuracy of `W'W (H S H') = I` after building the whitener.
pub const WHITENER_TOL: f64 = 1e-8;

/// One realized value of `Q_F`, `Q_G` or `Q_G*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawSample {
    pub q_value: f64,
    pub draw_index: u64,
}

/// Monte Carlo p-value `#{m : Q^(m) > q0} / M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub p_value: f64,
    pub exceedances: u64,
    pub draws: u64,
    pub seed: u64,
    pub std_error: f64,
}

impl MCResult {
    fn new(exceedances: u64, draws: u64, seed: u64) -> Self {
        let p_value = exceedances as f64 / draws as f64;
        Self {
            p_value,
            exceedances,
            draws,
            seed,
            std_error: (p_value * (1.0 - p_value) / draws as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Fiducial,
    Generalized,
}

/// Sign of the last block column of the contrast `C = [I_{k-1} : ±1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContrastSign {
    /// Differences `β_i - β_k`.
    #[default]
    Negative,
    Positive,
}

/// Precomputed matrices shared by every `Q_G` and `Q_G*` draw.
#[derive(Debug, Clone)]
pub struct GeneralizedOperator {
    pub k: usize,
    pub p: usize,
    /// `H = C ⊗ I_p`, `(k-1)p x kp`.
    pub contrast: DMatrix<f64>,
    /// `S = diag(s_i² G_i^{-1})`, `kp x kp`.
    pub block_cov: DMatrix<f64>,
    /// Symmetric `W = (H S H')^{-1/2}`.
    pub whitener: DMatrix<f64>,
    /// `q`, `kp x p`, orthonormal columns.
    pub proj_basis: DMatrix<f64>,
    /// `P = I - q q'`.
    pub projector: DMatrix<f64>,
    pub weight_sum_inv: DMatrix<f64>,
    gram_inv: Vec<DMatrix<f64>>,
    // H'W', applied to Z in every generalized draw
    lifted_whitener: DMatrix<f64>,
}

/// Builds the operator with the default contrast `C = [I_{k-1} : -1]`.
pub fn build_generalized_operator(estimates: &[GroupEstimate]) -> Result<GeneralizedOperator> {
    build_generalized_operator_with(estimates, ContrastSign::default())
}

pub fn build_generalized_operator_with(
    estimates: &[GroupEstimate],
    sign: ContrastSign,
) -> Result<GeneralizedOperator> {
    let k = estimates.len();
    if k < 2 {
        return Err(Error::NeedTwoGroups(k));
    }
    let p = check_common_p(estimates)?;

    let last = match sign {
        ContrastSign::Negative => -1.0,
        ContrastSign::Positive => 1.0,
    };
    let c = DMatrix::from_fn(k - 1, k, |i, j| {
        if j == k - 1 {
            last
        } else if i == j {
            1.0
        } else {
            0.0
        }
    });
    let contrast = kron(&c, &DMatrix::identity(p, p));

    let gram_inv = estimates
        .iter()
        .map(|e| spd_inverse(&e.gram))
        .collect::<Result<Vec<_>>>()?;
    let cov_blocks: Vec<_> = estimates.iter().zip(&gram_inv).map(|(e, gi)| gi * e.s2).collect();
    let block_cov = block_diag(&cov_blocks);

    let hsh = &contrast * &block_cov * contrast.transpose();
    let hsh = (&hsh + hsh.transpose()) * 0.5;
    let whitener = spd_inv_sqrt(&hsh).map_err(|e| Error::NumericallySingular(format!("H S H': {e}")))?;
    let check = whitener.transpose() * &whitener * &hsh;
    let err = rel_max_diff(&check, &DMatrix::identity(p * (k - 1), p * (k - 1)));
    if err > WHITENER_TOL {
        return Err(Error::NumericallySingular(format!(
            "whitener reproduces (H S H')^-1 only to {err:e}"
        )));
    }

    let (a, weight_sum_inv) = weight_sum(estimates)?;
    let a_inv_sqrt = spd_inv_sqrt(&a).map_err(|e| Error::NumericallySingular(format!("weight sum: {e}")))?;
    let mut proj_basis = DMatrix::zeros(k * p, p);
    for (i, e) in estimates.iter().enumerate() {
        let qi = &e.gram_sqrt * &a_inv_sqrt / e.s2.sqrt();
        proj_basis.view_mut((i * p, 0), (p, p)).copy_from(&qi);
    }
    let projector = DMatrix::identity(k * p, k * p) - &proj_basis * proj_basis.transpose();

    let lifted_whitener = contrast.transpose() * whitener.transpose();

    Ok(GeneralizedOperator {
        k,
        p,
        contrast,
        block_cov,
        whitener,
        proj_basis,
        projector,
        weight_sum_inv,
        gram_inv,
        lifted_whitener,
    })
}

fn check_aligned(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!("{what}: expected {want}, got {got}")));
    }
    Ok(())
}

fn check_positive(u: &[f64]) -> Result<()> {
    if u.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput("chi-square draws must be positive and finite".into()));
    }
    Ok(())
}

/// One realization of the fiducial quantity from given multivariate-t vectors.
///
/// `weight_sum_inv` is `A^{-1}` for the same estimates. With `k = 1` the
/// result is identically zero.
///
/// Evaluated as `Σ ||t_i - s_i^{-1} R_i A^{-1} a||²` with `a = Σ s_i^{-1} R_i t_i`,
/// which equals the difference form but does not cancel when `Q_F` is small.
pub fn compute_qf_draw(
    estimates: &[GroupEstimate],
    weight_sum_inv: &DMatrix<f64>,
    t_vectors: &[DVector<f64>],
) -> Result<f64> {
    check_aligned("t vectors", t_vectors.len(), estimates.len())?;
    let p = check_common_p(estimates)?;
    check_aligned("weight_sum_inv rows", weight_sum_inv.nrows(), p)?;
    let mut a = DVector::zeros(p);
    for (e, t) in estimates.iter().zip(t_vectors) {
        check_aligned("t vector length", t.len(), p)?;
        a += (&e.gram_sqrt * t) / e.s2.sqrt();
    }
    let center = weight_sum_inv * a;
    Ok(estimates
        .iter()
        .zip(t_vectors)
        .map(|(e, t)| (t - (&e.gram_sqrt * &center) / e.s2.sqrt()).norm_squared())
        .sum())
}

/// One realization of the generalized test variable from `Z` and `U_1..U_k`.
pub fn compute_qg_draw(
    op: &GeneralizedOperator,
    estimates: &[GroupEstimate],
    z: &DVector<f64>,
    u: &[f64],
) -> Result<f64> {
    let (k, p) = (op.k, op.p);
    check_aligned("groups", estimates.len(), k)?;
    check_aligned("z length", z.len(), p * (k - 1))?;
    check_aligned("chi-square draws", u.len(), k)?;
    check_positive(u)?;
    let y = &op.lifted_whitener * z;
    let mut q = 0.0;
    let mut scale = 0.0;
    for (i, e) in estimates.iter().enumerate() {
        let yi = y.rows(i * p, p);
        let form = (yi.transpose() * &op.gram_inv[i] * yi)[(0, 0)];
        let w = e.df as f64 * e.s2 / u[i];
        q += w * form;
        scale += (w * form).abs();
    }
    clamp_quadratic(q, scale, "Q_G")
}

fn stack_v(op: &GeneralizedOperator, estimates: &[GroupEstimate], v_vectors: &[DVector<f64>], u: &[f64]) -> Result<DVector<f64>> {
    let (k, p) = (op.k, op.p);
    check_aligned("groups", estimates.len(), k)?;
    check_aligned("v vectors", v_vectors.len(), k)?;
    check_aligned("chi-square draws", u.len(), k)?;
    check_positive(u)?;
    let mut v = DVector::zeros(k * p);
    for (i, vi) in v_vectors.iter().enumerate() {
        check_aligned("v vector length", vi.len(), p)?;
        v.rows_mut(i * p, p).copy_from(vi);
    }
    Ok(v)
}

fn unstack(v: &DVector<f64>, k: usize, p: usize) -> Vec<DVector<f64>> {
    (0..k).map(|i| v.rows(i * p, p).into_owned()).collect()
}

/// `D* = diag(sqrt(ν_i / U_i)) ⊗ I_p` as a vector of diagonal entries.
fn scale_diagonal(estimates: &[GroupEstimate], u: &[f64], p: usize) -> DVector<f64> {
    DVector::from_fn(estimates.len() * p, |r, _| (estimates[r / p].df as f64 / u[r / p]).sqrt())
}

fn qg_star_form(op: &GeneralizedOperator, estimates: &[GroupEstimate], v: &DVector<f64>, u: &[f64]) -> f64 {
    let p = op.p;
    let pv = &op.projector * v;
    estimates
        .iter()
        .enumerate()
        .map(|(i, e)| e.df as f64 / u[i] * pv.rows(i * p, p).norm_squared())
        .sum()
}

fn qf_from_normals(op: &GeneralizedOperator, estimates: &[GroupEstimate], v_vectors: &[DVector<f64>], u: &[f64]) -> Result<f64> {
    let t: Vec<_> = v_vectors
        .iter()
        .zip(u)
        .zip(estimates)
        .map(|((vi, &ui), e)| mvt_from_parts(vi, ui, e.df))
        .collect();
    compute_qf_draw(estimates, &op.weight_sum_inv, &t)
}

/// `Q_G* = V' P D P V` in matrix form, and `Q_F` with `T_i = sqrt(ν_i / U_i) V_i`,
/// both from the same `(V, U)`. The two agree in distribution, not draw by draw.
pub fn compute_coupled_draw(
    op: &GeneralizedOperator,
    estimates: &[GroupEstimate],
    v_vectors: &[DVector<f64>],
    u: &[f64],
) -> Result<(f64, f64)> {
    let v = stack_v(op, estimates, v_vectors, u)?;
    let qg_star = qg_star_form(op, estimates, &v, u);
    let qf = qf_from_normals(op, estimates, v_vectors, u)?;
    Ok((qg_star, qf))
}

/// Orthogonal polar factor `O` of `B = D* P`, so that `O' B B' O = B' B`.
///
/// On the range of `B'` it is `B W Σ^{-1} W'` from the eigenpairs of `B'B = P D P`.
/// On `null(B) = span(q)` it maps `q` onto an orthonormal basis of
/// `null(B') = span(D*^{-1} q)`. Built this way rather than from an SVD because
/// `B` always has a `p`-dimensional null space.
pub fn coupling_rotation(op: &GeneralizedOperator, estimates: &[GroupEstimate], u: &[f64]) -> Result<DMatrix<f64>> {
    check_aligned("chi-square draws", u.len(), op.k)?;
    check_positive(u)?;
    let (kp, p) = (op.k * op.p, op.p);
    let d_half = scale_diagonal(estimates, u, p);
    let b = DMatrix::from_diagonal(&d_half) * &op.projector;
    let btb = b.transpose() * &b;
    let eig = ((&btb + btb.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..kp).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut o = DMatrix::zeros(kp, kp);
    for &j in &order[p..] {
        let w = eig.eigenvectors.column(j);
        let sigma = eig.eigenvalues[j].sqrt();
        o += (&b * w / sigma) * w.transpose();
    }
    let scaled_null = DMatrix::from_fn(kp, p, |r, c| op.proj_basis[(r, c)] / d_half[r]);
    let null_left = scaled_null.qr().q();
    o += null_left * op.proj_basis.transpose();
    Ok(o)
}

/// `Q_G*(V)` and `Q_F` evaluated at the rotated normals `O V`; equal draw by draw.
///
/// `O` is a function of `U` alone, so `O V` is again `N(0, I)` and independent of
/// `U`, which keeps the fiducial side a valid draw of `Q_F`.
pub fn compute_rotated_coupled_draw(
    op: &GeneralizedOperator,
    estimates: &[GroupEstimate],
    v_vectors: &[DVector<f64>],
    u: &[f64],
) -> Result<(f64, f64)> {
    let v = stack_v(op, estimates, v_vectors, u)?;
    let qg_star = qg_star_form(op, estimates, &v, u);
    let rotated = coupling_rotation(op, estimates, u)? * &v;
    let qf = qf_from_normals(op, estimates, &unstack(&rotated, op.k, op.p), u)?;
    Ok((qg_star, qf))
}

/// Sorted eigenvalues of `P D P` and of `D* P D*` for one set of chi-square draws.
pub fn coupled_spectra(
    op: &GeneralizedOperator,
    estimates: &[GroupEstimate],
    u: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_aligned("chi-square draws", u.len(), op.k)?;
    check_positive(u)?;
    let d_half = DMatrix::from_diagonal(&scale_diagonal(estimates, u, op.p));
    let d = &d_half * &d_half;
    let pdp = &op.projector * d * &op.projector;
    let dpd = &d_half * &op.projector * &d_half;
    let sorted = |m: DMatrix<f64>| {
        let sym = (&m + m.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    };
    Ok((sorted(pdp), sorted(dpd)))
}

/// Something that turns one random substream into one realized quantity.
pub trait QuantitySampler: Sync {
    fn sample(&self, rng: &mut Stream) -> Result<f64>;

    /// Draw `index` under `seed`, always from the same keyed substream.
    fn draw(&self, seed: u64, index: u64) -> Result<DrawSample> {
        let q_value = self.sample(&mut draw_stream(seed, index))?;
        Ok(DrawSample { q_value, draw_index: index })
    }
}

fn draw_chi2_vector(estimates: &[GroupEstimate], rng: &mut Stream) -> Vec<f64> {
    estimates.iter().map(|e| sample_chi2(e.df, rng)).collect()
}

/// Draws `Q_F`. Consumes `V_1..V_k` then `U_1..U_k`.
pub struct FiducialSampler<'a> {
    estimates: &'a [GroupEstimate],
    weight_sum_inv: DMatrix<f64>,
}

impl<'a> FiducialSampler<'a> {
    pub fn new(estimates: &'a [GroupEstimate]) -> Result<Self> {
        let (_, weight_sum_inv) = weight_sum(estimates)?;
        Ok(Self { estimates, weight_sum_inv })
    }
}

impl QuantitySampler for FiducialSampler<'_> {
    fn sample(&self, rng: &mut Stream) -> Result<f64> {
        let p = self.weight_sum_inv.nrows();
        let v: Vec<_> = self.estimates.iter().map(|_| sample_std_normal_vec(p, rng)).collect();
        let u = draw_chi2_vector(self.estimates, rng);
        let t: Vec<_> = v
            .iter()
            .zip(&u)
            .zip(self.estimates)
            .map(|((vi, &ui), e)| mvt_from_parts(vi, ui, e.df))
            .collect();
        compute_qf_draw(self.estimates, &self.weight_sum_inv, &t)
    }
}

/// Draws `Q_G`. Consumes `Z` then `U_1..U_k`.
pub struct GeneralizedSampler<'a> {
    estimates: &'a [GroupEstimate],
    op: GeneralizedOperator,
}

impl<'a> GeneralizedSampler<'a> {
    pub fn new(estimates: &'a [GroupEstimate]) -> Result<Self> {
        Ok(Self { estimates, op: build_generalized_operator(estimates)? })
    }

    pub fn with_operator(estimates: &'a [GroupEstimate], op: GeneralizedOperator) -> Self {
        Self { estimates, op }
    }
}

impl QuantitySampler for GeneralizedSampler<'_> {
    fn sample(&self, rng: &mut Stream) -> Result<f64> {
        let z = sample_std_normal_vec(self.op.p * (self.op.k - 1), rng);
        let u = draw_chi2_vector(self.estimates, rng);
        compute_qg_draw(&self.op, self.estimates, &z, &u)
    }
}

/// Draws from `χ²_df`, the large-sample reference distribution of Q0.
pub struct ChiSquareSampler {
    pub df: usize,
}

impl QuantitySampler for ChiSquareSampler {
    fn sample(&self, rng: &mut Stream) -> Result<f64> {
        Ok(sample_chi2(self.df, rng))
    }
}

/// Coupled draws `(Q_G*, Q_F)`; consumes the same `V_1..V_k, U_1..U_k` as [`FiducialSampler`].
pub struct CoupledSampler<'a> {
    estimates: &'a [GroupEstimate],
    op: GeneralizedOperator,
}

impl<'a> CoupledSampler<'a> {
    pub fn new(estimates: &'a [GroupEstimate]) -> Result<Self> {
        Ok(Self { estimates, op: build_generalized_operator(estimates)? })
    }

    fn shared_draws(&self, seed: u64, index: u64) -> (Vec<DVector<f64>>, Vec<f64>) {
        let rng = &mut draw_stream(seed, index);
        let v: Vec<_> = self.estimates.iter().map(|_| sample_std_normal_vec(self.op.p, rng)).collect();
        let u = draw_chi2_vector(self.estimates, rng);
        (v, u)
    }

    /// `(Q_G*, Q_F)` from literally shared `(V, U)`.
    pub fn pair(&self, seed: u64, index: u64) -> Result<(DrawSample, DrawSample)> {
        let (v, u) = self.shared_draws(seed, index);
        let (g, f) = compute_coupled_draw(&self.op, self.estimates, &v, &u)?;
        Ok((
            DrawSample { q_value: g, draw_index: index },
            DrawSample { q_value: f, draw_index: index },
        ))
    }

    /// `(Q_G*, Q_F)` with the fiducial side fed the polar-rotated normals.
    pub fn rotated_pair(&self, seed: u64, index: u64) -> Result<(DrawSample, DrawSample)> {
        let (v, u) = self.shared_draws(seed, index);
        let (g, f) = compute_rotated_coupled_draw(&self.op, self.estimates, &v, &u)?;
        Ok((
            DrawSample { q_value: g, draw_index: index },
            DrawSample { q_value: f, draw_index: index },
        ))
    }

    /// Spectra of `P D P` and `D* P D*` for draw `index`.
    pub fn spectra(&self, seed: u64, index: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (_, u) = self.shared_draws(seed, index);
        coupled_spectra(&self.op, self.estimates, &u)
    }

    pub fn operator(&self) -> &GeneralizedOperator {
        &self.op
    }
}

/// Draws `Q_G*` alone. Consumes `V_1..V_k` then `U_1..U_k`.
pub struct CoupledFormSampler<'a>(pub CoupledSampler<'a>);

impl QuantitySampler for CoupledFormSampler<'_> {
    fn sample(&self, rng: &mut Stream) -> Result<f64> {
        let inner = &self.0;
        let v: Vec<_> = inner.estimates.iter().map(|_| sample_std_normal_vec(inner.op.p, rng)).collect();
        let u = draw_chi2_vector(inner.estimates, rng);
        let stacked = stack_v(&inner.op, inner.estimates, &v, &u)?;
        Ok(qg_star_form(&inner.op, inner.estimates, &stacked, &u))
    }
}

/// `draws` realized values in draw-index order.
pub fn sample_values<S: QuantitySampler>(sampler: &S, draws: usize, seed: u64) -> Result<Vec<f64>> {
    (0..draws as u64)
        .into_par_iter()
        .map(|m| sampler.draw(seed, m).map(|d| d.q_value))
        .collect()
}

/// Exceedance p-value of `q0` against any sampler. The count is an integer sum
/// over independently keyed draws, so it does not depend on the thread count.
pub fn mc_pvalue_with<S: QuantitySampler>(sampler: &S, q0: f64, draws: usize, seed: u64) -> Result<MCResult> {
    if draws == 0 {
        return Err(Error::InvalidInput("number of draws must be positive".into()));
    }
    let exceedances = (0..draws as u64)
        .into_par_iter()
        .map(|m| sampler.draw(seed, m).map(|d| u64::from(d.q_value > q0)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(MCResult::new(exceedances, draws as u64, seed))
}

/// Fiducial `P(Q_F > Q0)` or generalized `P(Q_G > Q0)` by Monte Carlo.
pub fn mc_pvalue(
    engine: Engine,
    stat: &PooledStatistic,
    estimates: &[GroupEstimate],
    draws: usize,
    seed: u64,
) -> Result<MCResult> {
    match engine {
        Engine::Fiducial => mc_pvalue_with(&FiducialSampler::new(estimates)?, stat.q0, draws, seed),
        Engine::Generalized => mc_pvalue_with(&GeneralizedSampler::new(estimates)?, stat.q0, draws, seed),
    }
}
