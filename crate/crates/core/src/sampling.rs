//! Normal, chi-square and multivariate-t draws.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// `dim` i.i.d. standard normals.
pub fn sample_std_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// One chi-square variate with `df` degrees of freedom.
///
/// For `df = 1` this is exactly the square of one standard normal from the stream.
pub fn sample_chi2<R: Rng + ?Sized>(df: usize, rng: &mut R) -> f64 {
    assert!(df >= 1, "chi-square needs df >= 1");
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .sample(rng)
}

/// `sqrt(df / u) * v`: a multivariate t vector from its normal and chi-square parts.
pub fn mvt_from_parts(v: &DVector<f64>, u: f64, df: usize) -> DVector<f64> {
    v * (df as f64 / u).sqrt()
}

/// Spherical multivariate t with `df` degrees of freedom: draws `V` then `U`.
pub fn sample_mvt<R: Rng + ?Sized>(dim: usize, df: usize, rng: &mut R) -> DVector<f64> {
    let v = sample_std_normal_vec(dim, rng);
    let u = sample_chi2(df, rng);
    mvt_from_parts(&v, u, df)
}
