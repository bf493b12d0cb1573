//! Random-variate generation for the distribution families the Gibbs sampler
//! draws from: multivariate normal, Wishart, inverse Wishart, matrix normal,
//! and gamma.
//!
//! Samplers are pure given their parameters and a [`RandomSource`], so they
//! may run concurrently on distinct streams. Matrix-valued samplers
//! symmetrize their output before returning.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{is_zero, jittered_cholesky, max_asymmetry, spd_inverse, symmetrize};
use crate::rng::RandomSource;

/// Relative tolerance for rejecting visibly asymmetric covariance inputs.
const SYMMETRY_TOL: f64 = 1e-9;

fn check_symmetric(m: &DMatrix<f64>, context: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{context} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = 1.0 + m.amax();
    if max_asymmetry(m) > SYMMETRY_TOL * scale {
        return Err(Error::DecompositionFailure {
            context: format!("{context} (not symmetric)"),
        });
    }
    Ok(())
}

/// Vector of independent standard normal draws, filled in index order.
fn standard_normal_vector(k: usize, rng: &mut RandomSource) -> DVector<f64> {
    let mut z = DVector::zeros(k);
    for i in 0..k {
        z[i] = rng.sample(StandardNormal);
    }
    z
}

/// Draw from N(mean, covariance).
///
/// An all-zero covariance is treated as degenerate and returns the mean
/// exactly, consuming no variates.
pub fn sample_mvn(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RandomSource,
) -> Result<DVector<f64>> {
    let k = mean.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(Error::ShapeMismatch(format!(
            "mvn covariance is {}x{} for mean of length {k}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    check_symmetric(covariance, "mvn covariance")?;
    if is_zero(covariance) {
        return Ok(mean.clone());
    }
    let chol = jittered_cholesky(covariance, "mvn covariance")?;
    let z = standard_normal_vector(k, rng);
    Ok(mean + chol.l() * z)
}

/// Draw from N(mean, precision⁻¹) without forming the covariance: the
/// perturbation is `L⁻ᵀ z` for `precision = L Lᵀ`.
pub fn sample_mvn_precision(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    context: &str,
    rng: &mut RandomSource,
) -> Result<DVector<f64>> {
    let chol = jittered_cholesky(precision, context)?;
    let z = standard_normal_vector(mean.len(), rng);
    let perturb = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::DecompositionFailure {
            context: context.to_string(),
        })?;
    Ok(mean + perturb)
}

/// Draw from the Gaussian given in natural parameters: precision Λ and
/// shift `rhs = Λ μ`. Returns a draw from N(Λ⁻¹ rhs, Λ⁻¹).
pub fn sample_mvn_natural(
    precision: &DMatrix<f64>,
    rhs: &DVector<f64>,
    context: &str,
    rng: &mut RandomSource,
) -> Result<DVector<f64>> {
    let chol = jittered_cholesky(precision, context)?;
    let mean = chol.solve(rhs);
    let z = standard_normal_vector(rhs.len(), rng);
    let perturb = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::DecompositionFailure {
            context: context.to_string(),
        })?;
    Ok(mean + perturb)
}

/// Draw from the Wishart distribution W(scale, dof) via the Bartlett
/// construction: `L A Aᵀ Lᵀ` with `L` the Cholesky factor of the scale,
/// chi-distributed diagonal and standard-normal subdiagonal in `A`.
pub fn sample_wishart(
    scale: &DMatrix<f64>,
    dof: f64,
    rng: &mut RandomSource,
) -> Result<DMatrix<f64>> {
    check_symmetric(scale, "wishart scale")?;
    let k = scale.nrows();
    if dof <= k as f64 - 1.0 {
        return Err(Error::InvalidDof { dof, dim: k });
    }
    let chol = jittered_cholesky(scale, "wishart scale")?;

    let mut bartlett = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        // dof - i > 0 is guaranteed by the dof check above
        let chi = ChiSquared::new(dof - i as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-squared dof: {e}")))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
    }
    for i in 1..k {
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }

    let factor = chol.l() * bartlett;
    let mut draw = &factor * factor.transpose();
    symmetrize(&mut draw);
    Ok(draw)
}

/// Draw Σ with Σ⁻¹ ~ W(scale⁻¹, dof), i.e. Σ ~ IW(scale, dof).
pub fn sample_inverse_wishart(
    scale: &DMatrix<f64>,
    dof: f64,
    rng: &mut RandomSource,
) -> Result<DMatrix<f64>> {
    check_symmetric(scale, "inverse-wishart scale")?;
    let inv_scale = spd_inverse(scale, "inverse-wishart scale")?;
    let precision = sample_wishart(&inv_scale, dof, rng)?;
    spd_inverse(&precision, "inverse-wishart draw")
}

/// Draw from the matrix normal MN(mean, row_cov, col_cov) as
/// `mean + L_r Z L_cᵀ` with `Z` i.i.d. standard normal.
///
/// If either covariance factor is all-zero the distribution is degenerate
/// and the mean is returned exactly.
pub fn sample_matrix_normal(
    mean: &DMatrix<f64>,
    row_cov: &DMatrix<f64>,
    col_cov: &DMatrix<f64>,
    rng: &mut RandomSource,
) -> Result<DMatrix<f64>> {
    let (n, k) = (mean.nrows(), mean.ncols());
    if row_cov.nrows() != n || col_cov.nrows() != k {
        return Err(Error::ShapeMismatch(format!(
            "matrix-normal mean is {n}x{k} but row_cov is {}x{} and col_cov {}x{}",
            row_cov.nrows(),
            row_cov.ncols(),
            col_cov.nrows(),
            col_cov.ncols()
        )));
    }
    check_symmetric(row_cov, "matrix-normal row covariance")?;
    check_symmetric(col_cov, "matrix-normal column covariance")?;
    if is_zero(row_cov) || is_zero(col_cov) {
        return Ok(mean.clone());
    }
    let l_row = jittered_cholesky(row_cov, "matrix-normal row covariance")?;
    let l_col = jittered_cholesky(col_cov, "matrix-normal column covariance")?;
    let mut z = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(mean + l_row.l() * z * l_col.l().transpose())
}

/// Draw from Gamma(shape, rate) with mean `shape / rate`.
///
/// Extremely small shapes (the 1e-6 reference prior) produce draws whose
/// magnitude underflows f64; those are clamped to the smallest positive
/// value so the result stays finite and positive.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RandomSource) -> Result<f64> {
    if [shape, rate].iter().any(|v| *v <= 0.0 || v.is_nan()) {
        return Err(Error::InvalidParameter(format!(
            "gamma requires shape > 0 and rate > 0, got shape={shape}, rate={rate}"
        )));
    }
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameter(format!("gamma parameters: {e}")))?;
    let draw: f64 = dist.sample(rng);
    Ok(draw.max(f64::MIN_POSITIVE))
}
