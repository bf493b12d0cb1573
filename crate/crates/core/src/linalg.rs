//! Small dense linear-algebra helpers shared by the samplers and the Gibbs
//! conditionals: symmetrization, jittered Cholesky, SPD inversion.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Jitter escalation ladder applied before giving up on a Cholesky
/// factorization. Each step adds `eps * trace/K` to the diagonal.
const JITTER_STEPS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Replace `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// True when every entry is exactly zero.
pub fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v == 0.0)
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// Gibbs conditionals can be numerically semi-definite at high missing
/// rates; a trace-scaled diagonal bump recovers those cases. Fails with a
/// [`Error::DecompositionFailure`] naming `context` once the ladder is
/// exhausted.
pub fn jittered_cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let k = m.nrows() as f64;
    let base = m.trace() / k;
    if base > 0.0 {
        for eps in JITTER_STEPS {
            let mut jittered = m.clone();
            let bump = eps * base;
            for i in 0..m.nrows() {
                jittered[(i, i)] += bump;
            }
            if let Some(chol) = Cholesky::new(jittered) {
                log::debug!(
                    target: "btmf::linalg",
                    "jitter eps={eps:.0e} recovered factorization of {context}"
                );
                return Ok(chol);
            }
        }
    }
    Err(Error::DecompositionFailure {
        context: context.to_string(),
    })
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
/// The result is symmetrized before return.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let mut inv = jittered_cholesky(m, context)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}
