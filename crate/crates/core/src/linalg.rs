use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric positive-definite matrix with cached factors.
#[derive(Clone, Debug)]
pub struct Spd {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// Lower Cholesky factor.
    pub chol: DMatrix<f64>,
    pub log_det: f64,
    pub eig_min: f64,
    pub eig_max: f64,
}

impl Spd {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::NotSpd(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd("non-finite entry".into()));
        }
        let norm = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * norm {
                    return Err(Error::NotSpd(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let sym = symmetrize(&matrix);
        let eig = SymmetricEigen::new(sym.clone());
        let eig_min = eig.eigenvalues.min();
        let eig_max = eig.eigenvalues.max();
        if eig_min <= 0.0 {
            return Err(Error::NotSpd(format!("minimum eigenvalue {eig_min:e}")));
        }
        let chol = nalgebra::Cholesky::new(sym.clone())
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inverse = symmetrize(&chol.inverse());
        Ok(Self {
            matrix: sym,
            inverse,
            chol: l,
            log_det,
            eig_min,
            eig_max,
        })
    }

    pub fn scaled_identity(d: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * value)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn eigenvalues_sym(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 1 {
        return DVector::from_element(1, m[(0, 0)]);
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Squared 2-Wasserstein distance between two Gaussians.
pub fn gaussian_w2_squared(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> f64 {
    let mean_part = (m1 - m2).norm_squared();
    if s1.nrows() == 1 {
        let a = s1[(0, 0)].max(0.0).sqrt();
        let b = s2[(0, 0)].max(0.0).sqrt();
        return mean_part + (a - b).powi(2);
    }
    let r2 = sqrt_psd(s2);
    let cross = sqrt_psd(&(&r2 * s1 * &r2));
    let cov_part = s1.trace() + s2.trace() - 2.0 * cross.trace();
    mean_part + cov_part.max(0.0)
}
