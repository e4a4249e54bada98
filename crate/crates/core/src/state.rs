//! Density matrices and classical probability vectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::basis::{checked_dim, Configuration, Levels};
use crate::error::{Error, Result};

/// Density matrix over the `b^N` classical basis, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    levels: Levels,
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    /// Wraps row-major entries without validating physicality.
    pub fn from_row_major(n_sites: usize, levels: Levels, data: Vec<C64>) -> Result<Self> {
        let dim = checked_dim(levels.base(), n_sites)?;
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self {
            n_sites,
            levels,
            dim,
            data,
        })
    }

    pub fn from_dmatrix(n_sites: usize, levels: Levels, m: &DMatrix<C64>) -> Result<Self> {
        let data = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
            .collect();
        Self::from_row_major(n_sites, levels, data)
    }

    /// Projector onto a normalized pure state.
    pub fn pure(n_sites: usize, levels: Levels, psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if norm <= 0.0 {
            return Err(Error::InvalidSpec("pure state has zero norm".into()));
        }
        let data = psi
            .iter()
            .flat_map(|a| psi.iter().map(move |b| a * b.conj() / norm))
            .collect();
        Self::from_row_major(n_sites, levels, data)
    }

    pub fn from_configuration(config: &Configuration) -> Result<Self> {
        let mut rho = Self::zeros(config.n_sites(), config.levels())?;
        let i = config.index();
        rho.data[i * rho.dim + i] = C64::new(1.0, 0.0);
        Ok(rho)
    }

    pub fn maximally_mixed(n_sites: usize, levels: Levels) -> Result<Self> {
        let mut rho = Self::zeros(n_sites, levels)?;
        let p = 1.0 / rho.dim as f64;
        for i in 0..rho.dim {
            rho.data[i * rho.dim + i] = C64::new(p, 0.0);
        }
        Ok(rho)
    }

    /// Diagonal density matrix holding a classical distribution.
    pub fn from_probabilities(p: &ProbabilityVector) -> Result<Self> {
        let mut rho = Self::zeros(p.n_sites(), Levels::Two)?;
        for (i, &w) in p.values().iter().enumerate() {
            rho.data[i * rho.dim + i] = C64::new(w, 0.0);
        }
        Ok(rho)
    }

    pub fn zeros(n_sites: usize, levels: Levels) -> Result<Self> {
        let dim = checked_dim(levels.base(), n_sites)?;
        Self::from_row_major(n_sites, levels, vec![C64::new(0.0, 0.0); dim * dim])
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// Replaces the matrix by its Hermitian part.
    pub fn hermitize(&mut self) {
        let d = self.dim;
        for r in 0..d {
            for c in r..d {
                let avg = 0.5 * (self.data[r * d + c] + self.data[c * d + r].conj());
                self.data[r * d + c] = avg;
                self.data[c * d + r] = avg.conj();
            }
        }
    }

    pub fn normalize_trace(&mut self) {
        let t = self.trace().re;
        if t != 0.0 {
            self.data.iter_mut().for_each(|z| *z /= t);
        }
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.to_dmatrix())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Checks Hermiticity, unit trace and positivity at the documented tolerances.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::InvalidSpec(format!(
                "density matrix not Hermitian ({herm:e})"
            )));
        }
        let t = self.trace();
        if (t - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidSpec(format!(
                "density matrix trace {t} differs from 1"
            )));
        }
        let lam = self.min_eigenvalue();
        if lam < -1e-8 {
            return Err(Error::InvalidSpec(format!(
                "density matrix eigenvalue {lam:e} < 0"
            )));
        }
        Ok(())
    }

    /// Populations as a probability vector (two-level only).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i).re).collect()
    }
}

/// Ascending eigenvalues of the Hermitian part of a square matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Classical distribution over the `2^N` configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    n_sites: usize,
    values: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates nonnegativity and normalization.
    pub fn new(n_sites: usize, values: Vec<f64>) -> Result<Self> {
        let v = Self::unchecked(n_sites, values)?;
        if v.values.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidSpec(
                "probabilities must be nonnegative".into(),
            ));
        }
        let s: f64 = v.values.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidSpec(format!("probabilities sum to {s}")));
        }
        Ok(v)
    }

    /// Wraps a vector that may carry small negative entries (fourth-order dynamics).
    pub fn unchecked(n_sites: usize, values: Vec<f64>) -> Result<Self> {
        let dim = checked_dim(2, n_sites)?;
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: values.len(),
            });
        }
        Ok(Self { n_sites, values })
    }

    pub fn from_configuration(config: &Configuration) -> Result<Self> {
        if config.levels() != Levels::Two {
            return Err(Error::InvalidSpec(
                "probability vectors are two-level".into(),
            ));
        }
        let mut values = vec![0.0; 1 << config.n_sites()];
        values[config.index()] = 1.0;
        Ok(Self {
            n_sites: config.n_sites(),
            values,
        })
    }

    pub fn uniform(n_sites: usize) -> Result<Self> {
        let dim = checked_dim(2, n_sites)?;
        Ok(Self {
            n_sites,
            values: vec![1.0 / dim as f64; dim],
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_state_is_valid() {
        let rho = DensityMatrix::maximally_mixed(3, Levels::Two).unwrap();
        rho.validate().unwrap();
        assert!((rho.min_eigenvalue() - 0.125).abs() < 1e-14);
    }

    #[test]
    fn pure_state_normalized() {
        let s = 0.5f64.sqrt();
        let rho =
            DensityMatrix::pure(1, Levels::Two, &[C64::new(s, 0.0), C64::new(0.0, s)]).unwrap();
        rho.validate().unwrap();
        assert!((rho.get(0, 1) - C64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn bad_probability_vector_rejected() {
        assert!(ProbabilityVector::new(1, vec![0.7, 0.7]).is_err());
        assert!(ProbabilityVector::new(1, vec![1.2, -0.2]).is_err());
        assert!(ProbabilityVector::new(1, vec![0.3, 0.7]).is_ok());
    }
}
