use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted deviation from Hermiticity when importing a matrix.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue of a density matrix.
pub const PSD_TOL: f64 = -1e-10;
/// Allowed trace deviation when importing (normalizing operations hit 1e-12).
pub const TRACE_IMPORT_TOL: f64 = 1e-9;

/// Density matrix in the Fock basis |0⟩..|cutoff⟩.
///
/// Instances are Hermitian exactly as stored (the lower triangle is the
/// conjugate of the upper one), have unit trace and are positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityMatrixRecord", into = "DensityMatrixRecord")]
pub struct DensityMatrix {
    cutoff: usize,
    elements: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates and adopts `elements` as a density matrix.
    pub fn from_matrix(elements: DMatrix<Complex64>) -> Result<Self> {
        let dim = elements.nrows();
        if dim == 0 || elements.ncols() != dim {
            return Err(Error::input(format!(
                "density matrix must be square and non-empty, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        if elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::input("density matrix has non-finite elements"));
        }
        let mut worst = 0.0f64;
        for m in 0..dim {
            for n in m..dim {
                let d = (elements[(m, n)] - elements[(n, m)].conj()).norm();
                worst = worst.max(d);
            }
        }
        if worst > HERMITICITY_TOL {
            return Err(Error::input(format!("matrix is not Hermitian (deviation {worst:.3e})")));
        }
        let rho = Self::hermitize(elements);
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_IMPORT_TOL {
            return Err(Error::input(format!("trace is {tr}, expected 1")));
        }
        let min_ev = rho.min_eigenvalue();
        if min_ev < PSD_TOL {
            return Err(Error::input(format!(
                "matrix is not positive semidefinite (min eigenvalue {min_ev:.3e})"
            )));
        }
        Ok(rho)
    }

    /// Adopts a matrix produced by a map that preserves positivity, forcing
    /// exact Hermiticity and unit trace.
    pub(crate) fn from_positive_unnormalized(elements: DMatrix<Complex64>) -> Result<Self> {
        let rho = Self::hermitize(elements);
        let tr = rho.trace();
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::Numerical(format!("cannot normalize matrix with trace {tr}")));
        }
        Ok(rho.scaled(1.0 / tr))
    }

    fn hermitize(mut elements: DMatrix<Complex64>) -> Self {
        let dim = elements.nrows();
        for m in 0..dim {
            elements[(m, m)].im = 0.0;
            for n in (m + 1)..dim {
                let avg = (elements[(m, n)] + elements[(n, m)].conj()) * 0.5;
                elements[(m, n)] = avg;
                elements[(n, m)] = avg.conj();
            }
        }
        DensityMatrix {
            cutoff: dim - 1,
            elements,
        }
    }

    fn scaled(mut self, factor: f64) -> Self {
        self.elements.iter_mut().for_each(|z| *z *= factor);
        self
    }

    /// Diagonal state; `probs` must be non-negative and is normalized to unit sum.
    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::input("empty photon-number distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::input(
                "photon-number probabilities must be finite and non-negative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::input("photon-number distribution has zero mass"));
        }
        let dim = probs.len();
        let elements = DMatrix::from_fn(dim, dim, |m, n| {
            if m == n {
                Complex64::new(probs[m] / total, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(DensityMatrix {
            cutoff: dim - 1,
            elements,
        })
    }

    /// Pure state |ψ⟩⟨ψ| from (not necessarily normalized) amplitudes.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if amplitudes.is_empty() || !(norm_sq > 0.0 && norm_sq.is_finite()) {
            return Err(Error::input(
                "state vector must be non-empty with finite, non-zero norm",
            ));
        }
        let dim = amplitudes.len();
        let elements = DMatrix::from_fn(dim, dim, |m, n| amplitudes[m] * amplitudes[n].conj() / norm_sq);
        Ok(Self::hermitize(elements))
    }

    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(Error::input(format!("Fock state |{n}⟩ exceeds cutoff {cutoff}")));
        }
        let mut probs = vec![0.0; cutoff + 1];
        probs[n] = 1.0;
        Self::from_diagonal(&probs)
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(0, cutoff).expect("vacuum always fits")
    }

    /// Identity / (cutoff + 1).
    pub fn maximally_mixed(cutoff: usize) -> Self {
        Self::from_diagonal(&vec![1.0; cutoff + 1]).expect("uniform distribution is valid")
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    /// Photon-number probability ρ_nn (zero beyond the cutoff).
    pub fn population(&self, n: usize) -> f64 {
        if n <= self.cutoff {
            self.elements[(n, n)].re
        } else {
            0.0
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.elements[(n, n)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|n| self.elements[(n, n)].re).sum()
    }

    /// Largest off-diagonal magnitude.
    pub fn max_offdiagonal(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..self.dim() {
            for n in (m + 1)..self.dim() {
                worst = worst.max(self.elements[(m, n)].norm());
            }
        }
        worst
    }

    pub fn is_diagonal(&self) -> bool {
        self.max_offdiagonal() == 0.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        nalgebra::SymmetricEigen::new(self.elements.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Same state embedded in (or truncated to) a different cutoff.
    ///
    /// Truncation discards population above the new cutoff and renormalizes.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let dim = cutoff + 1;
        let elements = DMatrix::from_fn(dim, dim, |m, n| {
            if m <= self.cutoff && n <= self.cutoff {
                self.elements[(m, n)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self::from_positive_unnormalized(elements)
    }

    /// Convex combination `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &DensityMatrix, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::input(format!("mixing weight {weight} outside [0, 1]")));
        }
        if other.cutoff != self.cutoff {
            return Err(Error::input("cannot mix states with different cutoffs"));
        }
        let elements = self.elements.map(|z| z * (1.0 - weight)) + other.elements.map(|z| z * weight);
        Self::from_positive_unnormalized(elements)
    }
}

/// JSON form: `{cutoff, re, im}` with row-major arrays of length (cutoff+1)².
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixRecord {
    pub cutoff: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<DensityMatrix> for DensityMatrixRecord {
    fn from(rho: DensityMatrix) -> Self {
        let dim = rho.dim();
        let mut re = Vec::with_capacity(dim * dim);
        let mut im = Vec::with_capacity(dim * dim);
        for m in 0..dim {
            for n in 0..dim {
                re.push(rho.elements[(m, n)].re);
                im.push(rho.elements[(m, n)].im);
            }
        }
        DensityMatrixRecord {
            cutoff: rho.cutoff,
            re,
            im,
        }
    }
}

impl TryFrom<DensityMatrixRecord> for DensityMatrix {
    type Error = Error;

    fn try_from(rec: DensityMatrixRecord) -> Result<Self> {
        let dim = rec.cutoff + 1;
        if rec.re.len() != dim * dim || rec.im.len() != dim * dim {
            return Err(Error::Format(format!(
                "density matrix with cutoff {} needs {} elements, got re={} im={}",
                rec.cutoff,
                dim * dim,
                rec.re.len(),
                rec.im.len()
            )));
        }
        let elements = DMatrix::from_fn(dim, dim, |m, n| {
            Complex64::new(rec.re[m * dim + n], rec.im[m * dim + n])
        });
        DensityMatrix::from_matrix(elements)
    }
}
