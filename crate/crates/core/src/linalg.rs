//! Dense and tridiagonal helpers for the random-matrix samplers.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{domain, Error, Result};

pub type C64 = Complex<f64>;

/// Tridiagonal model of an n×n Gaussian ensemble: returns (diagonal, off-diagonal).
///
/// The ensemble has off-diagonal entries of variance `scale²` (modulus
/// squared for β = 2) and real diagonal entries of variance `2 scale² / β`.
/// β = 1 is the orthogonal ensemble, β = 2 the unitary one. The returned real
/// symmetric tridiagonal matrix has the ensemble's eigenvalue distribution.
pub fn gaussian_ensemble_tridiagonal<R: Rng>(
    rng: &mut R,
    n: usize,
    beta: u32,
    scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let b = f64::from(beta);
    let diag_sd = scale * (2.0 / b).sqrt();
    let diag: Vec<f64> = (0..n)
        .map(|_| diag_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let dof = b * (n - k) as f64;
            let chi2 = ChiSquared::new(dof).expect("positive degrees of freedom");
            scale * (chi2.sample(rng) / b).sqrt()
        })
        .collect();
    (diag, off)
}

/// LU factorization with partial pivoting of a complex tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalLu {
    lower: Vec<C64>,
    diag: Vec<C64>,
    upper: Vec<C64>,
    upper2: Vec<C64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    /// Factor the matrix with sub-diagonal `lower`, diagonal `diag` and
    /// super-diagonal `upper`.
    pub fn new(mut lower: Vec<C64>, mut diag: Vec<C64>, mut upper: Vec<C64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(domain("tridiagonal bands have inconsistent lengths"));
        }
        let mut upper2 = vec![C64::new(0.0, 0.0); n.saturating_sub(2)];
        let mut swapped = vec![false; n - 1];
        for i in 0..n - 1 {
            if diag[i].norm() >= lower[i].norm() {
                if diag[i].norm() == 0.0 {
                    return Err(Error::Singular);
                }
                let fact = lower[i] / diag[i];
                lower[i] = fact;
                diag[i + 1] -= fact * upper[i];
            } else {
                let fact = diag[i] / lower[i];
                diag[i] = lower[i];
                lower[i] = fact;
                let temp = upper[i];
                upper[i] = diag[i + 1];
                diag[i + 1] = temp - fact * diag[i + 1];
                if i + 2 < n {
                    upper2[i] = upper[i + 1];
                    upper[i + 1] = -fact * upper[i + 1];
                }
                swapped[i] = true;
            }
        }
        if diag[n - 1].norm() == 0.0 {
            return Err(Error::Singular);
        }
        Ok(Self {
            lower,
            diag,
            upper,
            upper2,
            swapped,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Overwrite `b` with the solution of A x = b.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.diag.len();
        assert_eq!(b.len(), n, "right-hand side has the wrong length");
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.lower[i] * b[i];
            } else {
                let bi = b[i];
                b[i + 1] -= self.lower[i] * bi;
            }
        }
        b[n - 1] /= self.diag[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.upper[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1] - self.upper2[i] * b[i + 2]) / self.diag[i];
        }
    }
}

/// Solve `a x = b` for a square complex system by LU with partial pivoting.
pub fn solve(a: DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    a.lu().solve(b).ok_or(Error::Singular)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &DMatrix<C64>) -> f64 {
    h.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute entry of `a − b`.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
