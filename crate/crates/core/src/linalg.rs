//! Dense complex linear algebra helpers shared by the geometric modules.
//!
//! Matrices over `M_n(C)` are vectorized column-major, matching nalgebra's
//! storage: `vec(a m) = (I ⊗ a) vec(m)` and `vec(m b) = (bᵀ ⊗ I) vec(m)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |m - m†|` entrywise.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `max |m + m†|` entrywise.
pub fn antihermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m + m.adjoint()))
}

/// Left multiplication `m ↦ a m` on vectorized `M_n(C)`.
pub fn left_multiplication(a: &CMatrix) -> CMatrix {
    kron(&identity(a.nrows()), a)
}

/// Right multiplication `m ↦ m b` on vectorized `M_n(C)`.
pub fn right_multiplication(b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), &identity(b.nrows()))
}

/// Adjoint action `m ↦ L m − m L` on vectorized `M_n(C)`.
pub fn adjoint_action(l: &CMatrix) -> CMatrix {
    left_multiplication(l) - right_multiplication(l)
}

/// Real inner product `Re tr(a† b)` on matrices viewed as real vectors.
pub fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Expectation `⟨ψ|a|ψ⟩`.
pub fn expectation(psi: &CVector, a: &CMatrix) -> Complex64 {
    psi.dotc(&(a * psi))
}

/// Eigen-decomposition of a hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100 * dim.max(10)).ok_or_else(|| {
        Error::Numerical(format!(
            "hermitian eigensolver did not converge (dim {dim}, frobenius norm {:.6e}, hermiticity defect {:.3e})",
            frobenius(m),
            hermiticity_defect(m)
        ))
    })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(dim, dim, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let vals = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100 * dim.max(10))
        .map(|e| e.eigenvalues)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "hermitian eigensolver did not converge (dim {dim}, frobenius norm {:.6e})",
                frobenius(m)
            ))
        })?;
    let mut v: Vec<f64> = vals.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Spectral norm (largest singular value) of an arbitrary complex matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Matrix with independent standard normal real and imaginary parts.
pub fn random_complex_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Uniformly distributed unit vector in `C^n`.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / c(norm, 0.0);
        }
    }
}

/// Real symmetric eigenvalues, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vectorization_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_complex_matrix(3, 3, &mut rng);
        let m = random_complex_matrix(3, 3, &mut rng);
        let vec = |x: &CMatrix| CVector::from_column_slice(x.as_slice());
        let left = left_multiplication(&a) * vec(&m);
        let right = right_multiplication(&a) * vec(&m);
        assert!((left - vec(&(&a * &m))).norm() < 1e-12);
        assert!((right - vec(&(&m * &a))).norm() < 1e-12);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_complex_matrix(6, 6, &mut rng);
        let h = &a + a.adjoint();
        let (vals, vecs) = hermitian_eigen(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(6, vals.iter().map(|&v| c(v, 0.0))));
        let rebuilt = &vecs * diag * vecs.adjoint();
        assert!(max_abs(&(rebuilt - &h)) < 1e-10);
        let only = hermitian_eigenvalues(&h).unwrap();
        for (x, y) in vals.iter().zip(&only) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
