//! Small dense helpers shared by the backends and the oracles.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::statevector::PauliString;

/// `exp(-i t H)` for Hermitian `H`.
pub fn herm_expm(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    v * phases * v.adjoint()
}

/// `exp(-i t M)` for real symmetric `M`.
pub fn real_sym_expm(m: &DMatrix<f64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(m.clone());
    let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    &v * phases * v.adjoint()
}

/// Newton-Schulz projection back onto the unitary group; removes round-off drift
/// before a propagator is applied many times.
pub fn polish_unitary(u: &DMatrix<C64>) -> DMatrix<C64> {
    let n = u.nrows();
    let three = DMatrix::<C64>::identity(n, n) * C64::new(3.0, 0.0);
    let mut v = u.clone();
    for _ in 0..2 {
        v = &v * (&three - v.adjoint() * &v) * C64::new(0.5, 0.0);
    }
    v
}

/// Dense matrix of `sum_j c_j P_j`.
pub fn pauli_sum(n: usize, terms: &[(f64, PauliString)]) -> DMatrix<C64> {
    let dim = 1 << n;
    terms.iter().fold(DMatrix::zeros(dim, dim), |acc, (c, p)| {
        acc + p.to_matrix() * C64::new(*c, 0.0)
    })
}

/// `min_phi max |a - e^{i phi} b|`, for comparing unitaries up to a global phase.
pub fn phase_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let ov = (b.adjoint() * a).trace();
    let ph = if ov.norm() > 1e-12 {
        ov / ov.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    (a - b * ph).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm.
pub fn op_norm(m: &DMatrix<C64>) -> f64 {
    m.clone().singular_values().max()
}
