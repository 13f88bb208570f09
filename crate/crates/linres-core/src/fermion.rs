//! Jordan-Wigner images of fermionic operators.
//!
//! Sites are 0-based and the Z string of site `s` covers every qubit strictly
//! below `s`, so `c_s + c_s^† = Z_0 ... Z_{s-1} X_s`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::statevector::{Pauli, PauliString, StateVector};

fn check_site(site: usize, n: usize) -> Result<()> {
    if site >= n {
        return Err(Error::SiteOutOfRange { site, n });
    }
    Ok(())
}

fn stringed(site: usize, n: usize, head: Pauli) -> Result<PauliString> {
    check_site(site, n)?;
    let mut letters = vec![Pauli::I; n];
    for l in letters.iter_mut().take(site) {
        *l = Pauli::Z;
    }
    letters[site] = head;
    Ok(PauliString::new(C64::new(1.0, 0.0), letters))
}

/// `X~_s = Z_0 ... Z_{s-1} X_s = c_s + c_s^†`.
pub fn jw_x_tilde(site: usize, n: usize) -> Result<PauliString> {
    stringed(site, n, Pauli::X)
}

/// `Y~_s = Z_0 ... Z_{s-1} Y_s = i (c_s^† - c_s)`.
pub fn jw_y_tilde(site: usize, n: usize) -> Result<PauliString> {
    stringed(site, n, Pauli::Y)
}

/// All-Z parity string.
pub fn parity_operator(n: usize) -> PauliString {
    PauliString::new(C64::new(1.0, 0.0), vec![Pauli::Z; n])
}

/// Creation/annihilation label used by the dense helpers and the oracle tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Annihilate,
    Create,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FermionMode {
    pub site: usize,
    pub kind: ModeKind,
}

impl FermionMode {
    /// The two weighted Pauli strings whose sum is this mode operator.
    ///
    /// `c_s = (X~_s + i Y~_s)/2`, `c_s^† = (X~_s - i Y~_s)/2`.
    pub fn pauli_terms(&self, n: usize) -> Result<[PauliString; 2]> {
        let x = jw_x_tilde(self.site, n)?;
        let y = jw_y_tilde(self.site, n)?;
        let sy = match self.kind {
            ModeKind::Annihilate => C64::new(0.0, 0.5),
            ModeKind::Create => C64::new(0.0, -0.5),
        };
        Ok([x.with_coefficient(C64::new(0.5, 0.0)), y.with_coefficient(sy)])
    }

    /// Applies the mode operator to a state (result is generally unnormalized).
    pub fn apply(&self, psi: &StateVector) -> Result<Vec<C64>> {
        let [a, b] = self.pauli_terms(psi.n_qubits())?;
        let mut pa = psi.clone();
        pa.apply_pauli(&a)?;
        let mut pb = psi.clone();
        pb.apply_pauli(&b)?;
        Ok(pa
            .amplitudes()
            .iter()
            .zip(pb.amplitudes())
            .map(|(x, y)| x + y)
            .collect())
    }
}

/// Hermitian sum of weighted Pauli strings, kept unreduced.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveOperator {
    n: usize,
    terms: Vec<(f64, PauliString)>,
}

impl DriveOperator {
    pub fn new(n: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        for (_, s) in &terms {
            if s.n_qubits() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: s.n_qubits(),
                });
            }
            if !s.is_hermitian() {
                return Err(Error::NotHermitian(s.to_string()));
            }
        }
        Ok(Self { n, terms })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|(c, _)| *c).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            terms: self.terms.iter().map(|(c, p)| (c * s, p.clone())).collect(),
        }
    }

    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        self.terms.iter().map(|(c, p)| Ok(c * psi.expectation(p)?)).sum()
    }

    /// Diagonal site potential `sum_r v_r n_r` if the operator is a sum of
    /// `(I - Z_r)/2` terms (identity terms allowed), else `None`.
    pub fn as_site_potential(&self) -> Option<Vec<f64>> {
        let mut v = vec![0.0; self.n];
        for (c, p) in &self.terms {
            match p.weight() {
                0 => {}
                1 => {
                    let q = p.support()[0];
                    if p.letters()[q] != Pauli::Z {
                        return None;
                    }
                    // c * Z_r = -2c * n_r + const
                    v[q] += -2.0 * c * p.coefficient().re;
                }
                _ => return None,
            }
        }
        Some(v)
    }
}

/// `B = sum_r 2 cos(k r) X~_r`.
pub fn momentum_drive(k: f64, n: usize) -> DriveOperator {
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let j = k / step;
    if (j - j.round()).abs() > 1e-9 {
        log::warn!("momentum {k} is not on the 2*pi*j/{n} grid");
    }
    let terms = (0..n)
        .map(|r| (2.0 * (k * r as f64).cos(), jw_x_tilde(r, n).expect("site in range")))
        .collect();
    DriveOperator { n, terms }
}

/// `B = X~_r`: excitation on one site.
pub fn site_drive(site: usize, n: usize) -> Result<DriveOperator> {
    Ok(DriveOperator {
        n,
        terms: vec![(1.0, jw_x_tilde(site, n)?)],
    })
}

/// `n_r = c_r^† c_r = (I - Z_r)/2`.
pub fn density_operator(site: usize, n: usize) -> Result<DriveOperator> {
    check_site(site, n)?;
    let z = PauliString::from_sparse(n, &[(site, Pauli::Z)])?;
    Ok(DriveOperator {
        n,
        terms: vec![(0.5, PauliString::identity(n)), (-0.5, z)],
    })
}
