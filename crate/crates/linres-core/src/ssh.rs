//! SSH chain: Hamiltonian, Pauli decomposition and Trotter steps.
//!
//! `H0 = -sum_i t_i (c_i^† c_{i+1} + h.c.) + s_mu * mu * sum_i n_i` with
//! `t_i = v_nn + (-1)^i delta/2` and `s_mu = -1` for the standard sign.
//! Writing `n_i = (I - Z_i)/2` leaves a constant `s_mu * mu * n / 2` that is
//! dropped (global phase).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::DriveOperator;
use crate::statevector::{Pauli, PauliRotation, PauliString};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Open,
    /// Ring closure through a Jordan-Wigner string; needs an even number of sites.
    Periodic,
}

/// Sign of the chemical-potential term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MuConvention {
    /// `- mu * sum n_i`
    #[default]
    Standard,
    /// `+ mu * sum n_i`
    Flipped,
}

impl MuConvention {
    fn sign(self) -> f64 {
        match self {
            MuConvention::Standard => -1.0,
            MuConvention::Flipped => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SshParams {
    pub n: usize,
    pub v_nn: f64,
    pub delta: f64,
    pub mu: f64,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub mu_convention: MuConvention,
}

impl SshParams {
    pub fn open(n: usize, v_nn: f64, delta: f64, mu: f64) -> Self {
        Self {
            n,
            v_nn,
            delta,
            mu,
            boundary: Boundary::Open,
            mu_convention: MuConvention::Standard,
        }
    }

    pub fn periodic(n: usize, v_nn: f64, delta: f64, mu: f64) -> Self {
        Self {
            boundary: Boundary::Periodic,
            ..Self::open(n, v_nn, delta, mu)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument("SSH chain needs at least 2 sites".into()));
        }
        if self.boundary == Boundary::Periodic && (self.n < 4 || self.n % 2 == 1) {
            return Err(Error::InvalidArgument(
                "periodic SSH chain needs an even number of sites >= 4".into(),
            ));
        }
        if !(self.v_nn.is_finite() && self.delta.is_finite() && self.mu.is_finite()) {
            return Err(Error::InvalidArgument("non-finite SSH parameter".into()));
        }
        Ok(())
    }

    /// Hopping amplitude on bond `i` (sites `i`, `i+1 mod n`).
    pub fn hopping(&self, bond: usize) -> f64 {
        let stagger = if bond.is_multiple_of(2) { 1.0 } else { -1.0 };
        self.v_nn + stagger * self.delta / 2.0
    }

    /// Bonds as `(i, j, t)` with `i < j`.
    pub fn bonds(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<_> = (0..self.n - 1).map(|i| (i, i + 1, self.hopping(i))).collect();
        if self.boundary == Boundary::Periodic {
            out.push((0, self.n - 1, self.hopping(self.n - 1)));
        }
        out
    }

    /// Diagonal single-particle energy `s_mu * mu`.
    pub fn onsite(&self) -> f64 {
        self.mu_convention.sign() * self.mu
    }
}

#[derive(Debug, Clone)]
pub struct SshHamiltonian {
    pub pauli_terms: Vec<(f64, PauliString)>,
    pub single_particle: DMatrix<f64>,
}

/// Pauli string for `c_i^† c_j + c_j^† c_i` split into its XX-like and YY-like halves
/// (each with weight 1/2): `X_i Z..Z X_j` and `Y_i Z..Z Y_j`.
fn hopping_strings(i: usize, j: usize, n: usize) -> [PauliString; 2] {
    let mk = |p: Pauli| {
        let mut letters = vec![Pauli::I; n];
        for l in letters.iter_mut().take(j).skip(i + 1) {
            *l = Pauli::Z;
        }
        letters[i] = p;
        letters[j] = p;
        PauliString::new(C64::new(1.0, 0.0), letters)
    };
    [mk(Pauli::X), mk(Pauli::Y)]
}

pub fn build_ssh(params: &SshParams) -> Result<SshHamiltonian> {
    params.validate()?;
    let n = params.n;
    let mut terms = Vec::new();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, j, t) in params.bonds() {
        let [xx, yy] = hopping_strings(i, j, n);
        terms.push((-t / 2.0, xx));
        terms.push((-t / 2.0, yy));
        m[(i, j)] -= t;
        m[(j, i)] -= t;
    }
    let eps = params.onsite();
    if eps != 0.0 {
        for i in 0..n {
            // eps * n_i = eps/2 - eps/2 Z_i
            terms.push((-eps / 2.0, PauliString::from_sparse(n, &[(i, Pauli::Z)])?));
        }
    }
    for i in 0..n {
        m[(i, i)] = eps;
    }
    Ok(SshHamiltonian {
        pauli_terms: terms,
        single_particle: m,
    })
}

/// One first-order Trotter step, rotations in application order.
#[derive(Debug, Clone)]
pub struct TrotterPlan {
    pub dt: f64,
    pub rotations: Vec<PauliRotation>,
}

/// Even bonds, then odd bonds (the ring-closing bond is odd), then the Z layer.
pub fn trotter_step(params: &SshParams, dt: f64) -> Result<TrotterPlan> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    params.validate()?;
    let n = params.n;
    let bonds = params.bonds();
    let mut rotations = Vec::new();
    for parity in [0usize, 1] {
        for (bond, &(i, j, t)) in bonds.iter().enumerate() {
            if bond % 2 != parity {
                continue;
            }
            for s in hopping_strings(i, j, n) {
                rotations.push(PauliRotation::new(s, -t * dt / 2.0)?);
            }
        }
    }
    let eps = params.onsite();
    if eps != 0.0 {
        for i in 0..n {
            let z = PauliString::from_sparse(n, &[(i, Pauli::Z)])?;
            rotations.push(PauliRotation::new(z, -eps * dt / 2.0)?);
        }
    }
    Ok(TrotterPlan { dt, rotations })
}

/// Drive rotations `prod_r exp(-i h dt c_r P_r)` for one step of field `h_value`.
pub fn drive_step(drive: &DriveOperator, h_value: f64, dt: f64) -> Result<Vec<PauliRotation>> {
    let max_c = drive.terms().iter().map(|(c, _)| c.abs()).fold(0.0, f64::max);
    if (h_value * dt * max_c).abs() > 0.1 {
        log::warn!(
            "drive rotation angle {} exceeds 0.1; linear response may not hold",
            h_value * dt * max_c
        );
    }
    drive
        .terms()
        .iter()
        .filter(|(_, p)| p.weight() > 0)
        .map(|(c, p)| PauliRotation::new(p.clone(), h_value * dt * c))
        .collect()
}
