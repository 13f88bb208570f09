//! Flat gate lists executed on a [`StateVector`].

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::statevector::{PauliRotation, PauliString, StateVector};
use crate::tfxy::TfxyBlock;

#[derive(Debug, Clone)]
pub enum Gate {
    /// `exp(-i angle P)`.
    Rotation(PauliRotation),
    Block(TfxyBlock),
    /// `P` applied where `control` is 1.
    ControlledPauli {
        control: usize,
        target: PauliString,
    },
    /// Full-register unitary. Noise cannot be attached to it.
    Dense(Arc<DMatrix<C64>>),
}

impl Gate {
    pub fn apply(&self, psi: &mut StateVector) -> Result<()> {
        match self {
            Gate::Rotation(r) => psi.apply_pauli_rotation(r),
            Gate::Block(b) => psi.apply_two_qubit(b.site, b.site + 1, &b.unitary()),
            Gate::ControlledPauli { control, target } => psi.apply_controlled_pauli(*control, target),
            Gate::Dense(u) => psi.apply_dense(u),
        }
    }

    /// Qubits the gate touches; `None` for dense gates.
    pub fn qubits(&self) -> Option<Vec<usize>> {
        match self {
            Gate::Rotation(r) => Some(r.string().support()),
            Gate::Block(b) => Some(vec![b.site, b.site + 1]),
            Gate::ControlledPauli { control, target } => {
                let mut q = target.support();
                q.push(*control);
                q.sort_unstable();
                Some(q)
            }
            Gate::Dense(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(q) = gate.qubits().and_then(|q| q.into_iter().max()) {
            if q >= self.n_qubits {
                return Err(Error::SiteOutOfRange {
                    site: q,
                    n: self.n_qubits,
                });
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.push(g))
    }

    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        self.extend(other.gates.iter().cloned())
    }

    pub fn apply(&self, psi: &mut StateVector) -> Result<()> {
        if psi.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                got: psi.n_qubits(),
            });
        }
        self.gates.iter().try_for_each(|g| g.apply(psi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tfxy::BlockCircuit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_gates_match_block_circuit() {
        let blocks = vec![
            TfxyBlock::new(0, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            TfxyBlock::new(1, [-0.3, 0.2, 0.7, 0.1, 0.0, 0.9]),
        ];
        let bc = BlockCircuit::new(3, blocks.clone()).unwrap();
        let mut c = Circuit::new(3);
        c.extend(blocks.into_iter().map(Gate::Block)).unwrap();
        let psi0 = StateVector::random(3, &mut ChaCha8Rng::seed_from_u64(4));
        let (mut a, mut b) = (psi0.clone(), psi0);
        bc.apply(&mut a).unwrap();
        c.apply(&mut b).unwrap();
        assert!((a.inner(&b).norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_out_of_range_gate() {
        let mut c = Circuit::new(2);
        let p = PauliString::parse(1.0, "IIX").unwrap();
        assert!(c.push(Gate::Rotation(PauliRotation::new(p, 0.1).unwrap())).is_err());
        assert!(c.push(Gate::Block(TfxyBlock::identity(1))).is_err());
    }
}
