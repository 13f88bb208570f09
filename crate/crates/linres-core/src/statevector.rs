//! Dense n-qubit statevector backend.
//!
//! Qubit 0 is the least-significant bit of the amplitude index: the basis
//! state `|b_{n-1} ... b_1 b_0>` lives at index `sum_q b_q 2^q`.  Bitstrings
//! produced by [`StateVector::sample_z_basis`] are printed most-significant
//! qubit first, so qubit 0 is the rightmost character.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-14;

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => [[l, o], [o, l]],
            Pauli::X => [[o, l], [l, o]],
            Pauli::Y => [[o, -i], [i, o]],
            Pauli::Z => [[l, o], [o, -l]],
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Signed tensor product `coefficient * P_{n-1} ⊗ ... ⊗ P_0`.
///
/// `letters[q]` acts on qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    coefficient: C64,
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(coefficient: C64, letters: Vec<Pauli>) -> Self {
        Self { coefficient, letters }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(C64::new(1.0, 0.0), vec![Pauli::I; n])
    }

    /// Builds a unit-coefficient string from `(qubit, letter)` pairs.
    pub fn from_sparse(n: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        let mut letters = vec![Pauli::I; n];
        for &(q, p) in ops {
            if q >= n {
                return Err(Error::SiteOutOfRange { site: q, n });
            }
            letters[q] = p;
        }
        Ok(Self::new(C64::new(1.0, 0.0), letters))
    }

    /// Parses strings like `"ZZX"`, written with qubit 0 leftmost.
    pub fn parse(coefficient: f64, s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidArgument(format!("bad Pauli letter {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(C64::new(coefficient, 0.0), letters))
    }

    pub fn with_coefficient(mut self, coefficient: C64) -> Self {
        self.coefficient = coefficient;
        self
    }

    pub fn coefficient(&self) -> C64 {
        self.coefficient
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Qubits carrying a non-identity letter, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.letters.len())
            .filter(|&q| self.letters[q] != Pauli::I)
            .collect()
    }

    pub fn is_hermitian(&self) -> bool {
        self.coefficient.im.abs() <= HERMITIAN_TOL
    }

    /// Bit masks of the letters: `(x_mask, z_mask, n_y)` with Y counted in both masks.
    pub fn masks(&self) -> (usize, usize, usize) {
        let mut x = 0usize;
        let mut z = 0usize;
        let mut ny = 0usize;
        for (q, &p) in self.letters.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }

    /// True when the two strings commute as operators.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let anti = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| **a != Pauli::I && **b != Pauli::I && a != b)
            .count();
        anti % 2 == 0
    }

    /// Dense `2^n x 2^n` matrix including the coefficient. Intended for small n.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let n = self.letters.len();
        let dim = 1usize << n;
        let (xm, zm, ny) = self.masks();
        let base = i_pow(ny) * self.coefficient;
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let sign = if (b & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            m[(b ^ xm, b)] = base * sign;
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) ", self.coefficient)?;
        for p in &self.letters {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

fn i_pow(k: usize) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// `exp(-i * angle * string)`.  A real coefficient on the string is folded
/// into the angle, so the string itself always squares to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliRotation {
    string: PauliString,
    angle: f64,
}

impl PauliRotation {
    pub fn new(string: PauliString, angle: f64) -> Result<Self> {
        if !string.is_hermitian() {
            return Err(Error::NotHermitian(string.to_string()));
        }
        let c = string.coefficient.re;
        if c == 0.0 {
            return Err(Error::InvalidArgument("rotation generator has zero coefficient".into()));
        }
        Ok(Self {
            angle: angle * c,
            string: string.with_coefficient(C64::new(1.0, 0.0)),
        })
    }

    pub fn string(&self) -> &PauliString {
        &self.string
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

/// Dense complex amplitudes over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = C64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Wraps raw amplitudes, normalizing them.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero state".into()));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Haar-ish random state from Gaussian amplitudes.
    pub fn random<R: Rng>(n_qubits: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let amps = (0..1usize << n_qubits)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                C64::new(re, im)
            })
            .collect();
        Self::from_amplitudes(amps).expect("nonzero gaussian state")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_width(&self, n: usize) -> Result<()> {
        if n != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                got: n,
            });
        }
        Ok(())
    }

    /// `|psi> <- exp(-i theta P) |psi> = cos(theta)|psi> - i sin(theta) P|psi>`.
    pub fn apply_pauli_rotation(&mut self, rot: &PauliRotation) -> Result<()> {
        self.check_width(rot.string.n_qubits())?;
        let theta = rot.angle;
        if theta == 0.0 {
            return Ok(());
        }
        let (c, s) = (theta.cos(), theta.sin());
        let (xm, zm, ny) = rot.string.masks();
        let base = i_pow(ny);
        let minus_is = C64::new(0.0, -s);
        let phase = |b: usize| {
            if (b & zm).count_ones() % 2 == 1 {
                -base
            } else {
                base
            }
        };
        if xm == 0 {
            for (b, a) in self.amps.iter_mut().enumerate() {
                *a *= c + minus_is * phase(b);
            }
            return Ok(());
        }
        let low = xm.trailing_zeros();
        for b in 0..self.amps.len() {
            // visit each pair once, from the member with the lowest flipped bit clear
            if b >> low & 1 == 1 {
                continue;
            }
            let p = b ^ xm;
            let (ab, ap) = (self.amps[b], self.amps[p]);
            // P|p> = phase(p)|b>, P|b> = phase(b)|p>
            self.amps[b] = ab * c + minus_is * phase(p) * ap;
            self.amps[p] = ap * c + minus_is * phase(b) * ab;
        }
        Ok(())
    }

    /// `|psi> <- P |psi>` including the coefficient.
    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.check_width(p.n_qubits())?;
        let (xm, zm, ny) = p.masks();
        let base = i_pow(ny) * p.coefficient;
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (b, &a) in self.amps.iter().enumerate() {
            let sign = if (b & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[b ^ xm] = base * sign * a;
        }
        self.amps = out;
        Ok(())
    }

    /// `<psi|P|psi>` for a Pauli string with arbitrary coefficient.
    pub fn expectation_complex(&self, obs: &PauliString) -> Result<C64> {
        self.check_width(obs.n_qubits())?;
        let (xm, zm, ny) = obs.masks();
        let base = i_pow(ny) * obs.coefficient;
        let mut acc = C64::new(0.0, 0.0);
        for (b, &a) in self.amps.iter().enumerate() {
            let sign = if (b & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            acc += self.amps[b ^ xm].conj() * a * sign;
        }
        Ok(acc * base)
    }

    pub fn expectation(&self, obs: &PauliString) -> Result<f64> {
        if !obs.is_hermitian() {
            return Err(Error::NotHermitian(obs.to_string()));
        }
        Ok(self.expectation_complex(obs)?.re)
    }

    /// Applies a 2x2 unitary `u` (row-major, `u[out][in]`) on qubit `q`.
    pub fn apply_single_qubit(&mut self, q: usize, u: &[[C64; 2]; 2]) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::SiteOutOfRange {
                site: q,
                n: self.n_qubits,
            });
        }
        let bit = 1usize << q;
        for b in 0..self.amps.len() {
            if b & bit != 0 {
                continue;
            }
            let (a0, a1) = (self.amps[b], self.amps[b | bit]);
            self.amps[b] = u[0][0] * a0 + u[0][1] * a1;
            self.amps[b | bit] = u[1][0] * a0 + u[1][1] * a1;
        }
        Ok(())
    }

    /// Applies a 4x4 unitary on qubits `(lo, hi)`; local index is `b_lo + 2 b_hi`.
    pub fn apply_two_qubit(&mut self, lo: usize, hi: usize, u: &DMatrix<C64>) -> Result<()> {
        let n = self.n_qubits;
        if lo >= n || hi >= n || lo == hi {
            return Err(Error::InvalidArgument(format!(
                "bad qubit pair ({lo}, {hi}) for {n} qubits"
            )));
        }
        if u.nrows() != 4 || u.ncols() != 4 {
            return Err(Error::InvalidArgument("two-qubit gate must be 4x4".into()));
        }
        let (bl, bh) = (1usize << lo, 1usize << hi);
        for b in 0..self.amps.len() {
            if b & (bl | bh) != 0 {
                continue;
            }
            let idx = [b, b | bl, b | bh, b | bl | bh];
            let v = idx.map(|i| self.amps[i]);
            for (r, &i) in idx.iter().enumerate() {
                self.amps[i] = (0..4).map(|c| u[(r, c)] * v[c]).sum();
            }
        }
        Ok(())
    }

    /// Applies `P` to the target register only where qubit `control` is 1.
    /// `p` must not act on `control`.
    pub fn apply_controlled_pauli(&mut self, control: usize, p: &PauliString) -> Result<()> {
        self.check_width(p.n_qubits())?;
        if p.letters()[control] != Pauli::I {
            return Err(Error::InvalidArgument("controlled Pauli acts on its control".into()));
        }
        let (xm, zm, ny) = p.masks();
        let base = i_pow(ny) * p.coefficient;
        let cbit = 1usize << control;
        let old = self.amps.clone();
        for (b, &a) in old.iter().enumerate() {
            if b & cbit == 0 {
                continue;
            }
            let sign = if (b & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            self.amps[b ^ xm] = base * sign * a;
        }
        Ok(())
    }

    /// `|psi> <- U |psi>` for a dense `2^n x 2^n` matrix.
    pub fn apply_dense(&mut self, u: &DMatrix<C64>) -> Result<()> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                got: u.nrows().trailing_zeros() as usize,
            });
        }
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        let out = u * v;
        self.amps.copy_from_slice(out.as_slice());
        Ok(())
    }

    /// Draws `shots` computational-basis outcomes with a ChaCha8 stream seeded by `seed`.
    pub fn sample_z_basis(&self, shots: u64, seed: u64) -> Result<BTreeMap<String, u64>> {
        if shots == 0 {
            return Err(Error::InvalidArgument("shots must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cdf = Vec::with_capacity(self.amps.len());
        let mut acc = 0.0;
        for a in &self.amps {
            acc += a.norm_sqr();
            cdf.push(acc);
        }
        let total = acc;
        let mut hits = vec![0u64; self.amps.len()];
        for _ in 0..shots {
            let u: f64 = rng.random::<f64>() * total;
            let idx = cdf.partition_point(|&c| c <= u).min(self.amps.len() - 1);
            hits[idx] += 1;
        }
        Ok(hits
            .into_iter()
            .enumerate()
            .filter(|(_, h)| *h > 0)
            .map(|(b, h)| (bitstring(b, self.n_qubits), h))
            .collect())
    }
}

/// Index -> bitstring with qubit 0 rightmost.
pub fn bitstring(index: usize, n: usize) -> String {
    (0..n)
        .rev()
        .map(|q| if index >> q & 1 == 1 { '1' } else { '0' })
        .collect()
}
