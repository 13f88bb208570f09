//! Free-fermion circuit compression with TFXY blocks.
//!
//! A block on sites `(i, i+1)` is
//! `B_i(θ) = e^{-iθ1 Z_i} e^{-iθ2 Z_{i+1}} e^{-iθ3 X_i X_{i+1}} e^{-iθ4 Y_i Y_{i+1}} e^{-iθ5 Z_i} e^{-iθ6 Z_{i+1}}`.
//! In the local basis `b_i + 2 b_{i+1}` it splits into an even-parity block on `{0, 3}`
//! and an odd-parity block on `{1, 2}`, each of the form `Rz(α) Rx(β) Rz(γ)` with
//! `Rz(a) = e^{-iaσz}`, `Rx(b) = e^{-ibσx}`:
//!
//! * even: `α = θ1+θ2`, `β = θ3-θ4`, `γ = θ5+θ6`
//! * odd:  `α = θ2-θ1`, `β = θ3+θ4`, `γ = θ6-θ5`
//!
//! Circuits are stored in time order (first block is applied first).

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::ssh::{Boundary, SshParams};
use crate::statevector::{PauliString, StateVector};

const GAUGE_EPS: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfxyBlock {
    pub site: usize,
    pub angles: [f64; 6],
}

impl TfxyBlock {
    pub fn new(site: usize, angles: [f64; 6]) -> Self {
        Self { site, angles }
    }

    pub fn identity(site: usize) -> Self {
        Self::new(site, [0.0; 6])
    }

    /// 4x4 unitary in the local basis `b_i + 2 b_{i+1}`.
    pub fn unitary(&self) -> DMatrix<C64> {
        let [t1, t2, t3, t4, t5, t6] = self.angles;
        let (even, odd) = (euler(t1 + t2, t3 - t4, t5 + t6), euler(t2 - t1, t3 + t4, t6 - t5));
        embed_parity_blocks(&even, &odd)
    }

    /// Whether the block conserves particle number (no `|00> <-> |11>` mixing).
    pub fn is_number_conserving(&self) -> bool {
        let u = self.unitary();
        u[(0, 3)].norm() < GAUGE_EPS && u[(3, 0)].norm() < GAUGE_EPS
    }

    /// Recover angles from a parity-block-diagonal 4x4 unitary (up to global phase).
    pub fn from_unitary(site: usize, u: &DMatrix<C64>) -> Result<Self> {
        if u.shape() != (4, 4) {
            return Err(Error::InvalidArgument("TFXY block unitary must be 4x4".into()));
        }
        let leak = [(0, 1), (0, 2), (3, 1), (3, 2), (1, 0), (2, 0), (1, 3), (2, 3)]
            .iter()
            .map(|&(r, c)| u[(r, c)].norm())
            .fold(0.0, f64::max);
        if leak > 1e-8 {
            return Err(Error::Numerical(format!("unitary mixes parity sectors ({leak:.2e})")));
        }
        let even = Matrix2::new(u[(0, 0)], u[(0, 3)], u[(3, 0)], u[(3, 3)]);
        let odd = Matrix2::new(u[(1, 1)], u[(1, 2)], u[(2, 1)], u[(2, 2)]);
        let scale = even.determinant().sqrt();
        if scale.norm() < 1e-8 {
            return Err(Error::Numerical("singular even-parity block".into()));
        }
        let (ae, be, ge) = euler_angles(&(even / scale));
        let (ao, bo, go) = euler_angles(&(odd / scale));
        let mut angles = [
            (ae - ao) / 2.0,
            (ae + ao) / 2.0,
            (be + bo) / 2.0,
            (bo - be) / 2.0,
            (ge - go) / 2.0,
            (ge + go) / 2.0,
        ];
        // shifting θ1 by π only flips the global sign
        angles[0] = angles[0].rem_euclid(PI);
        if angles[0] >= PI {
            angles[0] -= PI;
        }
        Ok(Self::new(site, angles))
    }
}

fn euler(a: f64, b: f64, c: f64) -> Matrix2<C64> {
    let rz = |x: f64| {
        Matrix2::new(
            C64::from_polar(1.0, -x),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::from_polar(1.0, x),
        )
    };
    let rx = Matrix2::new(
        C64::new(b.cos(), 0.0),
        C64::new(0.0, -b.sin()),
        C64::new(0.0, -b.sin()),
        C64::new(b.cos(), 0.0),
    );
    rz(a) * rx * rz(c)
}

/// `(α, β, γ)` with `U = Rz(α) Rx(β) Rz(γ)` for `U` in SU(2).
fn euler_angles(u: &Matrix2<C64>) -> (f64, f64, f64) {
    let a = u[(0, 0)];
    let b = u[(0, 1)];
    let beta = b.norm().atan2(a.norm());
    let sum = if a.norm() > GAUGE_EPS { -a.arg() } else { 0.0 };
    let diff = if b.norm() > GAUGE_EPS {
        -(C64::i() * b).arg()
    } else {
        0.0
    };
    ((sum + diff) / 2.0, beta, (sum - diff) / 2.0)
}

fn embed_parity_blocks(even: &Matrix2<C64>, odd: &Matrix2<C64>) -> DMatrix<C64> {
    let mut u = DMatrix::zeros(4, 4);
    for (r, &gr) in [0usize, 3].iter().enumerate() {
        for (c, &gc) in [0usize, 3].iter().enumerate() {
            u[(gr, gc)] = even[(r, c)];
        }
    }
    for (r, &gr) in [1usize, 2].iter().enumerate() {
        for (c, &gc) in [1usize, 2].iter().enumerate() {
            u[(gr, gc)] = odd[(r, c)];
        }
    }
    u
}

/// `B(a) B(b)` as one block (`b` acts first).
pub fn fuse(a: &TfxyBlock, b: &TfxyBlock) -> Result<TfxyBlock> {
    if a.site != b.site {
        return Err(Error::InvalidArgument(format!(
            "cannot fuse blocks on sites {} and {}",
            a.site, b.site
        )));
    }
    TfxyBlock::from_unitary(a.site, &(a.unitary() * b.unitary()))
}

/// Rewrite `B_i(a) B_{i+1}(b) B_i(c)` as `B_{i+1}(a') B_i(b') B_{i+1}(c')` (operator order).
pub fn turnover(a: &TfxyBlock, b: &TfxyBlock, c: &TfxyBlock) -> Result<(TfxyBlock, TfxyBlock, TfxyBlock)> {
    let i = a.site;
    if c.site != i || b.site != i + 1 {
        return Err(Error::InvalidArgument(format!(
            "turnover needs sites (i, i+1, i), got ({}, {}, {})",
            a.site, b.site, c.site
        )));
    }
    let (ua, ub, uc) = if [a, b, c].iter().all(|x| x.is_number_conserving()) {
        turnover_modes(a, b, c)
    } else {
        turnover_majorana(a, b, c)
    };
    Ok((
        TfxyBlock::from_unitary(i + 1, &ua)?,
        TfxyBlock::from_unitary(i, &ub)?,
        TfxyBlock::from_unitary(i + 1, &uc)?,
    ))
}

// ---- number-conserving path: 3x3 single-particle matrices ----

/// Single-particle 2x2 matrix of a number-conserving block, up to phase.
fn mode_matrix(block: &TfxyBlock) -> Matrix2<C64> {
    let u = block.unitary();
    let vac = u[(0, 0)];
    Matrix2::new(u[(1, 1)], u[(1, 2)], u[(2, 1)], u[(2, 2)]) / vac
}

fn block_from_modes(w: &Matrix2<C64>) -> DMatrix<C64> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    embed_parity_blocks(&Matrix2::new(one, zero, zero, w.determinant()), w)
}

fn embed3(w: &Matrix2<C64>, offset: usize) -> DMatrix<C64> {
    let mut m = DMatrix::identity(3, 3);
    for r in 0..2 {
        for c in 0..2 {
            m[(offset + r, offset + c)] = w[(r, c)];
        }
    }
    m
}

/// Unitary with first column proportional to `(x, y)`; identity if the vector vanishes.
fn su2_with_column(x: C64, y: C64) -> Matrix2<C64> {
    let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
    if nrm < 1e-14 {
        return Matrix2::identity();
    }
    let (x, y) = (x / nrm, y / nrm);
    Matrix2::new(x, -y.conj(), y, x.conj())
}

fn turnover_modes(a: &TfxyBlock, b: &TfxyBlock, c: &TfxyBlock) -> (DMatrix<C64>, DMatrix<C64>, DMatrix<C64>) {
    let w = embed3(&mode_matrix(a), 0) * embed3(&mode_matrix(b), 1) * embed3(&mode_matrix(c), 0);
    // column 0 of W only sees a' and b'
    let a2 = su2_with_column(w[(1, 0)], w[(2, 0)]);
    let q = embed3(&a2, 1).adjoint() * &w;
    // row 2 of Q is row 1 of c'
    let (r0, r1) = (q[(2, 1)], q[(2, 2)]);
    let c2 = Matrix2::new(r1.conj(), -r0.conj(), r0, r1);
    let b3 = q * embed3(&c2, 1).adjoint();
    let b2 = Matrix2::new(b3[(0, 0)], b3[(0, 1)], b3[(1, 0)], b3[(1, 1)]);
    (block_from_modes(&a2), block_from_modes(&b2), block_from_modes(&c2))
}

// ---- general path: SO(6) rotation of the six Majorana operators ----

fn local_majoranas() -> [DMatrix<C64>; 4] {
    ["XI", "YI", "ZX", "ZY"].map(|s| PauliString::parse(1.0, s).expect("valid literal").to_matrix())
}

/// `R_ba` with `U γ_a U† = sum_b R_ba γ_b`.
fn majorana_rotation(u: &DMatrix<C64>) -> DMatrix<f64> {
    let g = local_majoranas();
    DMatrix::from_fn(4, 4, |b, a| ((&g[b] * u * &g[a] * u.adjoint()).trace() / 4.0).re)
}

fn embed6(r: &DMatrix<f64>, offset: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(6, 6);
    m.view_mut((offset, offset), (4, 4)).copy_from(r);
    m
}

/// Orthonormal basis whose leading vectors span `vecs` (Gram-Schmidt, completed with unit vectors).
fn completed_basis(vecs: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let candidates = vecs.iter().cloned().chain((0..dim).map(|k| {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        e
    }));
    for mut v in candidates {
        if basis.len() == dim {
            break;
        }
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        let nrm = v.norm();
        if nrm > 1e-10 {
            basis.push(v / nrm);
        }
    }
    DMatrix::from_columns(&basis)
}

/// 2-qubit unitary (up to phase) implementing a Majorana rotation in SO(4).
fn unitary_from_rotation(r: &DMatrix<f64>) -> DMatrix<C64> {
    let g = local_majoranas();
    let rotated: Vec<DMatrix<C64>> = (0..4)
        .map(|a| (0..4).fold(DMatrix::zeros(4, 4), |acc, b| acc + &g[b] * C64::new(r[(b, a)], 0.0)))
        .collect();
    let monomials: Vec<(DMatrix<C64>, DMatrix<C64>)> = (0..16usize)
        .map(|mask| {
            (0..4)
                .filter(|a| mask >> a & 1 == 1)
                .fold((DMatrix::identity(4, 4), DMatrix::identity(4, 4)), |(p, rp), a| {
                    (p * &g[a], rp * &rotated[a])
                })
        })
        .collect();
    // sum_P (U P U†) Q P† = 4 tr(U† Q) U
    let probes = ["II", "ZI", "IZ", "ZZ", "XX", "YY", "XY", "YX"];
    let mut best = DMatrix::zeros(4, 4);
    let mut best_norm = 0.0;
    for probe in probes {
        let q = PauliString::parse(1.0, probe).expect("valid literal").to_matrix();
        let m = monomials
            .iter()
            .fold(DMatrix::zeros(4, 4), |acc, (p, rp)| acc + rp * &q * p.adjoint());
        let nrm = m.norm();
        if nrm > best_norm {
            best_norm = nrm;
            best = m;
        }
    }
    best * C64::new(2.0 / best_norm, 0.0)
}

fn turnover_majorana(a: &TfxyBlock, b: &TfxyBlock, c: &TfxyBlock) -> (DMatrix<C64>, DMatrix<C64>, DMatrix<C64>) {
    let r = embed6(&majorana_rotation(&a.unitary()), 0)
        * embed6(&majorana_rotation(&b.unitary()), 2)
        * embed6(&majorana_rotation(&c.unitary()), 0);
    // columns 0,1 of R only see a' (on 2..6) and b'
    let cols: Vec<DVector<f64>> = (0..2)
        .map(|k| r.view((2, k), (4, 1)).into_owned().column(0).into_owned())
        .collect();
    let mut s = completed_basis(&cols, 4);
    if s.determinant() < 0.0 {
        s.column_mut(3).neg_mut();
    }
    let q = embed6(&s, 2).transpose() * &r;
    // rows 4,5 of Q are rows 2,3 of c'
    let rows: Vec<DVector<f64>> = (4..6)
        .map(|k| q.view((k, 2), (1, 4)).transpose().column(0).into_owned())
        .collect();
    let k = completed_basis(&rows, 4);
    let mut c2 = DMatrix::from_rows(&[
        k.column(2).transpose(),
        k.column(3).transpose(),
        k.column(0).transpose(),
        k.column(1).transpose(),
    ]);
    if c2.determinant() < 0.0 {
        c2.row_mut(0).neg_mut();
    }
    let b6 = q * embed6(&c2, 2).transpose();
    let b2 = b6.view((0, 0), (4, 4)).into_owned();
    (
        unitary_from_rotation(&s),
        unitary_from_rotation(&b2),
        unitary_from_rotation(&c2),
    )
}

// ---- circuits ----

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCircuit {
    pub n: usize,
    pub blocks: Vec<TfxyBlock>,
}

impl BlockCircuit {
    pub fn new(n: usize, blocks: Vec<TfxyBlock>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("block circuits need at least 2 qubits".into()));
        }
        if let Some(b) = blocks.iter().find(|b| b.site + 1 >= n) {
            return Err(Error::SiteOutOfRange { site: b.site + 1, n });
        }
        Ok(Self { n, blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Two CNOTs per block.
    pub fn cnot_count(&self) -> usize {
        2 * self.blocks.len()
    }

    pub fn apply(&self, psi: &mut StateVector) -> Result<()> {
        if psi.n_qubits() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: psi.n_qubits(),
            });
        }
        for b in &self.blocks {
            psi.apply_two_qubit(b.site, b.site + 1, &b.unitary())?;
        }
        Ok(())
    }

    /// Dense unitary; only sensible for small `n`.
    pub fn unitary(&self) -> Result<DMatrix<C64>> {
        let dim = 1usize << self.n;
        let mut u = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut psi = StateVector::basis(self.n, col);
            self.apply(&mut psi)?;
            u.column_mut(col).copy_from_slice(psi.amplitudes());
        }
        Ok(u)
    }

    /// Whether the block sites follow the triangle pattern.
    pub fn is_triangle(&self) -> bool {
        self.blocks.iter().map(|b| b.site).eq(triangle_sites(self.n))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("tfxy n={}\n", self.n);
        for b in &self.blocks {
            write!(out, "{}", b.site).unwrap();
            for a in b.angles {
                write!(out, " {a:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty circuit".into()))?;
        let n = header
            .trim()
            .strip_prefix("tfxy n=")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("bad circuit header {header:?}")))?;
        let mut blocks = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidArgument(format!("bad block line {line:?}"));
            if fields.len() != 7 {
                return Err(bad());
            }
            let site = fields[0].parse().map_err(|_| bad())?;
            let mut angles = [0.0; 6];
            for (a, f) in angles.iter_mut().zip(&fields[1..]) {
                *a = f.parse().map_err(|_| bad())?;
            }
            blocks.push(TfxyBlock::new(site, angles));
        }
        Self::new(n, blocks)
    }
}

/// Site sequence of the triangle in time order: staircases `n-2 ..= k` for `k = 0 ..= n-2`.
fn triangle_sites(n: usize) -> impl Iterator<Item = usize> {
    (0..n.saturating_sub(1)).flat_map(move |k| (k..=n - 2).rev())
}

/// Triangle network held as staircases; `stairs[k][j - k]` is the block on site `j`.
#[derive(Debug, Clone)]
pub struct Triangle {
    n: usize,
    stairs: Vec<Vec<TfxyBlock>>,
}

impl Triangle {
    pub fn identity(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("triangle needs at least 2 qubits".into()));
        }
        let stairs = (0..n - 1)
            .map(|k| (k..n - 1).map(TfxyBlock::identity).collect())
            .collect();
        Ok(Self { n, stairs })
    }

    pub fn from_circuit(circuit: &BlockCircuit) -> Result<Self> {
        if !circuit.is_triangle() {
            return Err(Error::InvalidArgument("circuit is not in triangle form".into()));
        }
        let mut tri = Self::identity(circuit.n)?;
        let mut it = circuit.blocks.iter();
        for k in 0..circuit.n - 1 {
            for j in (k..circuit.n - 1).rev() {
                tri.stairs[k][j - k] = *it.next().expect("length checked by is_triangle");
            }
        }
        Ok(tri)
    }

    /// Absorb a block that acts *before* everything already in the triangle.
    pub fn absorb(&mut self, block: &TfxyBlock) -> Result<()> {
        let n = self.n;
        if block.site + 1 >= n {
            return Err(Error::SiteOutOfRange {
                site: block.site + 1,
                n,
            });
        }
        let mut cur = *block;
        let mut k = 0;
        loop {
            let j = cur.site;
            if j == n - 2 {
                let slot = &mut self.stairs[k][j - k];
                *slot = fuse(slot, &cur)?;
                return Ok(());
            }
            let (up, mid, low) = turnover(&self.stairs[k][j - k], &self.stairs[k][j + 1 - k], &cur)?;
            self.stairs[k][j - k] = mid;
            self.stairs[k][j + 1 - k] = low;
            cur = up;
            k += 1;
        }
    }

    /// Absorb a whole circuit that acts before the triangle.
    pub fn absorb_circuit(&mut self, circuit: &BlockCircuit) -> Result<()> {
        if circuit.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: circuit.n,
            });
        }
        for b in circuit.blocks.iter().rev() {
            self.absorb(b)?;
        }
        Ok(())
    }

    pub fn to_circuit(&self) -> BlockCircuit {
        let blocks = self
            .stairs
            .iter()
            .flat_map(|stair| stair.iter().rev().copied())
            .collect();
        BlockCircuit { n: self.n, blocks }
    }
}

/// Compress any TFXY circuit into the `n(n-1)/2`-block triangle.
pub fn compress(circuit: &BlockCircuit) -> Result<BlockCircuit> {
    let mut tri = Triangle::identity(circuit.n)?;
    tri.absorb_circuit(circuit)?;
    Ok(tri.to_circuit())
}

/// Keep only the first staircase, the light cone of qubit 0.
pub fn lightcone_prune(triangle: &BlockCircuit, measured_qubit: usize) -> Result<BlockCircuit> {
    if measured_qubit != 0 {
        return Err(Error::Unsupported("light-cone pruning is defined for qubit 0".into()));
    }
    if !triangle.is_triangle() {
        return Err(Error::InvalidArgument("circuit is not in triangle form".into()));
    }
    Ok(BlockCircuit {
        n: triangle.n,
        blocks: triangle.blocks[..triangle.n - 1].to_vec(),
    })
}

/// One Trotter step of an open SSH chain as blocks: every bond's hopping, then the Z layer.
pub fn trotter_blocks(params: &SshParams, dt: f64) -> Result<BlockCircuit> {
    params.validate()?;
    if params.boundary != Boundary::Open {
        return Err(Error::Unsupported("block compression needs an open chain".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let n = params.n;
    let mut blocks = Vec::with_capacity(2 * (n - 1));
    for parity in [0, 1] {
        for (i, _, t) in params.bonds().into_iter().filter(|(i, _, _)| i % 2 == parity) {
            let h = -t * dt / 2.0;
            blocks.push(TfxyBlock::new(i, [0.0, 0.0, h, h, 0.0, 0.0]));
        }
    }
    let z = -params.onsite() * dt / 2.0;
    for i in 0..n - 1 {
        let last = if i == n - 2 { z } else { 0.0 };
        blocks.push(TfxyBlock::new(i, [z, last, 0.0, 0.0, 0.0, 0.0]));
    }
    BlockCircuit::new(n, blocks)
}

/// `steps` repetitions of [`trotter_blocks`].
pub fn trotter_circuit(params: &SshParams, dt: f64, steps: usize) -> Result<BlockCircuit> {
    let one = trotter_blocks(params, dt)?;
    let blocks = std::iter::repeat_n(one.blocks.iter().copied(), steps)
        .flatten()
        .collect();
    BlockCircuit::new(params.n, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::op_norm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Distance between unitaries modulo global phase.
    fn phase_dist(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        let ov = (b.adjoint() * a).trace();
        let ph = if ov.norm() > 1e-12 {
            ov / ov.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        op_norm(&(a - b * ph))
    }

    fn random_block(rng: &mut ChaCha8Rng, site: usize) -> TfxyBlock {
        TfxyBlock::new(site, std::array::from_fn(|_| rng.random_range(-PI..PI)))
    }

    fn random_nc_block(rng: &mut ChaCha8Rng, site: usize) -> TfxyBlock {
        let mut b = random_block(rng, site);
        b.angles[3] = b.angles[2];
        b
    }

    fn factor_product(b: &TfxyBlock) -> DMatrix<C64> {
        let [t1, t2, t3, t4, t5, t6] = b.angles;
        let g = |s: &str, t: f64| crate::linalg::herm_expm(&PauliString::parse(1.0, s).unwrap().to_matrix(), t);
        g("ZI", t1) * g("IZ", t2) * g("XX", t3) * g("YY", t4) * g("ZI", t5) * g("IZ", t6)
    }

    fn embed(u: &DMatrix<C64>, site: usize, n: usize) -> DMatrix<C64> {
        let c = BlockCircuit { n, blocks: vec![] };
        let dim = 1 << n;
        let mut out = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let mut psi = StateVector::basis(c.n, col);
            psi.apply_two_qubit(site, site + 1, u).unwrap();
            out.column_mut(col).copy_from_slice(psi.amplitudes());
        }
        out
    }

    #[test]
    fn block_unitary_matches_factor_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(op_norm(&(TfxyBlock::identity(0).unitary() - DMatrix::identity(4, 4))) < 1e-15);
        for _ in 0..100 {
            let b = random_block(&mut rng, 0);
            let u = b.unitary();
            assert!(op_norm(&(&u - factor_product(&b))) < 1e-12);
            assert!(op_norm(&(u.adjoint() * &u - DMatrix::identity(4, 4))) < 1e-12);
            for (e, o) in [(0, 1), (0, 2), (3, 1), (3, 2)] {
                assert!(u[(e, o)].norm() < 1e-15 && u[(o, e)].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn xy_quarter_turn_swaps_single_excitations() {
        let u = TfxyBlock::new(0, [0.0, 0.0, PI / 4.0, PI / 4.0, 0.0, 0.0]).unitary();
        let mi = C64::new(0.0, -1.0);
        assert!((u[(2, 1)] - mi).norm() < 1e-12 && (u[(1, 2)] - mi).norm() < 1e-12);
        assert!(u[(1, 1)].norm() < 1e-12 && u[(2, 2)].norm() < 1e-12);
    }

    #[test]
    fn from_unitary_roundtrip_and_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let b = random_block(&mut rng, 3);
            let back = TfxyBlock::from_unitary(3, &b.unitary()).unwrap();
            assert!((0.0..PI).contains(&back.angles[0]));
            assert!(phase_dist(&back.unitary(), &b.unitary()) < 1e-10);
        }
        let bad = PauliString::parse(1.0, "XI").unwrap().to_matrix();
        assert!(TfxyBlock::from_unitary(0, &bad).is_err());
    }

    #[test]
    fn fuse_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (a, b) = (random_block(&mut rng, 1), random_block(&mut rng, 1));
            let f = fuse(&a, &b).unwrap();
            assert!(phase_dist(&f.unitary(), &(a.unitary() * b.unitary())) < 1e-10);
        }
        assert!(fuse(&TfxyBlock::identity(0), &TfxyBlock::identity(1)).is_err());
    }

    #[test]
    fn fuse_with_identity_and_pure_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_block(&mut rng, 0);
        let f = fuse(&b, &TfxyBlock::identity(0)).unwrap();
        assert!(phase_dist(&f.unitary(), &b.unitary()) < 1e-12);

        let z1 = TfxyBlock::new(0, [0.3, 0.2, 0.0, 0.0, 0.0, 0.0]);
        let z2 = TfxyBlock::new(0, [0.1, -0.5, 0.0, 0.0, 0.0, 0.0]);
        let f = fuse(&z1, &z2).unwrap();
        let want = TfxyBlock::new(0, [0.4, -0.3, 0.0, 0.0, 0.0, 0.0]);
        assert!(phase_dist(&f.unitary(), &want.unitary()) < 1e-12);
        assert!(f.angles[2].abs() < 1e-12 && f.angles[3].abs() < 1e-12);
    }

    #[test]
    fn distant_blocks_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, b) = (random_block(&mut rng, 0), random_block(&mut rng, 2));
            let ua = embed(&a.unitary(), 0, 4);
            let ub = embed(&b.unitary(), 2, 4);
            assert!(op_norm(&(&ua * &ub - &ub * &ua)) < 1e-12);
        }
    }

    fn check_turnover(a: &TfxyBlock, b: &TfxyBlock, c: &TfxyBlock) {
        let lhs = embed(&a.unitary(), 0, 3) * embed(&b.unitary(), 1, 3) * embed(&c.unitary(), 0, 3);
        let (x, y, z) = turnover(a, b, c).unwrap();
        assert_eq!((x.site, y.site, z.site), (1, 0, 1));
        let rhs = embed(&x.unitary(), 1, 3) * embed(&y.unitary(), 0, 3) * embed(&z.unitary(), 1, 3);
        let d = phase_dist(&lhs, &rhs);
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn turnover_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            check_turnover(
                &random_block(&mut rng, 0),
                &random_block(&mut rng, 1),
                &random_block(&mut rng, 0),
            );
        }
    }

    #[test]
    fn turnover_number_conserving_triples_stay_number_conserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (a, b, c) = (
                random_nc_block(&mut rng, 0),
                random_nc_block(&mut rng, 1),
                random_nc_block(&mut rng, 0),
            );
            check_turnover(&a, &b, &c);
            let (x, y, z) = turnover(&a, &b, &c).unwrap();
            assert!(x.is_number_conserving() && y.is_number_conserving() && z.is_number_conserving());
        }
    }

    #[test]
    fn turnover_degenerate_inputs() {
        let id0 = TfxyBlock::identity(0);
        let (x, y, z) = turnover(&id0, &TfxyBlock::identity(1), &id0).unwrap();
        for blk in [x, y, z] {
            assert!(phase_dist(&blk.unitary(), &DMatrix::identity(4, 4)) < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        check_turnover(&id0, &random_block(&mut rng, 1), &id0);
        check_turnover(&id0, &random_nc_block(&mut rng, 1), &id0);
        // a full swap and pure-Z blocks hit the gauge branches
        let swap = TfxyBlock::new(0, [0.0, 0.0, PI / 4.0, PI / 4.0, 0.0, 0.0]);
        check_turnover(
            &swap,
            &TfxyBlock::new(1, [0.0, 0.0, PI / 4.0, PI / 4.0, 0.0, 0.0]),
            &swap,
        );
        check_turnover(
            &TfxyBlock::new(0, [0.2, 0.7, 0.0, 0.0, 0.0, 0.0]),
            &random_block(&mut rng, 1),
            &swap,
        );
        assert!(turnover(&id0, &id0, &id0).is_err());
    }

    #[test]
    fn compress_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2usize, 3, 4, 5, 6] {
            let blocks: Vec<_> = (0..30)
                .map(|_| {
                    let s = rng.random_range(0..n - 1);
                    random_block(&mut rng, s)
                })
                .collect();
            let c = BlockCircuit::new(n, blocks).unwrap();
            let t = compress(&c).unwrap();
            assert_eq!(t.len(), n * (n - 1) / 2);
            assert!(t.is_triangle());
            let d = phase_dist(&t.unitary().unwrap(), &c.unitary().unwrap());
            assert!(d < 1e-8, "n={n} {d}");
        }
    }

    #[test]
    fn compress_ten_blocks_on_four_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let blocks = (0..10)
            .map(|_| {
                let s = rng.random_range(0..3);
                random_block(&mut rng, s)
            })
            .collect();
        let c = BlockCircuit::new(4, blocks).unwrap();
        let t = compress(&c).unwrap();
        assert_eq!(t.len(), 6);
        assert!(phase_dist(&t.unitary().unwrap(), &c.unitary().unwrap()) < 1e-8);
        // a triangle compresses to an equivalent triangle
        let t2 = compress(&t).unwrap();
        assert!(phase_dist(&t2.unitary().unwrap(), &t.unitary().unwrap()) < 1e-8);
    }

    #[test]
    fn trotter_blocks_match_rotation_plan() {
        let params = SshParams::open(5, 1.0, 0.3, 0.7);
        let dt = 0.05;
        let circ = trotter_blocks(&params, dt).unwrap();
        assert_eq!(circ.len(), 2 * 4);
        let plan = crate::ssh::trotter_step(&params, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi0 = StateVector::random(5, &mut rng);
        let (mut a, mut b) = (psi0.clone(), psi0);
        circ.apply(&mut a).unwrap();
        for r in &plan.rotations {
            b.apply_pauli_rotation(r).unwrap();
        }
        assert!((a.inner(&b).norm() - 1.0).abs() < 1e-12);
        assert_eq!(
            trotter_circuit(&SshParams::open(8, 1.0, 0.0, 1.0), dt, 40)
                .unwrap()
                .len(),
            560
        );
        assert!(trotter_blocks(&SshParams::periodic(4, 1.0, 0.0, 0.0), dt).is_err());
    }

    #[test]
    fn prune_keeps_qubit_zero_and_number_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 6;
        let blocks = triangle_sites(n).map(|s| random_nc_block(&mut rng, s)).collect();
        let tri = BlockCircuit::new(n, blocks).unwrap();
        let pruned = lightcone_prune(&tri, 0).unwrap();
        assert_eq!(pruned.len(), n - 1);
        assert_eq!(pruned.cnot_count(), 2 * (n - 1));
        let psi0 = StateVector::random(n, &mut rng);
        let (mut a, mut b) = (psi0.clone(), psi0);
        tri.apply(&mut a).unwrap();
        pruned.apply(&mut b).unwrap();
        for obs in ["X", "Y", "Z"] {
            let p = PauliString::parse(1.0, &format!("{obs}{}", "I".repeat(n - 1))).unwrap();
            assert!((a.expectation(&p).unwrap() - b.expectation(&p).unwrap()).abs() < 1e-10);
        }
        let weights = |psi: &StateVector| {
            let mut w = vec![0.0; n + 1];
            for (i, p) in psi.probabilities().iter().enumerate() {
                w[i.count_ones() as usize] += p;
            }
            w
        };
        for (x, y) in weights(&a).iter().zip(weights(&b)) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(lightcone_prune(&tri, 1).is_err());
        let not_tri = BlockCircuit::new(n, vec![TfxyBlock::identity(0)]).unwrap();
        assert!(lightcone_prune(&not_tri, 0).is_err());
    }

    #[test]
    fn eight_site_trotter_compresses_to_28_blocks() {
        let params = SshParams::open(8, 1.0, 0.4, 0.9);
        let circ = trotter_circuit(&params, 0.05, 40).unwrap();
        let tri = compress(&circ).unwrap();
        assert_eq!(tri.len(), 28);
        assert!(tri.blocks.iter().all(|b| b.is_number_conserving()));
        let pruned = lightcone_prune(&tri, 0).unwrap();
        assert_eq!(pruned.cnot_count(), 14);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let psi0 = StateVector::random(8, &mut rng);
        let (mut a, mut b) = (psi0.clone(), psi0);
        circ.apply(&mut a).unwrap();
        tri.apply(&mut b).unwrap();
        assert!(1.0 - a.inner(&b).norm_sqr() < 1e-8);
    }

    #[test]
    fn text_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = BlockCircuit::new(4, (0..5).map(|i| random_block(&mut rng, i % 3)).collect()).unwrap();
        let back = BlockCircuit::parse_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(BlockCircuit::parse_text("tfxy n=3\n0 1 2\n").is_err());
        assert!(BlockCircuit::parse_text("tfxy n=2\n1 0 0 0 0 0 0\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fused_blocks_stay_matchgates(a in prop::array::uniform6(-PI..PI), b in prop::array::uniform6(-PI..PI)) {
            let f = fuse(&TfxyBlock::new(0, a), &TfxyBlock::new(0, b)).unwrap();
            let u = f.unitary();
            prop_assert!(u[(0, 1)].norm() < 1e-15 && u[(1, 3)].norm() < 1e-15);
            prop_assert!(phase_dist(&u, &(TfxyBlock::new(0, a).unitary() * TfxyBlock::new(0, b).unitary())) < 1e-10);
        }
    }
}
