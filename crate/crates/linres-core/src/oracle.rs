//! Reference values for free-fermion chains: single-particle propagators, many-body
//! Lehmann sums, band gaps and the particle-hole polarizability.
//!
//! Nothing here touches the simulators; each quantity is computed from `M` directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::ssh::{build_ssh, SshParams};

/// `exp(-i M t)` via the eigendecomposition of the real symmetric `M`.
pub fn propagator(m: &DMatrix<f64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(m.clone());
    let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let ph = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    &v * ph * v.adjoint()
}

/// `G^R_ij(t) = -i [exp(-iMt)]_ij` for `t >= 0` (state independent for quadratic `H`).
pub fn exact_retarded_gf(m: &DMatrix<f64>, i: usize, j: usize, times: &[f64]) -> Result<Vec<C64>> {
    check_sites(m, &[i, j])?;
    Ok(times
        .iter()
        .map(|&t| {
            if t < 0.0 {
                C64::new(0.0, 0.0)
            } else {
                -C64::i() * propagator(m, t)[(i, j)]
            }
        })
        .collect())
}

/// `G^R_k(t) = sum_r cos(k r) G^R_{0r}(t)`, the combination excited by a cosine drive.
pub fn momentum_retarded_gf(m: &DMatrix<f64>, k: f64, times: &[f64]) -> Vec<C64> {
    let n = m.nrows();
    times
        .iter()
        .map(|&t| {
            let u = propagator(m, t);
            (0..n).map(|r| -C64::i() * u[(0, r)] * (k * r as f64).cos()).sum()
        })
        .collect()
}

/// `L_k(t) = 2 Re G^R_k(t)`.
pub fn momentum_response(m: &DMatrix<f64>, k: f64, times: &[f64]) -> Vec<f64> {
    momentum_retarded_gf(m, k, times).iter().map(|g| 2.0 * g.re).collect()
}

/// Lesser and greater functions `(G<_ij(t), G>_ij(t))` for a Gaussian state with
/// `C_ab = <c_a^† c_b>`: `G< = i U C^T`, `G> = -i U (I - C^T)`.
pub fn lesser_greater(m: &DMatrix<f64>, c: &DMatrix<C64>, i: usize, j: usize, t: f64) -> Result<(C64, C64)> {
    check_sites(m, &[i, j])?;
    let n = m.nrows();
    let u = propagator(m, t);
    let ct = c.transpose();
    let lesser = C64::i() * (&u * &ct)[(i, j)];
    let greater = -C64::i() * (&u * (DMatrix::identity(n, n) - ct))[(i, j)];
    Ok((lesser, greater))
}

fn check_sites(m: &DMatrix<f64>, sites: &[usize]) -> Result<()> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::InvalidArgument("single-particle matrix must be square".into()));
    }
    if let Some(&s) = sites.iter().find(|&&s| s >= n) {
        return Err(Error::SiteOutOfRange { site: s, n });
    }
    Ok(())
}

// ---- many-body route ----

/// Dense annihilators `c_s` built from Kronecker products (site 0 = least significant bit).
pub fn annihilators(n: usize) -> Vec<DMatrix<C64>> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let id = DMatrix::<C64>::identity(2, 2);
    let z = DMatrix::from_row_slice(2, 2, &[one, zero, zero, -one]);
    let lower = DMatrix::from_row_slice(2, 2, &[zero, one, zero, zero]);
    (0..n)
        .map(|s| {
            // kron ordering puts the highest site first
            (0..n).rev().fold(DMatrix::identity(1, 1), |acc: DMatrix<C64>, q| {
                let f = if q < s {
                    &z
                } else if q == s {
                    &lower
                } else {
                    &id
                };
                acc.kronecker(f)
            })
        })
        .collect()
}

/// Many-body `H = sum M_ab c_a^† c_b` on `2^n` states.
pub fn many_body_hamiltonian(m: &DMatrix<f64>) -> DMatrix<C64> {
    let n = m.nrows();
    let c = annihilators(n);
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for a in 0..n {
        for b in 0..n {
            if m[(a, b)] != 0.0 {
                h += c[a].adjoint() * &c[b] * C64::new(m[(a, b)], 0.0);
            }
        }
    }
    h
}

/// Eigendecomposition of the many-body Hamiltonian.
#[derive(Debug, Clone)]
pub struct LehmannData {
    pub energies: DVector<f64>,
    pub states: DMatrix<C64>,
}

impl LehmannData {
    pub fn new(h: &DMatrix<C64>) -> Result<Self> {
        let eig = SymmetricEigen::new(h.clone());
        let resid = (h * &eig.eigenvectors
            - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::new(e, 0.0))))
        .norm();
        if resid > 1e-10 * (1.0 + h.norm()) {
            return Err(Error::Numerical(format!("eigendecomposition residual {resid:.2e}")));
        }
        Ok(Self {
            energies: eig.eigenvalues,
            states: eig.eigenvectors,
        })
    }

    /// `-i <psi|{c_i(t), c_j^†}|psi>` for an eigenstate `psi` with energy `e0`, as a Lehmann sum.
    pub fn retarded_gf(&self, psi: &DVector<C64>, e0: f64, ci: &DMatrix<C64>, cj: &DMatrix<C64>, t: f64) -> C64 {
        let v = &self.states;
        // amplitudes <m|c_j^†|psi>, <psi|c_i|m>, <m|c_i|psi>, <psi|c_j^†|m>
        let a = v.adjoint() * (cj.adjoint() * psi);
        let b = (psi.adjoint() * ci * v).transpose();
        let c = v.adjoint() * (ci * psi);
        let d = (psi.adjoint() * cj.adjoint() * v).transpose();
        let mut g = C64::new(0.0, 0.0);
        for (mi, &em) in self.energies.iter().enumerate() {
            g += b[mi] * a[mi] * C64::from_polar(1.0, -(em - e0) * t);
            g += d[mi] * c[mi] * C64::from_polar(1.0, (em - e0) * t);
        }
        -C64::i() * g
    }
}

/// `G^R_ij(t)` on the vacuum from the many-body spectrum (`n <= 6` is practical).
pub fn many_body_retarded_gf(m: &DMatrix<f64>, i: usize, j: usize, times: &[f64]) -> Result<Vec<C64>> {
    check_sites(m, &[i, j])?;
    let n = m.nrows();
    if n > 8 {
        return Err(Error::Unsupported(format!(
            "many-body oracle limited to 8 sites, got {n}"
        )));
    }
    let h = many_body_hamiltonian(m);
    let data = LehmannData::new(&h)?;
    let c = annihilators(n);
    let mut vac = DVector::zeros(1 << n);
    vac[0] = C64::new(1.0, 0.0);
    Ok(times
        .iter()
        .map(|&t| data.retarded_gf(&vac, 0.0, &c[i], &c[j], t))
        .collect())
}

// ---- band structure ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// `2|delta|`, the bulk gap at the zone boundary of the two-site cell.
    pub bulk: f64,
    /// Splitting of the two middle single-particle levels of the finite chain.
    pub finite: f64,
}

pub fn band_gap(params: &SshParams) -> Result<GapReport> {
    let ev = single_particle_energies(params)?;
    let n = ev.len();
    let finite = if n % 2 == 0 { ev[n / 2] - ev[n / 2 - 1] } else { 0.0 };
    // bands are +-|t1 + t2 e^{iK}|, closest at K = pi
    let t1 = params.hopping(0);
    let t2 = params.hopping(1);
    Ok(GapReport {
        bulk: 2.0 * (t1 - t2).abs(),
        finite,
    })
}

/// Eigenvalues of `M`, ascending.
pub fn single_particle_energies(params: &SshParams) -> Result<Vec<f64>> {
    let mut ev: Vec<f64> = SymmetricEigen::new(build_ssh(params)?.single_particle)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Single-particle energies of a translation-invariant ring at `k = 2 pi j / n`:
/// `eps - 2 v cos k` for `delta = 0`; for `delta != 0` the two branches mixing `k` and `k + pi`.
pub fn ring_energies(params: &SshParams, k: f64) -> Vec<f64> {
    let eps = params.onsite();
    let (t1, t2) = (params.hopping(0), params.hopping(1));
    if params.delta == 0.0 {
        return vec![eps - 2.0 * params.v_nn * k.cos()];
    }
    let mag = (C64::new(t1, 0.0) + C64::from_polar(t2, 2.0 * k)).norm();
    vec![eps - mag, eps + mag]
}

// ---- polarizability ----

/// Particle-hole sum for the density response to a potential on `drive_site`:
/// `chi(q, w) = sum_r e^{-iq(r - r')} sum_{l occ, m unocc} p(r) p(r') [1/(w - D + i b) - 1/(w + D + i b)]`
/// with `p(r) = phi_m(r) phi_l(r)` and `D = eps_m - eps_l`. The Fermi sea fills all negative levels.
pub fn lindhard_polarizability(
    params: &SshParams,
    drive_site: usize,
    qs: &[f64],
    omegas: &[f64],
    broadening: f64,
) -> Result<Vec<Vec<C64>>> {
    let m = build_ssh(params)?.single_particle;
    let n = m.nrows();
    if drive_site >= n {
        return Err(Error::SiteOutOfRange { site: drive_site, n });
    }
    if !(broadening > 0.0) {
        return Err(Error::InvalidArgument("broadening must be positive".into()));
    }
    let eig = SymmetricEigen::new(m);
    let occ: Vec<usize> = (0..n).filter(|&l| eig.eigenvalues[l] < -1e-10).collect();
    let unocc: Vec<usize> = (0..n).filter(|&l| eig.eigenvalues[l] > 1e-10).collect();
    if occ.len() + unocc.len() != n {
        log::warn!("zero-energy levels present; they are treated as neither filled nor empty");
    }
    let phi = &eig.eigenvectors;
    // (gap, weight per q)
    let mut poles: Vec<(f64, Vec<C64>)> = Vec::with_capacity(occ.len() * unocc.len());
    for &l in &occ {
        for &mm in &unocc {
            let p: Vec<f64> = (0..n).map(|r| phi[(r, mm)] * phi[(r, l)]).collect();
            let weights = qs
                .iter()
                .map(|&q| {
                    (0..n)
                        .map(|r| C64::from_polar(p[r] * p[drive_site], -q * (r as f64 - drive_site as f64)))
                        .sum()
                })
                .collect();
            poles.push((eig.eigenvalues[mm] - eig.eigenvalues[l], weights));
        }
    }
    let ib = C64::new(0.0, broadening);
    Ok((0..qs.len())
        .map(|qi| {
            omegas
                .iter()
                .map(|&w| {
                    poles
                        .iter()
                        .map(|(d, wq)| wq[qi] * (1.0 / (w - d + ib) - 1.0 / (w + d + ib)))
                        .sum()
                })
                .collect()
        })
        .collect())
}
