//! Gaussian (quadratic, number-conserving) fermion states via correlation matrices.
//!
//! Convention: `C_ij = <c_i^† c_j>`. For `H = sum_ab M_ab c_a^† c_b` and `u = exp(-iMt)`
//! this gives `C(t) = conj(u) C u^T`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fermion::DriveOperator;
use crate::linalg::{polish_unitary, real_sym_expm};

const ZERO_MODE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    c: DMatrix<C64>,
}

impl CorrelationMatrix {
    pub fn new(c: DMatrix<C64>) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::InvalidArgument("correlation matrix must be square".into()));
        }
        let herm = (&c - c.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-10 {
            return Err(Error::NotHermitian(format!("correlation matrix, deviation {herm:.2e}")));
        }
        Ok(Self { c })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            c: DMatrix::zeros(n, n),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.c
    }

    /// `<n_r>` for every site.
    pub fn densities(&self) -> Vec<f64> {
        self.c.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn particle_number(&self) -> f64 {
        self.c.trace().re
    }

    /// `<H>` for `H = sum M_ab c_a^† c_b`.
    pub fn energy(&self, m: &DMatrix<f64>) -> f64 {
        m.iter().zip(self.c.iter()).map(|(mv, cv)| mv * cv.re).sum()
    }

    /// Occupation spectrum (eigenvalues of `C`), ascending.
    pub fn occupations(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.c.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `C <- conj(u) C u^T` for a single-particle propagator `u`.
    pub fn transform(&mut self, u: &DMatrix<C64>) -> Result<()> {
        if u.shape() != self.c.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes(),
                got: u.nrows(),
            });
        }
        self.c = u.conjugate() * &self.c * u.transpose();
        Ok(())
    }
}

/// Filled Fermi sea of `M`: all negative-energy orbitals.
///
/// Zero-energy orbitals are half filled (rounded down), choosing the projections of the
/// lowest-index site vectors onto the zero-energy subspace.
pub fn ground_state_correlations(m: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("single-particle matrix must be square".into()));
    }
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(Error::NotHermitian("single-particle matrix is not symmetric".into()));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut zero_space: Vec<DVector<f64>> = Vec::new();
    for (l, &e) in eig.eigenvalues.iter().enumerate() {
        let phi = eig.eigenvectors.column(l);
        if e < -ZERO_MODE_TOL {
            c += phi * phi.transpose();
        } else if e.abs() <= ZERO_MODE_TOL {
            zero_space.push(phi.into_owned());
        }
    }
    if !zero_space.is_empty() {
        let fill = zero_space.len() / 2;
        if fill > 0 {
            log::debug!("filling {fill} of {} zero modes by lowest site index", zero_space.len());
        }
        let mut chosen: Vec<DVector<f64>> = Vec::new();
        for site in 0..n {
            if chosen.len() == fill {
                break;
            }
            let mut v = zero_space.iter().fold(DVector::zeros(n), |acc, z| acc + z * z[site]);
            for q in &chosen {
                let p = q.dot(&v);
                v -= q * p;
            }
            let nrm = v.norm();
            if nrm > 1e-8 {
                chosen.push(v / nrm);
            }
        }
        for v in &chosen {
            c += v * v.transpose();
        }
    }
    Ok(CorrelationMatrix {
        c: c.map(|x| C64::new(x, 0.0)),
    })
}

/// Exact-exponential stepper for `M + h(t) diag(v)`, with the static propagator cached.
#[derive(Debug, Clone)]
pub struct GaussianEvolver {
    m: DMatrix<f64>,
    potential: Vec<f64>,
    dt: f64,
    static_u: DMatrix<C64>,
    energies: DVector<f64>,
    modes: DMatrix<C64>,
}

impl GaussianEvolver {
    /// `drive` must be a quadratic operator (a site potential); linear-in-fermion drives are rejected.
    pub fn new(m: &DMatrix<f64>, drive: Option<&DriveOperator>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n = m.nrows();
        let potential = match drive {
            None => vec![0.0; n],
            Some(d) => {
                if d.n_sites() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: d.n_sites(),
                    });
                }
                d.as_site_potential().ok_or_else(|| {
                    Error::Unsupported(
                        "covariance backend needs a quadratic (density) drive; use the statevector backend".into(),
                    )
                })?
            }
        };
        let eig = SymmetricEigen::new(m.clone());
        Ok(Self {
            m: m.clone(),
            potential,
            dt,
            static_u: polish_unitary(&real_sym_expm(m, dt)),
            energies: eig.eigenvalues,
            modes: eig.eigenvectors.map(|x| C64::new(x, 0.0)),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// One step with midpoint field value `h_mid`.
    pub fn step(&self, c: &mut CorrelationMatrix, h_mid: f64) -> Result<()> {
        if h_mid == 0.0 {
            return c.transform(&self.static_u);
        }
        let mut m = self.m.clone();
        for (i, v) in self.potential.iter().enumerate() {
            m[(i, i)] += h_mid * v;
        }
        c.transform(&polish_unitary(&real_sym_expm(&m, self.dt)))
    }

    /// Undriven propagator over `steps` steps, computed directly rather than by repeated products.
    pub fn static_propagator(&self, steps: usize) -> DMatrix<C64> {
        let t = steps as f64 * self.dt;
        let phases = DMatrix::from_diagonal(&self.energies.map(|e| C64::from_polar(1.0, -e * t)));
        &self.modes * phases * self.modes.adjoint()
    }

    /// Step through `fields` (midpoint values), calling `visit(k, C)` after each step and once
    /// for the initial state (`k = 0`). Undriven stretches are propagated from the last driven
    /// state in one shot so round-off does not accumulate.
    pub fn run<F>(&self, c0: &CorrelationMatrix, fields: &[f64], mut visit: F) -> Result<CorrelationMatrix>
    where
        F: FnMut(usize, &CorrelationMatrix),
    {
        let mut anchor = c0.clone();
        let mut idle = 0usize;
        let mut current = c0.clone();
        visit(0, &current);
        for (k, &h) in fields.iter().enumerate() {
            if h == 0.0 {
                idle += 1;
                current = anchor.clone();
                current.transform(&self.static_propagator(idle))?;
            } else {
                self.step(&mut current, h)?;
                anchor = current.clone();
                idle = 0;
            }
            visit(k + 1, &current);
        }
        Ok(current)
    }

    /// Instantaneous kick `exp(-i area B)`.
    pub fn kick(&self, c: &mut CorrelationMatrix, area: f64) -> Result<()> {
        let u = DMatrix::from_diagonal(&DVector::from_iterator(
            self.potential.len(),
            self.potential.iter().map(|v| C64::from_polar(1.0, -area * v)),
        ));
        c.transform(&u)
    }
}

/// Evolve `c0` for `fields.len()` steps with midpoint fields, returning densities after each step
/// (index 0 is the initial state).
pub fn evolve_correlations(c0: &CorrelationMatrix, evolver: &GaussianEvolver, fields: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(fields.len() + 1);
    evolver.run(c0, fields, |_, c| out.push(c.densities()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermion::{density_operator, FermionMode, ModeKind};
    use crate::linalg::{herm_expm, pauli_sum};
    use crate::ssh::{build_ssh, SshParams};
    use crate::statevector::StateVector;

    #[test]
    fn empty_band_and_trace() {
        let mut p = SshParams::open(6, 1.0, 0.3, -10.0);
        let m = build_ssh(&p).unwrap().single_particle;
        let c = ground_state_correlations(&m).unwrap();
        assert!(c.matrix().iter().all(|z| z.norm() < 1e-14));
        p.mu = 0.4;
        let m = build_ssh(&p).unwrap().single_particle;
        let c = ground_state_correlations(&m).unwrap();
        let neg = SymmetricEigen::new(m).eigenvalues.iter().filter(|&&e| e < 0.0).count();
        assert!((c.particle_number() - neg as f64).abs() < 1e-12);
    }

    #[test]
    fn two_site_half_filling() {
        let m = build_ssh(&SshParams::open(2, 1.0, 0.0, 0.0)).unwrap().single_particle;
        let c = ground_state_correlations(&m).unwrap();
        for (i, j) in [(0, 0), (1, 1), (0, 1), (1, 0)] {
            assert!((c.matrix()[(i, j)].re.abs() - 0.5).abs() < 1e-12);
        }
        // bonding orbital (t=1 > 0) has equal signs
        assert!(c.matrix()[(0, 1)].re > 0.0);
    }

    #[test]
    fn zero_modes_are_half_filled_deterministically() {
        let m = DMatrix::<f64>::zeros(4, 4);
        let c = ground_state_correlations(&m).unwrap();
        assert!((c.particle_number() - 2.0).abs() < 1e-12);
        let d = c.densities();
        assert!((d[0] - 1.0).abs() < 1e-12 && (d[1] - 1.0).abs() < 1e-12 && d[2].abs() < 1e-12);
    }

    #[test]
    fn static_state_is_stationary() {
        let params = SshParams::periodic(12, 1.0, 0.3, 0.9);
        let m = build_ssh(&params).unwrap().single_particle;
        let c0 = ground_state_correlations(&m).unwrap();
        let ev = GaussianEvolver::new(&m, None, 0.1).unwrap();
        let traj = evolve_correlations(&c0, &ev, &vec![0.0; 200]).unwrap();
        for d in &traj {
            for (a, b) in d.iter().zip(&traj[0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn long_evolution_keeps_spectrum_and_energy() {
        let params = SshParams::open(8, 1.0, 0.4, 0.3);
        let m = build_ssh(&params).unwrap().single_particle;
        let mut c = ground_state_correlations(&m).unwrap();
        let drive = density_operator(3, 8).unwrap();
        let ev = GaussianEvolver::new(&m, Some(&drive), 0.05).unwrap();
        ev.kick(&mut c, 0.7).unwrap();
        let (n0, e0) = (c.particle_number(), c.energy(&m));
        let c = ev.run(&c, &vec![0.0; 10_000], |_, _| {}).unwrap();
        assert!((c.particle_number() - n0).abs() < 1e-12, "{}", c.particle_number() - n0);
        assert!((c.energy(&m) - e0).abs() < 1e-10);
        assert!((c.matrix() - c.matrix().adjoint()).iter().all(|z| z.norm() < 1e-10));
        let occ = c.occupations();
        assert!(occ[0] > -1e-10 && occ[occ.len() - 1] < 1.0 + 1e-10);
    }

    fn number_op(site: usize, n: usize) -> crate::statevector::PauliString {
        crate::statevector::PauliString::from_sparse(n, &[(site, crate::statevector::Pauli::Z)]).unwrap()
    }

    /// Statevector oracle for `<c_i^† c_j>`.
    fn sv_correlation(psi: &StateVector, i: usize, j: usize) -> C64 {
        let cj = FermionMode {
            site: j,
            kind: ModeKind::Annihilate,
        }
        .apply(psi)
        .unwrap();
        let ci = FermionMode {
            site: i,
            kind: ModeKind::Annihilate,
        }
        .apply(psi)
        .unwrap();
        ci.iter().zip(&cj).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn matches_statevector_under_density_drive() {
        let n = 4;
        let params = SshParams::open(n, 1.0, 0.4, 0.3);
        let ham = build_ssh(&params).unwrap();
        let m = ham.single_particle.clone();
        // both backends start from the same occupied basis state
        let occupied = [0usize, 2];
        let mut cm = DMatrix::<C64>::zeros(n, n);
        for &s in &occupied {
            cm[(s, s)] = C64::new(1.0, 0.0);
        }
        let mut c = CorrelationMatrix::new(cm).unwrap();
        let mut psi = StateVector::basis(n, occupied.iter().map(|s| 1 << s).sum());

        let drive = density_operator(1, n).unwrap();
        let dt = 0.05;
        let ev = GaussianEvolver::new(&m, Some(&drive), dt).unwrap();
        let h0 = pauli_sum(n, &ham.pauli_terms);
        let b = pauli_sum(n, drive.terms());
        for step in 0..60 {
            let h = 0.3 * ((step as f64 + 0.5) * dt).sin();
            ev.step(&mut c, h).unwrap();
            psi.apply_dense(&herm_expm(&(&h0 + &b * C64::new(h, 0.0)), dt)).unwrap();
        }
        for i in 0..n {
            let nz = 0.5 - 0.5 * psi.expectation(&number_op(i, n)).unwrap();
            assert!((c.densities()[i] - nz).abs() < 1e-8);
            for j in 0..n {
                assert!((c.matrix()[(i, j)] - sv_correlation(&psi, i, j)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_linear_drive() {
        let m = DMatrix::<f64>::zeros(4, 4);
        let drive = crate::fermion::site_drive(0, 4).unwrap();
        assert!(matches!(
            GaussianEvolver::new(&m, Some(&drive), 0.1),
            Err(Error::Unsupported(_))
        ));
    }
}
