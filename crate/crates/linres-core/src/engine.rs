//! Drive, evolve, measure: the bosonic response loop and the Green's-function
//! methods built on it.
//!
//! Time points are `t_j = j dt` for `j = 0..=steps`. A delta pulse is applied
//! just before `t_0`; smooth fields are sampled at step midpoints.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::covariance::{ground_state_correlations, CorrelationMatrix, GaussianEvolver};
use crate::error::{Error, Result};
use crate::fermion::{density_operator, jw_x_tilde, momentum_drive, parity_operator, site_drive, DriveOperator};
use crate::field::DriveField;
use crate::linalg::{herm_expm, pauli_sum};
use crate::program::{derive_seed, Body, Executor, Ideal, Measured, Program, Readout};
use crate::signal::{apply_damping, fourier_transform, functional_division, ResponseTrace, Spectrum};
use crate::ssh::{build_ssh, drive_step, trotter_step, Boundary, SshHamiltonian, SshParams};
use crate::statevector::{Pauli, PauliRotation, PauliString, StateVector};
use crate::tfxy::{lightcone_prune, trotter_blocks, Triangle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    Vacuum,
    /// Computational basis state with the listed sites occupied.
    Occupied { sites: Vec<usize> },
}

impl InitialState {
    pub fn index(&self, n: usize) -> Result<usize> {
        match self {
            InitialState::Vacuum => Ok(0),
            InitialState::Occupied { sites } => {
                let mut b = 0usize;
                for &s in sites {
                    if s >= n {
                        return Err(Error::SiteOutOfRange { site: s, n });
                    }
                    if b & (1 << s) != 0 {
                        return Err(Error::InvalidArgument(format!("site {s} listed twice")));
                    }
                    b |= 1 << s;
                }
                Ok(b)
            }
        }
    }

    pub fn is_vacuum(&self, n: usize) -> bool {
        self.index(n).map(|b| b == 0).unwrap_or(false)
    }

    pub fn particles(&self, n: usize) -> Result<usize> {
        Ok(self.index(n)?.count_ones() as usize)
    }

    /// Eigenvalue `s` of the parity operator.
    pub fn parity(&self, n: usize) -> Result<f64> {
        Ok(if self.particles(n)? % 2 == 0 { 1.0 } else { -1.0 })
    }

    pub fn state(&self, n: usize) -> Result<StateVector> {
        Ok(StateVector::basis(n, self.index(n)?))
    }

    pub fn correlations(&self, n: usize) -> Result<CorrelationMatrix> {
        let b = self.index(n)?;
        let diag = nalgebra::DVector::from_iterator(n, (0..n).map(|i| C64::new(((b >> i) & 1) as f64, 0.0)));
        CorrelationMatrix::new(DMatrix::from_diagonal(&diag))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bosonic,
    #[default]
    AuxiliaryParity,
    PostSelection,
    HadamardTest,
    PositionSelective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Statevector,
    /// Trotter evolution compressed into a triangle of TFXY blocks (open chains, delta pulses).
    Compressed,
    /// Correlation-matrix propagation (quadratic drives only).
    Covariance,
}

/// How the statevector backend realizes kicks and time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Evolution {
    /// First-order Trotter steps and per-term drive rotations.
    #[default]
    Trotter,
    /// Dense exponentials of the full Hamiltonian and of the drive.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationAxis {
    X,
    Y,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub model: SshParams,
    pub psi0: InitialState,
    pub drive_operator: DriveOperator,
    pub drive_field: DriveField,
    /// Measured operator for the bosonic method.
    pub observable: DriveOperator,
    pub t_max: f64,
    pub dt: f64,
    pub method: Method,
    pub backend: Backend,
    pub evolution: Evolution,
    /// Shots per measured quantity and time point; 0 gives exact expectations.
    pub shots: u64,
    pub seed: u64,
    /// Apply `Z..Z X_r` drive strings as bare `X_r` rotations. Both act the same on the
    /// vacuum to linear order, and the bare form is a single-qubit gate.
    pub local_drive: bool,
    /// Also measure the `Y_0` channel so the full complex `G^R` is returned.
    pub measure_y: bool,
    /// Keep only the light cone of qubit 0 in compressed circuits.
    pub prune: bool,
}

impl ExperimentPlan {
    /// Momentum-`k` delta-pulse experiment with the parity method and default settings.
    pub fn momentum(model: SshParams, k: f64, eta: f64, t_max: f64, dt: f64) -> Result<Self> {
        let n = model.n;
        Ok(Self {
            model,
            psi0: InitialState::Vacuum,
            drive_operator: momentum_drive(k, n),
            drive_field: DriveField::DeltaPulse { eta },
            observable: DriveOperator::new(n, vec![(1.0, jw_x_tilde(0, n)?)])?,
            t_max,
            dt,
            method: Method::AuxiliaryParity,
            backend: Backend::Statevector,
            evolution: Evolution::Trotter,
            shots: 0,
            seed: 0,
            local_drive: false,
            measure_y: false,
            prune: true,
        })
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and t_max >= 0, got dt={} t_max={}",
                self.dt, self.t_max
            )));
        }
        let steps = (self.t_max / self.dt).round();
        if (steps * self.dt - self.t_max).abs() > 1e-9 * self.t_max.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "t_max={} is not a whole number of steps dt={}",
                self.t_max, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((0..=self.steps()?).map(|j| j as f64 * self.dt).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.drive_field.validate()?;
        self.steps()?;
        let n = self.model.n;
        for op in [&self.drive_operator, &self.observable] {
            if op.n_sites() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: op.n_sites(),
                });
            }
        }
        self.psi0.index(n)?;
        if self.backend == Backend::Compressed && self.evolution == Evolution::Exact {
            return Err(Error::InvalidArgument(
                "the compressed backend runs Trotter circuits; exact evolution needs the statevector backend".into(),
            ));
        }
        if self.backend == Backend::Compressed && self.model.boundary != Boundary::Open {
            return Err(Error::Unsupported("block compression needs an open chain".into()));
        }
        Ok(())
    }

    /// Same plan with the field scaled by `s`.
    pub fn with_field_scale(&self, s: f64) -> Self {
        Self {
            drive_field: self.drive_field.scaled(s),
            ..self.clone()
        }
    }

    fn kick_area(&self) -> Result<f64> {
        match self.drive_field.kick_area() {
            Some(eta) if eta != 0.0 => Ok(eta),
            Some(_) => Err(Error::InvalidArgument(
                "Green's-function methods need a nonzero kick".into(),
            )),
            None => Err(Error::InvalidArgument(
                "Green's-function methods use a delta pulse; use the bosonic method for shaped fields".into(),
            )),
        }
    }
}

// ---- compilation ----

/// Compiles kicks, steps and readouts of one plan onto `width` qubits
/// (`model.n`, plus one ancilla for the Hadamard test).
struct Compiler<'a> {
    plan: &'a ExperimentPlan,
    ham: SshHamiltonian,
    n: usize,
    width: usize,
}

impl<'a> Compiler<'a> {
    fn new(plan: &'a ExperimentPlan, width: usize) -> Result<Self> {
        plan.validate()?;
        if plan.backend == Backend::Covariance {
            return Err(Error::Unsupported(
                "this method needs qubit circuits; choose the statevector or compressed backend".into(),
            ));
        }
        Ok(Self {
            plan,
            ham: build_ssh(&plan.model)?,
            n: plan.model.n,
            width,
        })
    }

    fn widen(&self, p: &PauliString) -> PauliString {
        let mut letters = p.letters().to_vec();
        letters.resize(self.width, Pauli::I);
        PauliString::new(p.coefficient(), letters)
    }

    /// System-register dense unitary lifted to the full width (ancilla above).
    fn dense(&self, u: DMatrix<C64>) -> Gate {
        if self.width == self.n {
            return Gate::Dense(Arc::new(u));
        }
        let reps = 1usize << (self.width - self.n);
        let d = u.nrows();
        let mut full = DMatrix::zeros(d * reps, d * reps);
        for r in 0..reps {
            full.view_mut((r * d, r * d), (d, d)).copy_from(&u);
        }
        Gate::Dense(Arc::new(full))
    }

    fn localize(&self, p: &PauliString) -> Result<PauliString> {
        let support = p.support();
        let Some(&top) = support.last() else {
            return Ok(p.clone());
        };
        if support[..support.len() - 1].iter().any(|&q| p.letters()[q] != Pauli::Z) {
            return Err(Error::InvalidArgument(format!("{p} is not a Jordan-Wigner string")));
        }
        let mut letters = vec![Pauli::I; p.n_qubits()];
        letters[top] = p.letters()[top];
        Ok(PauliString::new(p.coefficient(), letters))
    }

    /// `exp(-i area B)` as gates.
    fn kick(&self, drive: &DriveOperator, area: f64) -> Result<Vec<Gate>> {
        if area == 0.0 {
            return Ok(Vec::new());
        }
        if self.plan.evolution == Evolution::Exact {
            return Ok(vec![self.dense(herm_expm(&pauli_sum(self.n, drive.terms()), area))]);
        }
        self.drive_rotations(drive, area, 1.0)
    }

    fn drive_rotations(&self, drive: &DriveOperator, h: f64, dt: f64) -> Result<Vec<Gate>> {
        if self.plan.local_drive && !self.plan.psi0.is_vacuum(self.n) {
            return Err(Error::InvalidArgument(
                "local drive rotations are only valid on the vacuum".into(),
            ));
        }
        drive_step(drive, h, dt)?
            .into_iter()
            .map(|r| {
                let s = if self.plan.local_drive {
                    self.localize(r.string())?
                } else {
                    r.string().clone()
                };
                Ok(Gate::Rotation(PauliRotation::new(self.widen(&s), r.angle())?))
            })
            .collect()
    }

    fn trotter_gates(&self) -> Result<Vec<Gate>> {
        trotter_step(&self.plan.model, self.plan.dt)?
            .rotations
            .into_iter()
            .map(|r| Ok(Gate::Rotation(PauliRotation::new(self.widen(r.string()), r.angle())?)))
            .collect()
    }

    fn circuit(&self, gates: Vec<Gate>) -> Result<Circuit> {
        let mut c = Circuit::new(self.width);
        c.extend(gates)?;
        Ok(c)
    }

    /// Evolution body under `H0 + h(t) B` with midpoint fields.
    fn body(&self, drive: &DriveOperator, mids: &[f64], prune: bool) -> Result<Body> {
        match self.plan.backend {
            Backend::Compressed => {
                if mids.iter().any(|h| *h != 0.0) {
                    return Err(Error::Unsupported(
                        "the compressed backend only supports delta pulses".into(),
                    ));
                }
                self.compressed_body(mids.len(), prune)
            }
            _ => {
                let h0 = pauli_sum(self.n, &self.ham.pauli_terms);
                let static_step = Arc::new(match self.plan.evolution {
                    Evolution::Trotter => self.circuit(self.trotter_gates()?)?,
                    Evolution::Exact => self.circuit(vec![self.dense(herm_expm(&h0, self.plan.dt))])?,
                });
                let b = (mids.iter().any(|h| *h != 0.0) && self.plan.evolution == Evolution::Exact)
                    .then(|| pauli_sum(self.n, drive.terms()));
                let steps = mids
                    .iter()
                    .map(|&h| {
                        if h == 0.0 {
                            return Ok(static_step.clone());
                        }
                        let gates = match (&self.plan.evolution, &b) {
                            (Evolution::Exact, Some(b)) => {
                                vec![self.dense(herm_expm(&(&h0 + b * C64::new(h, 0.0)), self.plan.dt))]
                            }
                            _ => {
                                let mut g = self.drive_rotations(drive, h, self.plan.dt)?;
                                g.extend(self.trotter_gates()?);
                                g
                            }
                        };
                        Ok(Arc::new(self.circuit(gates)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Body::Steps(steps))
            }
        }
    }

    fn compressed_body(&self, steps: usize, prune: bool) -> Result<Body> {
        let step = trotter_blocks(&self.plan.model, self.plan.dt)?;
        let mut tri = Triangle::identity(self.n)?;
        let mut circuits = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            if j > 0 {
                tri.absorb_circuit(&step)?;
            }
            let mut bc = tri.to_circuit();
            if prune {
                bc = lightcone_prune(&bc, 0)?;
            }
            circuits.push(self.circuit(bc.blocks.into_iter().map(Gate::Block).collect())?);
        }
        Ok(Body::PerTime(circuits))
    }

    fn state(&self) -> Result<StateVector> {
        Ok(StateVector::basis(self.width, self.plan.psi0.index(self.n)?))
    }

    /// Drive with `drive` (kick and/or smooth field scaled by `field_scale`), then read out.
    fn driven_program(
        &self,
        drive: &DriveOperator,
        field_scale: f64,
        post: Circuit,
        readout: Readout,
        prune: bool,
    ) -> Result<Program> {
        let steps = self.plan.steps()?;
        let field = self.plan.drive_field.scaled(field_scale);
        let mids = field.midpoints(self.plan.dt, steps)?;
        let kick = self.kick(drive, field.kick_area().unwrap_or(0.0))?;
        Ok(Program {
            psi0: self.state()?,
            prep: self.circuit(kick)?,
            body: self.body(drive, &mids, prune)?,
            post,
            readout,
            ancilla: None,
        })
    }
}

fn run_pair(exec: &dyn Executor, driven: &Program, baseline: &Program, seed: u64) -> Result<Measured> {
    let a = exec.execute(driven, derive_seed(seed, 0))?;
    let b = exec.execute(baseline, derive_seed(seed, 1))?;
    a.minus(&b)
}

fn check_parity_conserving(ham: &SshHamiltonian, n: usize) -> Result<()> {
    let p = parity_operator(n);
    if ham.pauli_terms.iter().all(|(_, t)| t.commutes_with(&p)) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "Hamiltonian does not conserve particle parity".into(),
        ))
    }
}

fn traced(times: Vec<f64>, values: Vec<C64>, variance: Vec<f64>, shots: u64) -> Result<ResponseTrace> {
    let mut t = ResponseTrace::new(times, values)?;
    if variance.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            got: variance.len(),
        });
    }
    t.variance = variance;
    t.shots = shots;
    Ok(t)
}

// ---- bosonic response ----

/// `A(t) = <A(t)>_h - <A(t)>_0` for the plan's observable.
pub fn evolve_and_measure(plan: &ExperimentPlan) -> Result<ResponseTrace> {
    let mut out = evolve_and_measure_many(
        plan,
        std::slice::from_ref(&plan.observable),
        &Ideal { shots: plan.shots },
    )?;
    Ok(out.remove(0))
}

/// Baseline-subtracted responses of several observables from the same runs.
pub fn evolve_and_measure_many(
    plan: &ExperimentPlan,
    observables: &[DriveOperator],
    exec: &dyn Executor,
) -> Result<Vec<ResponseTrace>> {
    plan.validate()?;
    let times = plan.times()?;
    if plan.backend == Backend::Covariance {
        let rows = covariance_response(plan, observables)?;
        return observables
            .iter()
            .enumerate()
            .map(|(q, _)| ResponseTrace::from_real(times.clone(), &rows.iter().map(|r| r[q]).collect::<Vec<_>>()))
            .collect();
    }
    let c = Compiler::new(plan, plan.model.n)?;
    let prune = plan.prune
        && observables
            .iter()
            .all(|o| o.terms().iter().all(|(_, p)| p.support().iter().all(|&q| q == 0)));
    let readout = Readout::Operators(observables.to_vec());
    let driven = c.driven_program(&plan.drive_operator, 1.0, Circuit::new(c.width), readout.clone(), prune)?;
    let baseline = c.driven_program(&plan.drive_operator, 0.0, Circuit::new(c.width), readout, prune)?;
    let m = run_pair(exec, &driven, &baseline, plan.seed)?;
    (0..observables.len())
        .map(|q| {
            let v = m.column(q).into_iter().map(|x| C64::new(x, 0.0)).collect();
            traced(times.clone(), v, m.var_column(q), plan.shots)
        })
        .collect()
}

/// Site-potential observables on the correlation-matrix backend.
fn covariance_response(plan: &ExperimentPlan, observables: &[DriveOperator]) -> Result<Vec<Vec<f64>>> {
    let weights = observables
        .iter()
        .map(|o| {
            o.as_site_potential()
                .ok_or_else(|| Error::Unsupported("covariance backend measures only density observables".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let dens = covariance_densities(plan, &plan.psi0.correlations(plan.model.n)?)?;
    Ok(dens
        .iter()
        .map(|row| {
            weights
                .iter()
                .map(|w| w.iter().zip(row).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect())
}

/// `<n_r(t)>_h - <n_r(t)>_0` on the correlation-matrix backend.
fn covariance_densities(plan: &ExperimentPlan, c0: &CorrelationMatrix) -> Result<Vec<Vec<f64>>> {
    let m = build_ssh(&plan.model)?.single_particle;
    let evolver = GaussianEvolver::new(&m, Some(&plan.drive_operator), plan.dt)?;
    let steps = plan.steps()?;
    let mids = plan.drive_field.midpoints(plan.dt, steps)?;
    let mut start = c0.clone();
    if let Some(eta) = plan.drive_field.kick_area() {
        evolver.kick(&mut start, eta)?;
    }
    let mut driven = Vec::with_capacity(steps + 1);
    evolver.run(&start, &mids, |_, c| driven.push(c.densities()))?;
    let mut base = Vec::with_capacity(steps + 1);
    evolver.run(c0, &vec![0.0; steps], |_, c| base.push(c.densities()))?;
    Ok(driven
        .into_iter()
        .zip(base)
        .map(|(d, b)| d.iter().zip(&b).map(|(x, y)| x - y).collect())
        .collect())
}

// ---- fermionic Green's functions ----

/// Measured operators standing in for `A P`: `X_0` (and `Y_0`) on the vacuum, otherwise
/// `X_0 Z_1..Z_{n-1}` (and `Y_0 Z_1..Z_{n-1}`). Returns them with the parity `s`.
fn parity_observables(plan: &ExperimentPlan, y_channel: bool) -> Result<(Vec<PauliString>, f64)> {
    let n = plan.model.n;
    let s = plan.psi0.parity(n)?;
    let vacuum = plan.psi0.is_vacuum(n);
    let build = |head: Pauli| -> Result<PauliString> {
        let mut ops = vec![(0usize, head)];
        if !vacuum {
            ops.extend((1..n).map(|q| (q, Pauli::Z)));
        }
        PauliString::from_sparse(n, &ops)
    };
    let mut obs = vec![build(Pauli::X)?];
    if y_channel {
        obs.push(build(Pauli::Y)?);
    }
    Ok((obs, s))
}

fn operators(width: usize, strings: &[PauliString]) -> Result<Vec<DriveOperator>> {
    strings
        .iter()
        .map(|p| DriveOperator::new(width, vec![(1.0, p.clone())]))
        .collect()
}

/// `2 G^R` combined with the drive weights `alpha_r / 2`: for a momentum drive the real part
/// is `L_k(t) = 2 Re G^R_k(t)`. The imaginary part is filled only when `measure_y` is set.
pub fn greens_via_parity(plan: &ExperimentPlan) -> Result<ResponseTrace> {
    greens_via_parity_with(plan, &Ideal { shots: plan.shots })
}

/// The driven program behind [`greens_via_parity`], with the parity eigenvalue.
///
/// No undriven baseline is needed: the readout is parity-odd and the undriven
/// state stays a mixture of parity eigenstates (also under Pauli noise), so its
/// expectation vanishes identically.
pub fn parity_programs(plan: &ExperimentPlan) -> Result<(Program, f64)> {
    let n = plan.model.n;
    let c = Compiler::new(plan, n)?;
    check_parity_conserving(&c.ham, n)?;
    let (obs, s) = parity_observables(plan, plan.measure_y)?;
    let readout = Readout::Operators(operators(n, &obs)?);
    let driven = c.driven_program(&plan.drive_operator, 1.0, Circuit::new(n), readout, plan.prune)?;
    Ok((driven, s))
}

pub fn greens_via_parity_with(plan: &ExperimentPlan, exec: &dyn Executor) -> Result<ResponseTrace> {
    let eta = plan.kick_area()?;
    let (driven, s) = parity_programs(plan)?;
    let m = exec.execute(&driven, plan.seed)?;
    let scale = 1.0 / (2.0 * eta * s);
    let values = m
        .mean
        .iter()
        .map(|row| C64::new(row[0], row.get(1).copied().unwrap_or(0.0)) * scale)
        .collect();
    let var = m.var_column(0).iter().map(|v| v * scale * scale).collect();
    traced(plan.times()?, values, var, plan.shots)
}

/// Per-site traces `L(r, t) = 2 Re G^R_{0r}(t)` from one kick `exp(-i eta X~_r)` per site.
/// The plan's drive operator is ignored.
pub fn position_selective_greens(plan: &ExperimentPlan) -> Result<Vec<ResponseTrace>> {
    position_selective_greens_with(plan, &Ideal { shots: plan.shots })
}

pub fn position_selective_greens_with(plan: &ExperimentPlan, exec: &dyn Executor) -> Result<Vec<ResponseTrace>> {
    let eta = plan.kick_area()?;
    let n = plan.model.n;
    let c = Compiler::new(plan, n)?;
    check_parity_conserving(&c.ham, n)?;
    let (obs, s) = parity_observables(plan, plan.measure_y)?;
    let readout = Readout::Operators(operators(n, &obs)?);
    let times = plan.times()?;
    let programs = (0..n)
        .map(|r| {
            let drive = site_drive(r, n)?;
            // parity-odd readout: the undriven run is identically zero, as for the parity method
            c.driven_program(&drive, 1.0, Circuit::new(n), readout.clone(), plan.prune)
        })
        .collect::<Result<Vec<_>>>()?;
    programs
        .par_iter()
        .enumerate()
        .map(|(r, driven)| {
            let m = exec.execute(driven, derive_seed(plan.seed, r as u64))?;
            let values = m
                .mean
                .iter()
                .map(|row| C64::new(row[0], row.get(1).copied().unwrap_or(0.0)) / (eta * s))
                .collect();
            let var = m.var_column(0).iter().map(|v| v / (eta * eta)).collect();
            traced(times.clone(), values, var, plan.shots)
        })
        .collect()
}

/// Per-site traces of the same quantity as [`position_selective_greens`] from a Hadamard
/// test: ancilla in `|+>`, controlled `X~_r`, uncontrolled evolution, controlled
/// `X_0` (or its parity-dressed form), then `L(r, t) = 2 <Y_anc> / s`.
pub fn hadamard_test_greens(plan: &ExperimentPlan) -> Result<Vec<ResponseTrace>> {
    hadamard_test_greens_with(plan, &Ideal { shots: plan.shots })
}

pub fn hadamard_test_greens_with(plan: &ExperimentPlan, exec: &dyn Executor) -> Result<Vec<ResponseTrace>> {
    let n = plan.model.n;
    let width = n + 1;
    let c = Compiler::new(plan, width)?;
    check_parity_conserving(&c.ham, n)?;
    let (obs, s) = parity_observables(plan, plan.measure_y)?;
    let anc = n;
    let anc_y = PauliString::from_sparse(width, &[(anc, Pauli::Y)])?;
    let anc_x = PauliString::from_sparse(width, &[(anc, Pauli::X)])?;
    let readout = Readout::Operators(operators(width, &[anc_y, anc_x])?);
    let zero_drive = DriveOperator::new(n, Vec::new())?;
    let mids = vec![0.0; plan.steps()?];
    let times = plan.times()?;
    let mut jobs = Vec::new();
    for r in 0..n {
        for o in &obs {
            let mut prep = Circuit::new(width);
            let ya = PauliString::from_sparse(width, &[(anc, Pauli::Y)])?;
            prep.push(Gate::Rotation(PauliRotation::new(ya, FRAC_PI_4)?))?;
            let mut target = jw_x_tilde(r, n)?;
            if plan.local_drive {
                if !plan.psi0.is_vacuum(n) {
                    return Err(Error::InvalidArgument(
                        "local drive rotations are only valid on the vacuum".into(),
                    ));
                }
                target = c.localize(&target)?;
            }
            prep.push(Gate::ControlledPauli {
                control: anc,
                target: c.widen(&target),
            })?;
            let mut post = Circuit::new(width);
            post.push(Gate::ControlledPauli {
                control: anc,
                target: c.widen(o),
            })?;
            jobs.push(Program {
                psi0: c.state()?,
                prep,
                body: c.body(&zero_drive, &mids, plan.prune)?,
                post,
                readout: readout.clone(),
                ancilla: Some(anc),
            });
        }
    }
    let per_site = obs.len();
    let measured = jobs
        .par_iter()
        .enumerate()
        .map(|(i, p)| exec.execute(p, derive_seed(plan.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    measured
        .chunks(per_site)
        .map(|ch| {
            let re = ch[0].column(0);
            let im = ch.get(1).map(|m| m.column(0));
            let values = (0..re.len())
                .map(|j| C64::new(re[j], im.as_ref().map_or(0.0, |v| v[j])) * (2.0 / s))
                .collect();
            let var = ch[0].var_column(0).iter().map(|v| 4.0 * v).collect();
            traced(times.clone(), values, var, plan.shots)
        })
        .collect()
}

/// `sum_r cos(k r) L(r, t)`: per-site traces combined into the momentum-`k` trace.
pub fn combine_momentum(per_site: &[ResponseTrace], k: f64) -> Result<ResponseTrace> {
    let weights: Vec<f64> = (0..per_site.len()).map(|r| (k * r as f64).cos()).collect();
    weighted_sum(per_site, &weights)
}

/// `sum_r w_r L(r, t)` with variances combined as independent.
pub fn weighted_sum(per_site: &[ResponseTrace], weights: &[f64]) -> Result<ResponseTrace> {
    let first = per_site
        .first()
        .ok_or_else(|| Error::InvalidArgument("no per-site traces".into()))?;
    if weights.len() != per_site.len() {
        return Err(Error::DimensionMismatch {
            expected: per_site.len(),
            got: weights.len(),
        });
    }
    let mut values = vec![C64::new(0.0, 0.0); first.len()];
    let mut var = vec![0.0; first.len()];
    for (tr, &w) in per_site.iter().zip(weights) {
        if tr.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: tr.len(),
            });
        }
        for j in 0..first.len() {
            values[j] += tr.values[j] * w;
            var[j] += tr.variance[j] * w * w;
        }
    }
    traced(first.times.clone(), values, var, first.shots)
}

/// Sector statistics at one time point after the basis rotation on qubit 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostSelectionRecord {
    pub time: f64,
    /// `P(N-1)`, `P(N)`, `P(N+1)`.
    pub p_minus: f64,
    pub p_same: f64,
    pub p_plus: f64,
    /// `<Phi_N| n_0 |Phi_N>`.
    pub n0_in_sector: f64,
    /// `P(N-1) + P(N+1)`; `1/2 + eta sum_m alpha_m Re (Im) G^R_{0m}` for the y (x) rotation.
    pub sum_combo: f64,
    /// `<Phi_N| n_0 |Phi_N> + P(N+1)`; `1/2 + eta sum_m alpha_m Re (Im) (G^> + G^<)_{0m}`.
    pub occupation_combo: f64,
}

#[derive(Debug, Clone)]
pub struct PostSelectionResult {
    pub axis: RotationAxis,
    pub eta: f64,
    pub particles: usize,
    pub records: Vec<PostSelectionRecord>,
    /// `sum_m alpha_m Re G^R_{0m}` (y) or `Im` (x); equals `L_k` for a momentum drive and the y axis.
    pub retarded: ResponseTrace,
    pub greater: ResponseTrace,
    pub lesser: ResponseTrace,
}

/// Kick, evolve, rotate qubit 0 by `exp(-i pi/4 Y_0)` (or `exp(+i pi/4 X_0)`), then sort
/// outcomes by particle number.
pub fn greens_via_postselection(plan: &ExperimentPlan, axis: RotationAxis) -> Result<PostSelectionResult> {
    greens_via_postselection_with(plan, axis, &Ideal { shots: plan.shots })
}

pub fn greens_via_postselection_with(
    plan: &ExperimentPlan,
    axis: RotationAxis,
    exec: &dyn Executor,
) -> Result<PostSelectionResult> {
    let eta = match plan.drive_field.kick_area() {
        Some(eta) => eta,
        None => return Err(Error::InvalidArgument("post-selection uses a delta pulse".into())),
    };
    let n = plan.model.n;
    let c = Compiler::new(plan, n)?;
    let particles = plan.psi0.particles(n)?;
    let mut post = Circuit::new(n);
    let (letter, angle) = match axis {
        RotationAxis::Y => (Pauli::Y, FRAC_PI_4),
        RotationAxis::X => (Pauli::X, -FRAC_PI_4),
    };
    post.push(Gate::Rotation(PauliRotation::new(
        PauliString::from_sparse(n, &[(0, letter)])?,
        angle,
    )?))?;
    let readout = Readout::Sectors { n_sys: n, particles };
    let program = c.driven_program(&plan.drive_operator, 1.0, post, readout, plan.prune)?;
    let m = exec.execute(&program, derive_seed(plan.seed, 0))?;
    let times = plan.times()?;
    let records: Vec<PostSelectionRecord> = times
        .iter()
        .zip(&m.mean)
        .map(|(&time, row)| PostSelectionRecord {
            time,
            p_minus: row[0],
            p_same: row[1],
            p_plus: row[2],
            n0_in_sector: row[3],
            sum_combo: row[0] + row[2],
            occupation_combo: row[3] + row[2],
        })
        .collect();
    let inv = if eta != 0.0 { 1.0 / eta } else { f64::NAN };
    // value from a record, and the (independent) variances entering it with their weights
    let real = |f: &dyn Fn(&PostSelectionRecord) -> f64, w: [f64; 4]| -> Result<ResponseTrace> {
        let v: Vec<f64> = records.iter().map(f).collect();
        let var = m
            .var
            .iter()
            .map(|row| row.iter().zip(w).map(|(x, c)| x * c * c).sum::<f64>() * inv * inv)
            .collect();
        traced(
            times.clone(),
            v.into_iter().map(|x| C64::new(x, 0.0)).collect(),
            var,
            plan.shots,
        )
    };
    let retarded = if particles == 0 {
        // no particle can be removed from the vacuum: (P1 - P0) / 2 = eta sum alpha Re G^R
        real(&|r| (r.p_plus - r.p_same) * inv / 2.0, [0.0, 0.5, 0.5, 0.0])?
    } else {
        real(&|r| (r.sum_combo - 0.5) * inv, [1.0, 0.0, 1.0, 0.0])?
    };
    Ok(PostSelectionResult {
        axis,
        eta,
        particles,
        retarded,
        greater: real(
            &|r| (r.sum_combo + r.occupation_combo - 1.0) * inv / 2.0,
            [0.5, 0.0, 1.0, 0.5],
        )?,
        lesser: real(
            &|r| (r.occupation_combo - r.sum_combo) * inv / 2.0,
            [0.5, 0.0, 0.0, 0.5],
        )?,
        records,
    })
}

/// Dispatch on `plan.method`. Per-site methods are combined with the cosine weights of the
/// plan's drive operator divided by two (a momentum drive gives `L_k`).
pub fn response_trace(plan: &ExperimentPlan) -> Result<ResponseTrace> {
    response_trace_with(plan, &Ideal { shots: plan.shots })
}

pub fn response_trace_with(plan: &ExperimentPlan, exec: &dyn Executor) -> Result<ResponseTrace> {
    let weights: Vec<f64> = plan.drive_operator.coefficients().iter().map(|c| c / 2.0).collect();
    match plan.method {
        Method::Bosonic => {
            let mut out = evolve_and_measure_many(plan, std::slice::from_ref(&plan.observable), exec)?;
            Ok(out.remove(0))
        }
        Method::AuxiliaryParity => greens_via_parity_with(plan, exec),
        Method::PostSelection => Ok(greens_via_postselection_with(plan, RotationAxis::Y, exec)?.retarded),
        Method::PositionSelective => weighted_sum(&position_selective_greens_with(plan, exec)?, &weights),
        Method::HadamardTest => weighted_sum(&hadamard_test_greens_with(plan, exec)?, &weights),
    }
}

// ---- linearity ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearityReport {
    pub scales: Vec<f64>,
    /// `max_t |A_s/s - A_0/s_0| / max_t |A_0/s_0|` for each scale against the first.
    pub nonlinearity: Vec<f64>,
    pub max_nonlinearity: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub const LINEARITY_THRESHOLD: f64 = 0.02;

/// Repeats the bosonic measurement with the field scaled by each of `scales` and checks
/// that the response scales along.
pub fn linearity_check(plan: &ExperimentPlan, scales: &[f64]) -> Result<LinearityReport> {
    if scales.len() < 2 || scales.iter().any(|s| *s == 0.0 || !s.is_finite()) {
        return Err(Error::InvalidArgument("need at least two nonzero scales".into()));
    }
    let traces = scales
        .iter()
        .map(|&s| evolve_and_measure(&plan.with_field_scale(s)))
        .collect::<Result<Vec<_>>>()?;
    let reference: Vec<C64> = traces[0].values.iter().map(|v| v / scales[0]).collect();
    let norm = reference.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if norm == 0.0 {
        return Err(Error::Numerical("reference response vanishes identically".into()));
    }
    let nonlinearity: Vec<f64> = traces
        .iter()
        .zip(scales)
        .map(|(tr, s)| {
            tr.values
                .iter()
                .zip(&reference)
                .map(|(v, r)| (v / *s - r).norm())
                .fold(0.0, f64::max)
                / norm
        })
        .collect();
    let max_nonlinearity = nonlinearity.iter().copied().fold(0.0, f64::max);
    Ok(LinearityReport {
        scales: scales.to_vec(),
        nonlinearity,
        max_nonlinearity,
        threshold: LINEARITY_THRESHOLD,
        passed: max_nonlinearity < LINEARITY_THRESHOLD,
    })
}

/// Field scale (relative to the plan's field) at which doubling the field first shows
/// [`LINEARITY_THRESHOLD`] nonlinearity, by bisection on `[lo, hi]` in log scale.
pub fn locate_linearity_threshold(plan: &ExperimentPlan, lo: f64, hi: f64, iterations: usize) -> Result<f64> {
    let nl = |s: f64| -> Result<f64> { Ok(linearity_check(plan, &[s, 2.0 * s])?.max_nonlinearity) };
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument("need 0 < lo < hi".into()));
    }
    if nl(lo)? >= LINEARITY_THRESHOLD || nl(hi)? < LINEARITY_THRESHOLD {
        return Err(Error::Numerical("threshold is not bracketed by [lo, hi]".into()));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = (a * b).sqrt();
        if nl(mid)? < LINEARITY_THRESHOLD {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a * b).sqrt())
}

// ---- momentum structure ----

/// Responses `<X~_r(t)>` at every site, projected onto each `k'`:
/// `sum_r e^{-i k' r} A_r(t)`, indexed `[k'][t]`.
pub fn momentum_components(plan: &ExperimentPlan, ks: &[f64]) -> Result<Vec<Vec<C64>>> {
    let n = plan.model.n;
    let observables = (0..n)
        .map(|r| DriveOperator::new(n, vec![(1.0, jw_x_tilde(r, n)?)]))
        .collect::<Result<Vec<_>>>()?;
    let traces = evolve_and_measure_many(plan, &observables, &Ideal { shots: plan.shots })?;
    let len = traces[0].len();
    Ok(ks
        .iter()
        .map(|&k| {
            (0..len)
                .map(|j| {
                    traces
                        .iter()
                        .enumerate()
                        .map(|(r, tr)| tr.values[j] * C64::from_polar(1.0, -k * r as f64))
                        .sum()
                })
                .collect()
        })
        .collect())
}

// ---- polarizability ----

#[derive(Debug, Clone)]
pub struct PolarizabilityRun {
    pub params: SshParams,
    pub site: usize,
    pub field: DriveField,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `delta n(r, t)`, indexed `[t][r]`.
    pub dn: Vec<Vec<f64>>,
    pub particles: f64,
}

/// Density response of the ground state at the filling set by `mu` to `h(t) n_site`,
/// on the correlation-matrix backend. With `antisymmetrize` the run is repeated with
/// `-h` and `(dn_+ - dn_-)/2` is kept, which removes every even order in `h`.
pub fn polarizability_run(
    params: &SshParams,
    site: usize,
    field: &DriveField,
    t_max: f64,
    dt: f64,
    antisymmetrize: bool,
) -> Result<PolarizabilityRun> {
    let n = params.n;
    let m = build_ssh(params)?.single_particle;
    let c0 = ground_state_correlations(&m)?;
    let mut plan = ExperimentPlan::momentum(*params, 0.0, 0.0, t_max, dt)?;
    plan.drive_operator = density_operator(site, n)?;
    plan.drive_field = field.clone();
    plan.backend = Backend::Covariance;
    plan.method = Method::Bosonic;
    plan.validate()?;
    let mut dn = covariance_densities(&plan, &c0)?;
    if antisymmetrize {
        let minus = covariance_densities(&plan.with_field_scale(-1.0), &c0)?;
        for (a, b) in dn.iter_mut().zip(minus) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = (*x - y) / 2.0;
            }
        }
    }
    Ok(PolarizabilityRun {
        params: *params,
        site,
        field: field.clone(),
        dt,
        times: plan.times()?,
        dn,
        particles: c0.particle_number(),
    })
}

impl PolarizabilityRun {
    /// `sum_r e^{-iq(r - r')} delta n(r, t)`.
    pub fn momentum_trace(&self, q: f64) -> Result<ResponseTrace> {
        let values = self
            .dn
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(r, x)| C64::from_polar(*x, -q * (r as f64 - self.site as f64)))
                    .sum()
            })
            .collect();
        ResponseTrace::new(self.times.clone(), values)
    }
}

/// Damped drive spectrum on the grid [`fourier_transform`] produces for a trace of
/// `steps + 1` samples: midpoint samples plus the kick.
pub fn drive_spectrum(field: &DriveField, dt: f64, steps: usize, tau: f64, pad_factor: usize) -> Result<Spectrum> {
    let mut mids = field.midpoints(dt, steps)?;
    mids.push(0.0);
    let times = (0..mids.len()).map(|k| (k as f64 + 0.5) * dt).collect();
    let tr = apply_damping(&ResponseTrace::from_real(times, &mids)?, tau)?;
    let mut spec = fourier_transform(&tr, pad_factor)?;
    let kick = field.kick_area().unwrap_or(0.0);
    spec.values.iter_mut().for_each(|v| *v += kick);
    Ok(spec)
}

/// `chi(q, w)` from a run: damp by `exp(-t/tau)`, transform, divide by the equally damped
/// drive spectrum. Bins with `|h(w)|^2 < mask * max |h|^2` are left without a value.
pub fn polarizability_spectrum(
    run: &PolarizabilityRun,
    q: f64,
    tau: f64,
    pad_factor: usize,
    mask: f64,
) -> Result<Spectrum> {
    let a = fourier_transform(&apply_damping(&run.momentum_trace(q)?, tau)?, pad_factor)?;
    let h = drive_spectrum(&run.field, run.dt, run.times.len() - 1, tau, pad_factor)?;
    functional_division(&a, &h, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_retarded_gf, lesser_greater, momentum_response};
    use std::f64::consts::PI;

    fn max_dev(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn plan(model: SshParams, k: f64, eta: f64, t_max: f64, dt: f64) -> ExperimentPlan {
        ExperimentPlan::momentum(model, k, eta, t_max, dt).unwrap()
    }

    fn single_particle(p: &SshParams) -> DMatrix<f64> {
        build_ssh(p).unwrap().single_particle
    }

    #[test]
    fn zero_field_gives_zero_response() {
        let mut p = plan(SshParams::open(4, 1.0, 0.2, 0.5), PI / 2.0, 0.0, 1.0, 0.05);
        p.method = Method::Bosonic;
        let tr = evolve_and_measure(&p).unwrap();
        assert_eq!(tr.len(), 21);
        assert!(tr.values.iter().all(|v| v.norm() == 0.0));
        p.psi0 = InitialState::Occupied { sites: vec![1] };
        p.drive_field = DriveField::GaussianSinusoid {
            amplitude: 0.0,
            omega0: 1.0,
            sigma: 1.0,
            t0: 0.5,
        };
        assert!(evolve_and_measure(&p).unwrap().values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn grid_must_be_whole_steps() {
        let p = plan(SshParams::open(4, 1.0, 0.0, 0.0), 0.0, 0.01, 1.01, 0.05);
        assert!(p.validate().is_err());
    }

    #[test]
    fn parity_method_matches_propagator_exact_evolution() {
        let model = SshParams::open(5, 1.0, 0.3, 0.7);
        let m = single_particle(&model);
        for k in [0.0, 2.0 * PI / 5.0, 4.0 * PI / 5.0] {
            let mut p = plan(model, k, 1e-6, 3.0, 0.1);
            p.evolution = Evolution::Exact;
            let tr = greens_via_parity(&p).unwrap();
            let oracle = momentum_response(&m, k, &tr.times);
            assert!(tr.values[0].norm() < 1e-9, "L(0+) = {}", tr.values[0]);
            assert!(max_dev(&tr.real_parts(), &oracle) < 1e-6);
        }
    }

    #[test]
    fn trotter_parity_method_is_close_to_oracle() {
        let model = SshParams::open(4, 1.0, 0.4, 0.3);
        let m = single_particle(&model);
        // first-order splitting: the error is O(dt) and does not grow with t
        let err = |dt: f64| {
            let tr = greens_via_parity(&plan(model, PI / 2.0, 1e-6, 5.0, dt)).unwrap();
            max_dev(&tr.real_parts(), &momentum_response(&m, PI / 2.0, &tr.times))
        };
        let (e1, e2) = (err(0.05), err(0.025));
        assert!(e1 < 0.05, "{e1}");
        assert!((e1 / e2 - 2.0).abs() < 0.3, "{e1} {e2}");
    }

    #[test]
    fn y_channel_gives_imaginary_part() {
        let model = SshParams::open(4, 1.0, 0.0, 1.0);
        let m = single_particle(&model);
        let k = PI / 2.0;
        let mut p = plan(model, k, 1e-6, 2.0, 0.1);
        p.evolution = Evolution::Exact;
        p.measure_y = true;
        let tr = greens_via_parity(&p).unwrap();
        let g = crate::oracle::momentum_retarded_gf(&m, k, &tr.times);
        for (v, g) in tr.values.iter().zip(g) {
            assert!((v - g * 2.0).norm() < 1e-6, "{v} vs {}", g * 2.0);
        }
    }

    #[test]
    fn parity_dressing_handles_occupied_states() {
        // odd parity, occupied sites included: G^R is state independent for quadratic H
        let model = SshParams::open(4, 1.0, 0.2, 0.4);
        let m = single_particle(&model);
        for sites in [vec![2], vec![0, 3], vec![0, 1, 3]] {
            let mut p = plan(model, 0.0, 1e-6, 2.0, 0.1);
            p.evolution = Evolution::Exact;
            p.psi0 = InitialState::Occupied { sites };
            p.drive_operator = site_drive(2, 4).unwrap();
            let tr = greens_via_parity(&p).unwrap();
            let g = exact_retarded_gf(&m, 0, 2, &tr.times).unwrap();
            // weights alpha/2 = 1/2: value is Re G^R_{02}
            for (v, g) in tr.values.iter().zip(g) {
                assert!((v.re - g.re).abs() < 1e-6, "{} vs {}", v.re, g.re);
            }
        }
    }

    #[test]
    fn four_methods_agree() {
        let model = SshParams::open(4, 1.0, 0.3, 0.6);
        let k = PI / 2.0;
        let p = plan(model, k, 1e-7, 2.0, 0.05);
        let parity = greens_via_parity(&p).unwrap().real_parts();
        let post = greens_via_postselection(&p, RotationAxis::Y)
            .unwrap()
            .retarded
            .real_parts();
        let pos = combine_momentum(&position_selective_greens(&p).unwrap(), k)
            .unwrap()
            .real_parts();
        let had = combine_momentum(&hadamard_test_greens(&p).unwrap(), k)
            .unwrap()
            .real_parts();
        // combine_momentum uses cos weights, i.e. half the drive coefficients
        for other in [&post, &pos, &had] {
            assert!(max_dev(&parity, other) < 1e-6, "{}", max_dev(&parity, other));
        }
    }

    #[test]
    fn hadamard_zero_time_correlator() {
        let p = plan(SshParams::open(3, 1.0, 0.0, 0.0), 0.0, 0.01, 0.1, 0.1);
        let tr = hadamard_test_greens(&p).unwrap();
        // C = <X0 X0> = 1 is real, so L(0, 0) = 2 Im C = 0
        assert!(tr[0].values[0].norm() < 1e-14);
    }

    #[test]
    fn postselection_identities() {
        let model = SshParams::open(4, 1.0, 0.2, 0.5);
        let mut p = plan(model, 2.0 * PI / 4.0, 0.0, 1.0, 0.1);
        for sites in [vec![], vec![1], vec![0, 2]] {
            p.psi0 = InitialState::Occupied { sites };
            for axis in [RotationAxis::X, RotationAxis::Y] {
                let r = greens_via_postselection(&p, axis).unwrap();
                for rec in &r.records {
                    assert!((rec.sum_combo - 0.5).abs() < 1e-12);
                    assert!((rec.occupation_combo - 0.5).abs() < 1e-12);
                }
            }
        }
        // the two-particle sector carries eta^2 |alpha|^2 / 2 at most
        let eta = 0.01;
        p.drive_field = DriveField::DeltaPulse { eta };
        p.psi0 = InitialState::Vacuum;
        for drive in [site_drive(1, 4).unwrap(), p.drive_operator.clone()] {
            let a2: f64 = drive.coefficients().iter().map(|a| a * a).sum();
            p.drive_operator = drive;
            let r = greens_via_postselection(&p, RotationAxis::Y).unwrap();
            for rec in &r.records {
                let loss = 1.0 - rec.p_same - rec.p_plus;
                assert!(loss >= -1e-15 && loss <= 0.5 * eta * eta * a2 * 1.01, "{loss}");
            }
        }
    }

    #[test]
    fn postselection_recovers_lesser_and_greater() {
        let model = SshParams::open(4, 1.0, 0.3, 0.2);
        let m = single_particle(&model);
        let k = PI / 2.0;
        let mut p = plan(model, k, 1e-5, 1.5, 0.1);
        p.evolution = Evolution::Exact;
        p.psi0 = InitialState::Occupied { sites: vec![1, 2] };
        let c = p.psi0.correlations(4).unwrap();
        let alpha = p.drive_operator.coefficients();
        let ry = greens_via_postselection(&p, RotationAxis::Y).unwrap();
        let rx = greens_via_postselection(&p, RotationAxis::X).unwrap();
        for (j, &t) in ry.retarded.times.iter().enumerate() {
            let (mut less, mut great) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for (mm, a) in alpha.iter().enumerate() {
                let (l, g) = lesser_greater(&m, c.matrix(), 0, mm, t).unwrap();
                less += l * *a;
                great += g * *a;
            }
            let tol = 1e-5;
            assert!((ry.lesser.values[j].re - less.re).abs() < tol);
            assert!((ry.greater.values[j].re - great.re).abs() < tol);
            assert!((ry.retarded.values[j].re - (great - less).re).abs() < tol);
            assert!((rx.lesser.values[j].re - less.im).abs() < tol);
            assert!((rx.greater.values[j].re - great.im).abs() < tol);
            assert!((rx.retarded.values[j].re - (great - less).im).abs() < tol);
        }
    }

    #[test]
    fn compressed_backend_matches_statevector() {
        let model = SshParams::open(5, 1.0, 0.4, 0.8);
        let mut p = plan(model, 2.0 * PI / 5.0, 0.02, 2.0, 0.05);
        let sv = greens_via_parity(&p).unwrap();
        p.backend = Backend::Compressed;
        let pruned = greens_via_parity(&p).unwrap();
        p.prune = false;
        let full = greens_via_parity(&p).unwrap();
        assert!(max_dev(&sv.real_parts(), &pruned.real_parts()) < 1e-10);
        assert!(max_dev(&full.real_parts(), &pruned.real_parts()) < 1e-10);
        p.prune = true;
        let a = greens_via_postselection(&p, RotationAxis::Y).unwrap();
        p.backend = Backend::Statevector;
        let b = greens_via_postselection(&p, RotationAxis::Y).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.p_plus - y.p_plus).abs() < 1e-10 && (x.n0_in_sector - y.n0_in_sector).abs() < 1e-10);
        }
    }

    #[test]
    fn compressed_rejects_shaped_fields() {
        let mut p = plan(SshParams::open(4, 1.0, 0.0, 0.0), 0.0, 0.0, 1.0, 0.1);
        p.method = Method::Bosonic;
        p.backend = Backend::Compressed;
        p.drive_field = DriveField::GaussianSinusoid {
            amplitude: 0.01,
            omega0: 1.0,
            sigma: 1.0,
            t0: 0.5,
        };
        assert!(matches!(evolve_and_measure(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn covariance_rejects_linear_drive() {
        let mut p = plan(SshParams::open(4, 1.0, 0.0, 0.0), 0.0, 0.01, 1.0, 0.1);
        p.method = Method::Bosonic;
        p.backend = Backend::Covariance;
        p.observable = density_operator(0, 4).unwrap();
        let err = evolve_and_measure(&p).unwrap_err();
        assert!(err.to_string().contains("statevector"), "{err}");
    }

    #[test]
    fn covariance_and_statevector_densities_agree() {
        let model = SshParams::open(5, 1.0, 0.3, 0.4);
        let mut p = plan(model, 0.0, 0.0, 2.0, 0.05);
        p.method = Method::Bosonic;
        p.evolution = Evolution::Exact;
        p.psi0 = InitialState::Occupied { sites: vec![0, 3] };
        p.drive_operator = density_operator(2, 5).unwrap();
        p.drive_field = DriveField::GaussianSinusoid {
            amplitude: 0.3,
            omega0: 1.0,
            sigma: 1.0,
            t0: 1.0,
        };
        let obs: Vec<_> = (0..5).map(|r| density_operator(r, 5).unwrap()).collect();
        let sv = evolve_and_measure_many(&p, &obs, &Ideal::default()).unwrap();
        p.backend = Backend::Covariance;
        let cov = evolve_and_measure_many(&p, &obs, &Ideal::default()).unwrap();
        for (a, b) in sv.iter().zip(&cov) {
            assert!(max_dev(&a.real_parts(), &b.real_parts()) < 1e-10);
        }
    }

    #[test]
    fn linearity_report() {
        let model = SshParams::open(4, 1.0, 0.0, 1.0);
        let p = plan(model, 0.0, 1e-4, 2.0, 0.1);
        assert!(linearity_check(&p, &[1.0, 2.0]).unwrap().passed);
        let big = plan(model, 0.0, 1.0, 2.0, 0.1);
        let r = linearity_check(&big, &[1.0, 25.0]).unwrap();
        assert!(!r.passed, "{r:?}");
        let s = locate_linearity_threshold(&p, 1.0, 1e4, 20).unwrap();
        let eta = 1e-4 * s;
        assert!(eta > 1e-3 && eta < 0.5, "{eta}");
        assert!(linearity_check(&p, &[0.5 * s, s]).unwrap().passed);
    }

    #[test]
    fn drive_scaled_twice() {
        let mut p = plan(SshParams::open(4, 1.0, 0.2, 0.0), PI / 2.0, 0.01, 3.0, 0.05);
        p.method = Method::Bosonic;
        let a = evolve_and_measure(&p).unwrap().real_parts();
        let b = evolve_and_measure(&p.with_field_scale(2.0)).unwrap().real_parts();
        let max = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dev = a.iter().zip(&b).map(|(x, y)| (2.0 * x - y).abs()).fold(0.0, f64::max);
        assert!(dev < 0.01 * max);
    }

    #[test]
    fn ring_response_stays_in_momentum_sector() {
        let model = SshParams::periodic(6, 1.0, 0.0, 0.3);
        let ks: Vec<f64> = (0..6).map(|j| 2.0 * PI * j as f64 / 6.0).collect();
        let mut p = plan(model, ks[1], 1e-3, 2.0, 0.1);
        p.method = Method::Bosonic;
        p.evolution = Evolution::Exact;
        let comps = momentum_components(&p, &ks).unwrap();
        let peak = |c: &Vec<C64>| c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let own = peak(&comps[1]);
        assert!(own > 1e-4);
        for j in [0, 2, 3, 4] {
            assert!(peak(&comps[j]) < 1e-8 * own, "k' index {j}: {}", peak(&comps[j]) / own);
        }
    }

    #[test]
    fn polarizability_conserves_charge() {
        let params = SshParams::periodic(10, 1.0, 0.0, 0.5);
        let field = DriveField::GaussianSinusoid {
            amplitude: 0.05,
            omega0: 1.5,
            sigma: 0.625,
            t0: 4.0,
        };
        let run = polarizability_run(&params, 0, &field, 10.0, 0.05, false).unwrap();
        for row in &run.dn {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        let q0 = run.momentum_trace(0.0).unwrap();
        assert!(q0.values.iter().all(|z| z.norm() < 1e-12));
    }
}
