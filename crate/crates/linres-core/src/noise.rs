//! Depolarizing noise by stochastic Pauli insertion on a linear qubit chain.
//!
//! Every gate is mapped to a list of noise events. A 1q event inserts one of
//! X, Y, Z with probability `p1`; a 2q event inserts one of the 15 non-identity
//! two-qubit Paulis with probability `p2`. Averaged over trajectories this is
//! exactly the depolarizing channel.
//!
//! Gate accounting:
//! * 1q rotation: one 1q event.
//! * weight-2 rotation or free-fermion block on neighbours: two entanglers
//!   (two 2q events on the pair) plus one 1q event on each qubit.
//! * controlled Pauli from the ancilla: the ancilla is swapped along the chain
//!   next to the farthest target and back (3 + 3 2q events per hop), then one
//!   2q event per target qubit. For a target at site `r` that is `6 r + 1`.
//!
//! Other gates (dense unitaries, weight >= 3 rotations, non-neighbour pairs)
//! are rejected: they have to be routed by the compiler first.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::engine::{response_trace_with, ExperimentPlan};
use crate::error::{Error, Result};
use crate::program::{derive_seed, sector_add, Body, Executor, Measured, Program, Readout};
use crate::signal::{ResponseTrace, Spectrum};
use crate::statevector::{Pauli, PauliString, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub p1: f64,
    pub p2: f64,
}

impl NoiseModel {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        let m = Self { p1, p2 };
        m.validate()?;
        Ok(m)
    }

    pub fn noiseless() -> Self {
        Self { p1: 0.0, p2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| *m)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::InvalidArgument(format!("unknown noise preset {name:?}; known: {}", names.join(", ")))
            })
    }
}

/// Shipped rate pairs: 0.1% single-qubit with 10% or 20% two-qubit noise, and
/// 1% / 10%.
pub const PRESETS: [(&str, NoiseModel); 4] = [
    ("noiseless", NoiseModel { p1: 0.0, p2: 0.0 }),
    ("p1_0.1_p2_10", NoiseModel { p1: 0.001, p2: 0.10 }),
    ("p1_0.1_p2_20", NoiseModel { p1: 0.001, p2: 0.20 }),
    ("p1_1_p2_10", NoiseModel { p1: 0.01, p2: 0.10 }),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    One(usize),
    Two(usize, usize),
}

/// Positions of the qubits on the chain. The ancilla, if any, sits next to
/// qubit 0; the other qubits keep their order.
#[derive(Debug, Clone)]
pub struct Layout {
    pos: Vec<usize>,
    at: Vec<usize>,
}

impl Layout {
    pub fn linear(n_qubits: usize, ancilla: Option<usize>) -> Result<Self> {
        let mut at: Vec<usize> = (0..n_qubits).filter(|q| Some(*q) != ancilla).collect();
        if let Some(a) = ancilla {
            if a >= n_qubits {
                return Err(Error::SiteOutOfRange { site: a, n: n_qubits });
            }
            at.insert(0, a);
        }
        let mut pos = vec![0; n_qubits];
        for (p, &q) in at.iter().enumerate() {
            pos[q] = p;
        }
        Ok(Self { pos, at })
    }

    pub fn of(program: &Program) -> Result<Self> {
        Self::linear(program.n_qubits(), program.ancilla)
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.pos[a].abs_diff(self.pos[b]) == 1
    }

    fn pair(&self, a: usize, b: usize, out: &mut Vec<Event>) -> Result<()> {
        if !self.adjacent(a, b) {
            return Err(Error::Unsupported(format!(
                "two-qubit gate on non-neighbouring qubits {a} and {b}"
            )));
        }
        out.extend([Event::Two(a, b), Event::Two(a, b), Event::One(a), Event::One(b)]);
        Ok(())
    }

    /// Noise events of one gate.
    pub fn events(&self, gate: &Gate) -> Result<Vec<Event>> {
        let mut out = Vec::new();
        match gate {
            Gate::Rotation(r) => match r.string().support()[..] {
                [] => {}
                [q] => out.push(Event::One(q)),
                [a, b] => self.pair(a, b, &mut out)?,
                _ => {
                    return Err(Error::Unsupported(format!(
                        "rotation about {} acts on more than two qubits",
                        r.string()
                    )))
                }
            },
            Gate::Block(b) => self.pair(b.site, b.site + 1, &mut out)?,
            Gate::ControlledPauli { control, target } => {
                let c = *control;
                let support = target.support();
                if support.contains(&c) {
                    return Err(Error::InvalidArgument("control qubit is also a target".into()));
                }
                let Some(far) = support.iter().map(|&q| self.pos[q].abs_diff(self.pos[c])).max() else {
                    return Ok(out);
                };
                let pc = self.pos[c];
                let toward = |h: usize| {
                    let p = if support.iter().any(|&q| self.pos[q] > pc) {
                        pc + h
                    } else {
                        pc - h
                    };
                    self.at[p]
                };
                if support.iter().any(|&q| self.pos[q] > pc) && support.iter().any(|&q| self.pos[q] < pc) {
                    return Err(Error::Unsupported("controlled Pauli with targets on both sides".into()));
                }
                // swap the control out to the neighbour of the farthest target and back
                for h in 1..far {
                    out.extend([Event::Two(c, toward(h)); 6]);
                }
                out.extend(support.iter().map(|&q| Event::Two(c, q)));
            }
            Gate::Dense(_) => {
                return Err(Error::Unsupported(
                    "dense unitaries cannot be decomposed for noise; use Trotter evolution".into(),
                ))
            }
        }
        Ok(out)
    }
}

/// Number of 1q and 2q noise events in one full run of `program`.
pub fn event_counts(program: &Program) -> Result<(usize, usize)> {
    let layout = Layout::of(program)?;
    let (mut one, mut two) = (0, 0);
    let mut count = |c: &Circuit| -> Result<()> {
        for g in c.gates() {
            for e in layout.events(g)? {
                match e {
                    Event::One(_) => one += 1,
                    Event::Two(..) => two += 1,
                }
            }
        }
        Ok(())
    };
    count(&program.prep)?;
    match &program.body {
        Body::Steps(s) => {
            s.iter().try_for_each(|c| count(c))?;
            // post is applied on a copy at every time point
            for _ in 0..=s.len() {
                count(&program.post)?;
            }
        }
        Body::PerTime(cs) => {
            for c in cs {
                count(c)?;
                count(&program.post)?;
            }
        }
    }
    Ok((one, two))
}

const ONE_Q: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

/// Samples the events of one gate and applies the drawn Paulis; returns how many were inserted.
pub fn inject(events: &[Event], model: &NoiseModel, rng: &mut impl Rng, psi: &mut StateVector) -> Result<usize> {
    let n = psi.n_qubits();
    let mut inserted = 0;
    for e in events {
        let ops = match *e {
            Event::One(q) => {
                if !rng.random_bool(model.p1) {
                    continue;
                }
                vec![(q, ONE_Q[rng.random_range(0..3)])]
            }
            Event::Two(a, b) => {
                if !rng.random_bool(model.p2) {
                    continue;
                }
                let i = rng.random_range(1..16);
                vec![(a, ALL[i / 4]), (b, ALL[i % 4])]
            }
        };
        inserted += 1;
        let ops: Vec<_> = ops.into_iter().filter(|(_, p)| *p != Pauli::I).collect();
        psi.apply_pauli(&PauliString::from_sparse(n, &ops)?)?;
    }
    Ok(inserted)
}

/// Executor averaging `trajectories` noise realizations, each read out with
/// `shots_per_traj` shots (exact expectations when zero).
#[derive(Debug, Clone, Copy)]
pub struct Noisy {
    pub model: NoiseModel,
    pub trajectories: usize,
    pub shots_per_traj: u64,
}

impl Noisy {
    fn trajectory(&self, program: &Program, layout: &Layout, seed: u64) -> Result<Measured> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shot_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
        let n = program.n_times();
        let mut out = Measured {
            mean: Vec::with_capacity(n),
            var: Vec::with_capacity(n),
        };
        program.run_with(
            &mut |g, psi| {
                g.apply(psi)?;
                if !self.model.is_noiseless() {
                    inject(&layout.events(g)?, &self.model, &mut rng, psi)?;
                }
                Ok(())
            },
            &mut |_, psi| {
                let (m, v) = program.readout.sampled(psi, self.shots_per_traj, &mut shot_rng)?;
                out.mean.push(m);
                out.var.push(v);
                Ok(())
            },
        )?;
        Ok(out)
    }
}

impl Executor for Noisy {
    fn execute(&self, program: &Program, seed: u64) -> Result<Measured> {
        self.model.validate()?;
        if self.trajectories == 0 {
            return Err(Error::InvalidArgument("need at least one trajectory".into()));
        }
        let layout = Layout::of(program)?;
        // reject unroutable gates up front, even when noiseless
        event_counts(program)?;
        let runs = (0..self.trajectories)
            .into_par_iter()
            .map(|t| self.trajectory(program, &layout, derive_seed(seed, t as u64)))
            .collect::<Result<Vec<_>>>()?;
        let tn = runs.len() as f64;
        let (nt, width) = (runs[0].mean.len(), program.readout.width());
        let mut out = Measured {
            mean: vec![vec![0.0; width]; nt],
            var: vec![vec![0.0; width]; nt],
        };
        for j in 0..nt {
            for q in 0..width {
                let mean = runs.iter().map(|r| r.mean[j][q]).sum::<f64>() / tn;
                out.mean[j][q] = mean;
                out.var[j][q] = if runs.len() > 1 {
                    runs.iter().map(|r| (r.mean[j][q] - mean).powi(2)).sum::<f64>() / (tn - 1.0) / tn
                } else {
                    runs[0].var[j][q]
                };
            }
        }
        Ok(out)
    }
}

/// Response trace of `plan` under `noise`: trajectory mean with its variance.
pub fn noisy_run(
    plan: &ExperimentPlan,
    noise: &NoiseModel,
    trajectories: usize,
    shots_per_traj: u64,
    seed: u64,
) -> Result<ResponseTrace> {
    let mut plan = plan.clone();
    plan.seed = seed;
    plan.shots = trajectories as u64 * shots_per_traj;
    let exec = Noisy {
        model: *noise,
        trajectories,
        shots_per_traj,
    };
    response_trace_with(&plan, &exec)
}

// ---- dense channel oracle ----

fn gate_matrix(g: &Gate, n: usize) -> Result<DMatrix<C64>> {
    let d = 1usize << n;
    let mut u = DMatrix::zeros(d, d);
    for b in 0..d {
        let mut psi = StateVector::basis(n, b);
        g.apply(&mut psi)?;
        for (i, a) in psi.amplitudes().iter().enumerate() {
            u[(i, b)] = *a;
        }
    }
    Ok(u)
}

fn pauli_matrix(n: usize, ops: &[(usize, Pauli)]) -> Result<DMatrix<C64>> {
    let ops: Vec<_> = ops.iter().copied().filter(|(_, p)| *p != Pauli::I).collect();
    Ok(PauliString::from_sparse(n, &ops)?.to_matrix())
}

fn depolarize(rho: &DMatrix<C64>, e: Event, model: &NoiseModel, n: usize) -> Result<DMatrix<C64>> {
    let (p, paulis) = match e {
        Event::One(q) => (
            model.p1,
            ONE_Q
                .iter()
                .map(|&a| pauli_matrix(n, &[(q, a)]))
                .collect::<Result<Vec<_>>>()?,
        ),
        Event::Two(a, b) => (
            model.p2,
            (1..16)
                .map(|i| pauli_matrix(n, &[(a, ALL[i / 4]), (b, ALL[i % 4])]))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    if p == 0.0 {
        return Ok(rho.clone());
    }
    let w = p / paulis.len() as f64;
    let mut out = rho * C64::new(1.0 - p, 0.0);
    for m in &paulis {
        out += m * rho * m * C64::new(w, 0.0);
    }
    Ok(out)
}

fn channel(rho: &DMatrix<C64>, c: &Circuit, layout: &Layout, model: &NoiseModel) -> Result<DMatrix<C64>> {
    let n = c.n_qubits();
    let mut rho = rho.clone();
    for g in c.gates() {
        let u = gate_matrix(g, n)?;
        rho = &u * rho * u.adjoint();
        for e in layout.events(g)? {
            rho = depolarize(&rho, e, model, n)?;
        }
    }
    Ok(rho)
}

fn readout_rho(readout: &Readout, rho: &DMatrix<C64>, n: usize) -> Result<Vec<f64>> {
    match readout {
        Readout::Operators(ops) => ops
            .iter()
            .map(|o| {
                o.terms()
                    .iter()
                    .map(|(c, p)| Ok(c * (p.to_matrix() * rho).trace().re))
                    .sum::<Result<f64>>()
            })
            .collect(),
        Readout::Sectors { n_sys, particles } => {
            let mut out = vec![0.0; 4];
            for b in 0..(1usize << n) {
                sector_add(&mut out, b, *n_sys, *particles, rho[(b, b)].re);
            }
            Ok(out)
        }
    }
}

/// Exact density-matrix evolution of `program` through the depolarizing
/// channels; `[time][quantity]`. Intended for a handful of qubits.
pub fn channel_oracle(program: &Program, model: &NoiseModel) -> Result<Vec<Vec<f64>>> {
    let n = program.n_qubits();
    if n > 6 {
        return Err(Error::Unsupported(format!("dense channel oracle on {n} qubits")));
    }
    let layout = Layout::of(program)?;
    let psi = program.psi0.amplitudes();
    let v = DMatrix::from_column_slice(psi.len(), 1, psi);
    let mut rho = channel(&(&v * v.adjoint()), &program.prep, &layout, model)?;
    let mut out = Vec::new();
    match &program.body {
        Body::Steps(steps) => {
            for j in 0..=steps.len() {
                if j > 0 {
                    rho = channel(&rho, &steps[j - 1], &layout, model)?;
                }
                let m = channel(&rho, &program.post, &layout, model)?;
                out.push(readout_rho(&program.readout, &m, n)?);
            }
        }
        Body::PerTime(cs) => {
            for c in cs {
                let m = channel(&channel(&rho, c, &layout, model)?, &program.post, &layout, model)?;
                out.push(readout_rho(&program.readout, &m, n)?);
            }
        }
    }
    Ok(out)
}

// ---- spectral metrics ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Peak height over the median off-peak magnitude, per momentum.
    pub snr: Vec<f64>,
    /// Weight at the other momenta's peak frequencies over the own peak, per momentum.
    pub leakage: Vec<f64>,
    pub median_snr: f64,
    pub median_leakage: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// SNR and cross-momentum leakage of per-momentum spectra, given each
/// momentum's expected peak frequency. Bins within `window` of `+-peak` count
/// as the peak; other momenta whose peaks fall inside it are not leakage.
pub fn snr_and_leakage_metrics(spectra: &[Spectrum], peaks: &[f64], window: f64) -> Result<MetricsReport> {
    if spectra.len() != peaks.len() {
        return Err(Error::DimensionMismatch {
            expected: spectra.len(),
            got: peaks.len(),
        });
    }
    let near = |w: f64, c: f64| (w.abs() - c.abs()).abs() <= window;
    let mut snr = Vec::with_capacity(spectra.len());
    let mut leakage = Vec::with_capacity(spectra.len());
    for (s, &wk) in spectra.iter().zip(peaks) {
        let mag = |i: usize| s.values[i].norm();
        let own = (0..s.len())
            .filter(|&i| near(s.omegas[i], wk))
            .map(mag)
            .fold(0.0, f64::max);
        let off: Vec<f64> = (0..s.len()).filter(|&i| !near(s.omegas[i], wk)).map(mag).collect();
        snr.push(own / median(&off));
        let leak: f64 = peaks
            .iter()
            .filter(|&&w| !near(w, wk))
            .map(|&w| mag(s.nearest(w.abs())))
            .sum();
        leakage.push(leak / own);
    }
    Ok(MetricsReport {
        median_snr: median(&snr),
        median_leakage: median(&leakage),
        snr,
        leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermion::density_operator;
    use crate::statevector::PauliRotation;
    use crate::tfxy::TfxyBlock;
    use std::sync::Arc;

    fn rot(s: &str, a: f64) -> Gate {
        Gate::Rotation(PauliRotation::new(PauliString::parse(1.0, s).unwrap(), a).unwrap())
    }

    fn small_program(n: usize) -> Program {
        let mut step = Circuit::new(n);
        step.push(rot(&format!("X{}", "I".repeat(n - 1)), 0.3)).unwrap();
        for q in 0..n - 1 {
            step.push(Gate::Block(TfxyBlock::new(q, [0.2, -0.1, 0.4, 0.3, 0.1, 0.5])))
                .unwrap();
        }
        Program {
            psi0: StateVector::zero(n),
            prep: Circuit::new(n),
            body: Body::Steps(vec![Arc::new(step); 3]),
            post: Circuit::new(n),
            readout: Readout::Operators((0..n).map(|r| density_operator(r, n).unwrap()).collect()),
            ancilla: None,
        }
    }

    #[test]
    fn validation_and_presets() {
        assert!(NoiseModel::new(-0.1, 0.0).is_err());
        assert!(NoiseModel::new(0.0, 1.5).is_err());
        assert_eq!(NoiseModel::preset("p1_0.1_p2_20").unwrap().p2, 0.20);
        assert!(NoiseModel::preset("nope").is_err());
    }

    #[test]
    fn gate_accounting() {
        let l = Layout::linear(4, None).unwrap();
        assert_eq!(l.events(&rot("IZII", 0.1)).unwrap(), vec![Event::One(1)]);
        assert_eq!(l.events(&rot("IXXI", 0.1)).unwrap().len(), 4);
        assert!(l.events(&rot("XIXI", 0.1)).is_err());
        assert!(l.events(&rot("XXXI", 0.1)).is_err());
        assert!(l.events(&Gate::Dense(Arc::new(DMatrix::identity(16, 16)))).is_err());
        // ancilla as qubit 4, next to qubit 0
        let l = Layout::linear(5, Some(4)).unwrap();
        for r in 0..4 {
            let mut s = ['I'; 5];
            s[r] = 'X';
            let target = PauliString::parse(1.0, &s.iter().collect::<String>()).unwrap();
            let ev = l.events(&Gate::ControlledPauli { control: 4, target }).unwrap();
            assert_eq!(ev.len(), 6 * r + 1);
            assert!(ev.iter().all(|e| matches!(e, Event::Two(4, _))));
        }
    }

    #[test]
    fn noiseless_equals_ideal() {
        let p = small_program(3);
        let noisy = Noisy {
            model: NoiseModel::noiseless(),
            trajectories: 3,
            shots_per_traj: 0,
        };
        let a = noisy.execute(&p, 9).unwrap();
        let b = crate::program::Ideal::default().execute(&p, 9).unwrap();
        for (x, y) in a.mean.iter().zip(&b.mean) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn full_depolarization_kills_polarization() {
        let mut step = Circuit::new(1);
        step.push(rot("Z", 0.0)).unwrap();
        let p = Program {
            psi0: StateVector::zero(1),
            prep: Circuit::new(1),
            body: Body::Steps(vec![Arc::new(step)]),
            post: Circuit::new(1),
            readout: Readout::Operators(vec![crate::fermion::DriveOperator::new(
                1,
                vec![(1.0, PauliString::parse(1.0, "Z").unwrap())],
            )
            .unwrap()]),
            ancilla: None,
        };
        // p1 = 3/4 spreads weight 1/4 over I, X, Y, Z: the fully mixed state.
        // p1 = 1 only draws X, Y, Z, two of which flip |0>: <Z> = -1/3.
        for (p1, expect) in [(0.75, 0.0), (1.0, -1.0 / 3.0)] {
            let noisy = Noisy {
                model: NoiseModel::new(p1, 0.0).unwrap(),
                trajectories: 4000,
                shots_per_traj: 1,
            };
            let m = noisy.execute(&p, 3).unwrap();
            let (mean, var) = (m.mean[1][0], m.var[1][0]);
            assert!((mean - expect).abs() < 3.0 * var.sqrt(), "{p1}: {mean} {var}");
            assert_eq!(m.mean[0][0], 1.0);
        }
    }

    #[test]
    fn insertion_count_is_binomial() {
        use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete};
        let events: Vec<Event> = (0..40).map(|q| Event::One(q % 3)).collect();
        let model = NoiseModel::new(0.15, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let runs = 4000;
        let mut hist = vec![0usize; 41];
        for _ in 0..runs {
            let mut psi = StateVector::zero(3);
            hist[inject(&events, &model, &mut rng, &mut psi).unwrap()] += 1;
        }
        // chi-square against Binomial(40, 0.15), pooling bins with expectation < 5
        let b = statrs::distribution::Binomial::new(0.15, 40).unwrap();
        let (mut chi2, mut bins) = (0.0, 0usize);
        let (mut tail_o, mut tail_e) = (0.0, 0.0);
        for (k, &o) in hist.iter().enumerate() {
            let e = b.pmf(k as u64) * runs as f64;
            if e >= 5.0 {
                chi2 += (o as f64 - e).powi(2) / e;
                bins += 1;
            } else {
                tail_o += o as f64;
                tail_e += e;
            }
        }
        chi2 += (tail_o - tail_e).powi(2) / tail_e;
        let limit = ChiSquared::new(bins as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < limit, "chi2 {chi2} limit {limit}");
    }

    #[test]
    fn trajectories_match_channel_oracle() {
        let p = small_program(3);
        let model = NoiseModel::new(0.05, 0.1).unwrap();
        let oracle = channel_oracle(&p, &model).unwrap();
        let noisy = Noisy {
            model,
            trajectories: 3000,
            shots_per_traj: 0,
        };
        let m = noisy.execute(&p, 5).unwrap();
        for (j, row) in oracle.iter().enumerate() {
            for (q, o) in row.iter().enumerate() {
                let (mean, sd) = (m.mean[j][q], m.var[j][q].sqrt());
                assert!(
                    (mean - o).abs() <= 3.0 * sd + 1e-12,
                    "t{j} q{q}: {mean} vs {o} (sd {sd})"
                );
            }
        }
        // the oracle without noise is the ideal run
        let clean = channel_oracle(&p, &NoiseModel::noiseless()).unwrap();
        let ideal = crate::program::Ideal::default().execute(&p, 0).unwrap();
        for (a, b) in clean.iter().zip(&ideal.mean) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = small_program(3);
        let noisy = Noisy {
            model: NoiseModel::new(0.01, 0.1).unwrap(),
            trajectories: 20,
            shots_per_traj: 50,
        };
        assert_eq!(noisy.execute(&p, 42).unwrap(), noisy.execute(&p, 42).unwrap());
        assert_ne!(noisy.execute(&p, 42).unwrap(), noisy.execute(&p, 43).unwrap());
    }

    fn line_spectrum(peak: f64, noise: &[f64]) -> Spectrum {
        let omegas: Vec<f64> = (-100..100).map(|i| i as f64 * 0.05).collect();
        let values = omegas
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let l = 0.2 / ((w.abs() - peak).powi(2) + 0.01);
                C64::new(l + noise.get(i).copied().unwrap_or(0.0), 0.0)
            })
            .collect();
        Spectrum::new(omegas, values).unwrap()
    }

    #[test]
    fn clean_peaks_have_high_snr_and_no_leakage() {
        let peaks = [1.0, 2.0, 3.0];
        let spectra: Vec<Spectrum> = peaks.iter().map(|&p| line_spectrum(p, &[])).collect();
        let r = snr_and_leakage_metrics(&spectra, &peaks, 0.15).unwrap();
        assert!(r.snr.iter().all(|s| *s > 50.0), "{:?}", r.snr);
        assert!(r.leakage.iter().all(|l| *l < 0.05), "{:?}", r.leakage);
    }

    #[test]
    fn white_noise_has_low_snr() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let omegas: Vec<f64> = (-100..100).map(|i| i as f64 * 0.05).collect();
        let values: Vec<C64> = omegas
            .iter()
            .map(|_| {
                let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                C64::new(a, b)
            })
            .collect();
        let s = Spectrum::new(omegas, values).unwrap();
        let r = snr_and_leakage_metrics(&[s], &[1.7], 0.15).unwrap();
        assert!(r.snr[0] < 5.0, "{}", r.snr[0]);
    }
}
