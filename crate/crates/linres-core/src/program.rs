//! Compiled experiments: an initial state, circuits per time point and a readout.
//!
//! The engine compiles every method to one or more [`Program`]s; an [`Executor`]
//! runs them, either ideally or with noise.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::fermion::DriveOperator;
use crate::statevector::{PauliString, StateVector};

/// How the state reaches each time point.
#[derive(Debug, Clone)]
pub enum Body {
    /// `steps[j]` takes time point `j` to `j + 1`.
    Steps(Vec<Arc<Circuit>>),
    /// Independent circuit for each time point, applied to the prepared state.
    PerTime(Vec<Circuit>),
}

/// Quantities read out at every time point.
#[derive(Debug, Clone)]
pub enum Readout {
    /// Expectation value of each operator.
    Operators(Vec<DriveOperator>),
    /// Hamming-weight statistics of the first `n_sys` qubits around `particles`:
    /// `[P(N-1), P(N), P(N+1), P(N and qubit 0 set)]`.
    Sectors { n_sys: usize, particles: usize },
}

#[derive(Debug, Clone)]
pub struct Program {
    pub psi0: StateVector,
    pub prep: Circuit,
    pub body: Body,
    /// Applied to a copy of the state just before readout.
    pub post: Circuit,
    pub readout: Readout,
    /// Ancilla qubit, placed next to qubit 0 on a linear chain.
    pub ancilla: Option<usize>,
}

/// Per time point, per readout quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl Measured {
    /// `self - other`, variances added.
    pub fn minus(&self, other: &Measured) -> Result<Measured> {
        if self.mean.len() != other.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: other.mean.len(),
            });
        }
        let zip = |a: &[Vec<f64>], b: &[Vec<f64>], f: fn(f64, f64) -> f64| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect())
                .collect()
        };
        Ok(Measured {
            mean: zip(&self.mean, &other.mean, |a, b| a - b),
            var: zip(&self.var, &other.var, |a, b| a + b),
        })
    }

    /// Column `q` over time.
    pub fn column(&self, q: usize) -> Vec<f64> {
        self.mean.iter().map(|row| row[q]).collect()
    }

    pub fn var_column(&self, q: usize) -> Vec<f64> {
        self.var.iter().map(|row| row[q]).collect()
    }
}

impl Program {
    pub fn n_qubits(&self) -> usize {
        self.psi0.n_qubits()
    }

    pub fn n_times(&self) -> usize {
        match &self.body {
            Body::Steps(s) => s.len() + 1,
            Body::PerTime(c) => c.len(),
        }
    }

    /// All gates in execution order for time point `j` (for gate counting).
    pub fn gate_count(&self, j: usize) -> usize {
        let body = match &self.body {
            Body::Steps(s) => s[..j].iter().map(|c| c.len()).sum(),
            Body::PerTime(c) => c[j].len(),
        };
        self.prep.len() + body + self.post.len()
    }

    /// Runs the program, routing every gate through `apply` and handing the
    /// post-processed state of each time point to `visit`.
    pub fn run_with(
        &self,
        apply: &mut dyn FnMut(&Gate, &mut StateVector) -> Result<()>,
        visit: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()> {
        let run = |c: &Circuit, psi: &mut StateVector, apply: &mut dyn FnMut(&Gate, &mut StateVector) -> Result<()>| {
            c.gates().iter().try_for_each(|g| apply(g, psi))
        };
        let mut psi = self.psi0.clone();
        run(&self.prep, &mut psi, apply)?;
        match &self.body {
            Body::Steps(steps) => {
                for j in 0..=steps.len() {
                    if j > 0 {
                        run(&steps[j - 1], &mut psi, apply)?;
                    }
                    let mut m = psi.clone();
                    run(&self.post, &mut m, apply)?;
                    visit(j, &m)?;
                }
            }
            Body::PerTime(circuits) => {
                for (j, c) in circuits.iter().enumerate() {
                    let mut m = psi.clone();
                    run(c, &mut m, apply)?;
                    run(&self.post, &mut m, apply)?;
                    visit(j, &m)?;
                }
            }
        }
        Ok(())
    }
}

impl Readout {
    pub fn width(&self) -> usize {
        match self {
            Readout::Operators(ops) => ops.len(),
            Readout::Sectors { .. } => 4,
        }
    }

    pub fn exact(&self, psi: &StateVector) -> Result<Vec<f64>> {
        match self {
            Readout::Operators(ops) => ops.iter().map(|o| o.expectation(psi)).collect(),
            Readout::Sectors { n_sys, particles } => {
                let probs = psi.probabilities();
                let mut out = vec![0.0; 4];
                for (b, p) in probs.iter().enumerate() {
                    sector_add(&mut out, b, *n_sys, *particles, *p);
                }
                Ok(out)
            }
        }
    }

    /// Estimates from `shots` projective measurements, with their variances.
    pub fn sampled(&self, psi: &StateVector, shots: u64, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        if shots == 0 {
            return Ok((self.exact(psi)?, vec![0.0; self.width()]));
        }
        let s = shots as f64;
        match self {
            Readout::Operators(ops) => {
                let mut means = Vec::with_capacity(ops.len());
                let mut vars = Vec::with_capacity(ops.len());
                for op in ops {
                    let (mut m, mut v) = (0.0, 0.0);
                    for (c, p) in op.terms() {
                        let (pm, pv) = sample_pauli(psi, p, shots, rng)?;
                        m += c * pm;
                        v += c * c * pv;
                    }
                    means.push(m);
                    vars.push(v);
                }
                Ok((means, vars))
            }
            Readout::Sectors { n_sys, particles } => {
                let probs = psi.probabilities();
                let dist =
                    WeightedIndex::new(&probs).map_err(|e| Error::Numerical(format!("cannot sample state: {e}")))?;
                let mut counts = vec![0.0; 4];
                for _ in 0..shots {
                    sector_add(&mut counts, dist.sample(rng), *n_sys, *particles, 1.0);
                }
                let means: Vec<f64> = counts.iter().map(|c| c / s).collect();
                let vars = means.iter().map(|p| p * (1.0 - p) / s).collect();
                Ok((means, vars))
            }
        }
    }
}

pub(crate) fn sector_add(out: &mut [f64], b: usize, n_sys: usize, particles: usize, w: f64) {
    let sys = b & ((1usize << n_sys) - 1);
    let weight = sys.count_ones() as usize;
    if weight + 1 == particles {
        out[0] += w;
    } else if weight == particles {
        out[1] += w;
        if sys & 1 == 1 {
            out[3] += w;
        }
    } else if weight == particles + 1 {
        out[2] += w;
    }
}

/// Shot estimate of a Hermitian Pauli string: `(mean, variance of the mean)`.
fn sample_pauli(psi: &StateVector, p: &PauliString, shots: u64, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let exact = psi.expectation(p)?;
    if p.weight() == 0 {
        return Ok((exact, 0.0));
    }
    let sign = p.coefficient().re.signum();
    let plus = ((1.0 + sign * exact) / 2.0).clamp(0.0, 1.0);
    let hits = Binomial::new(shots, plus)
        .map_err(|e| Error::Numerical(format!("binomial sampling failed: {e}")))?
        .sample(rng) as f64;
    let s = shots as f64;
    let m = sign * (2.0 * hits / s - 1.0);
    Ok((m, (1.0 - m * m).max(0.0) / s))
}

/// Runs programs and returns per-time readouts.
pub trait Executor: Sync {
    fn execute(&self, program: &Program, seed: u64) -> Result<Measured>;
}

/// Noiseless execution; exact expectations when `shots == 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ideal {
    pub shots: u64,
}

impl Executor for Ideal {
    fn execute(&self, program: &Program, seed: u64) -> Result<Measured> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = program.n_times();
        let mut out = Measured {
            mean: Vec::with_capacity(n),
            var: Vec::with_capacity(n),
        };
        program.run_with(&mut |g, psi| g.apply(psi), &mut |_, psi| {
            let (m, v) = program.readout.sampled(psi, self.shots, &mut rng)?;
            out.mean.push(m);
            out.var.push(v);
            Ok(())
        })?;
        Ok(out)
    }
}

/// Independent, reproducible seed for sub-run `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
