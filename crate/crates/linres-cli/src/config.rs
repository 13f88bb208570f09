//! Run configuration: a TOML file with one section per experiment.
//!
//! Every field is required unless marked optional, so the file (echoed into the
//! summary) is the complete description of a run.

use std::path::PathBuf;

use linres_core::compare::ComparisonSettings;
use linres_core::engine::{Backend, Evolution, Method};
use linres_core::field::DriveField;
use linres_core::noise::NoiseModel;
use linres_core::ssh::{Boundary, MuConvention, SshParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Greens,
    Polarizability,
    Compare,
    Compress,
    Oracle,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Greens => "greens",
            Experiment::Polarizability => "polarizability",
            Experiment::Compare => "compare",
            Experiment::Compress => "compress",
            Experiment::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free text; shipped configs name the figure they reproduce here.
    pub comment: String,
    pub experiment: Experiment,
    pub seed: u64,
    /// Output directory.
    pub output: PathBuf,
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greens: Option<GreensConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polarizability: Option<PolarizabilityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compress: Option<CompressConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

/// Chain parameters; every experiment is repeated for each dimerization in `deltas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub v_nn: f64,
    pub deltas: Vec<f64>,
    pub mu: f64,
    pub boundary: Boundary,
    pub mu_convention: MuConvention,
}

impl ModelConfig {
    pub fn params(&self, delta: f64) -> SshParams {
        SshParams {
            n: self.n,
            v_nn: self.v_nn,
            delta,
            mu: self.mu,
            boundary: self.boundary,
            mu_convention: self.mu_convention,
        }
    }

    /// `2 pi j / n`.
    pub fn momentum(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreensConfig {
    pub method: Method,
    pub backend: Backend,
    pub evolution: Evolution,
    /// Momenta `2 pi j / n` to drive, as indices `j`.
    pub momentum_indices: Vec<usize>,
    /// Kick area `eta dt` of the delta pulse.
    pub eta: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Damping time before the Fourier transform.
    pub tau: f64,
    pub pad: usize,
    /// Shots per time point in total; 0 gives exact expectations.
    pub shots: u64,
    /// Named noise preset, see `linres_core::noise::PRESETS`.
    pub noise: String,
    /// Noise trajectories; `shots` is split evenly across them.
    pub trajectories: usize,
    pub local_drive: bool,
    pub prune: bool,
    /// Peaks below this fraction of the strongest one are not reported.
    pub peak_min_height: f64,
    /// Optional: fail with exit code 3 when the strongest peak of any momentum is
    /// further than this from a single-particle energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizabilityConfig {
    /// Site carrying the potential `h(t) n_site`.
    pub site: usize,
    pub field: DriveField,
    pub t_max: f64,
    pub dt: f64,
    pub tau: f64,
    pub pad: usize,
    /// Bins with `|h(w)|^2 < mask * max |h|^2` get no value.
    pub mask: f64,
    /// Average the runs with `+h` and `-h` to cancel even orders.
    pub antisymmetrize: bool,
    pub momentum_indices: Vec<usize>,
    /// Optional: fail with exit code 3 when any valid bin differs from the Lindhard
    /// sum by more than this fraction of its maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lindhard_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub noise: String,
    pub settings: ComparisonSettings,
    /// Fail with exit code 3 unless the SNR and leakage orderings hold for this seed.
    pub require_ordering: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressConfig {
    pub steps: usize,
    pub dt: f64,
    pub measured_qubit: usize,
    /// Dense unitaries are only built up to this many sites.
    pub max_dense_sites: usize,
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub momentum_indices: Vec<usize>,
    pub t_max: f64,
    pub dt: f64,
    pub tau: f64,
    pub pad: usize,
    pub peak_min_height: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
            path: ".".into(),
            message: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Built-in configuration for `linres compress --n N --steps S` without a file.
    pub fn compress_default(n: usize, steps: usize) -> Self {
        Self {
            comment: format!("compression report for an open chain of {n} sites after {steps} Trotter steps"),
            experiment: Experiment::Compress,
            seed: 0,
            output: PathBuf::from("out/compress"),
            model: ModelConfig {
                n,
                v_nn: 1.0,
                deltas: vec![0.4],
                mu: 5.0,
                boundary: Boundary::Open,
                mu_convention: MuConvention::Standard,
            },
            greens: None,
            polarizability: None,
            compare: None,
            compress: Some(CompressConfig {
                steps,
                dt: 0.1,
                measured_qubit: 0,
                max_dense_sites: 10,
                residual_tolerance: 1e-8,
            }),
            oracle: None,
        }
    }

    /// Checks that go beyond the schema: the section matching `experiment` is present,
    /// no other section is, and the numbers make sense.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: String| CliError::Config {
            path: path.into(),
            message,
        };
        let present = [
            (Experiment::Greens, self.greens.is_some()),
            (Experiment::Polarizability, self.polarizability.is_some()),
            (Experiment::Compare, self.compare.is_some()),
            (Experiment::Compress, self.compress.is_some()),
            (Experiment::Oracle, self.oracle.is_some()),
        ];
        for (exp, here) in present {
            if exp == self.experiment && !here {
                return Err(bad(
                    exp.name(),
                    format!("experiment {} needs a [{}] section", exp.name(), exp.name()),
                ));
            }
            if exp != self.experiment && here {
                return Err(bad(
                    exp.name(),
                    format!(
                        "section [{}] given for experiment {}",
                        exp.name(),
                        self.experiment.name()
                    ),
                ));
            }
        }
        if self.model.deltas.is_empty() {
            return Err(bad("model.deltas", "need at least one value".into()));
        }
        for &d in &self.model.deltas {
            self.model
                .params(d)
                .validate()
                .map_err(|e| bad("model", e.to_string()))?;
        }
        let n = self.model.n;
        let check_momenta = |path: &str, js: &[usize]| {
            if js.is_empty() {
                return Err(bad(path, "need at least one momentum".into()));
            }
            match js.iter().find(|&&j| j >= n) {
                Some(j) => Err(bad(path, format!("index {j} out of range for n = {n}"))),
                None => Ok(()),
            }
        };
        if let Some(g) = &self.greens {
            check_momenta("greens.momentum_indices", &g.momentum_indices)?;
            self.noise_model("greens.noise", &g.noise)?;
            if g.trajectories == 0 {
                return Err(bad("greens.trajectories", "need at least one trajectory".into()));
            }
            if g.shots % g.trajectories as u64 != 0 {
                return Err(bad(
                    "greens.shots",
                    format!("{} shots do not split over {} trajectories", g.shots, g.trajectories),
                ));
            }
        }
        if let Some(p) = &self.polarizability {
            check_momenta("polarizability.momentum_indices", &p.momentum_indices)?;
            if p.site >= n {
                return Err(bad(
                    "polarizability.site",
                    format!("site {} out of range for n = {n}", p.site),
                ));
            }
            p.field
                .validate()
                .map_err(|e| bad("polarizability.field", e.to_string()))?;
        }
        if let Some(c) = &self.compare {
            self.noise_model("compare.noise", &c.noise)?;
        }
        if let Some(c) = &self.compress {
            if self.model.boundary != Boundary::Open {
                return Err(bad("model.boundary", "compression handles open chains only".into()));
            }
            if c.measured_qubit >= n {
                return Err(bad(
                    "compress.measured_qubit",
                    format!("qubit {} out of range for n = {n}", c.measured_qubit),
                ));
            }
        }
        if let Some(o) = &self.oracle {
            check_momenta("oracle.momentum_indices", &o.momentum_indices)?;
        }
        Ok(())
    }

    pub fn noise_model(&self, path: &str, name: &str) -> Result<NoiseModel, CliError> {
        NoiseModel::preset(name).map_err(|e| CliError::Config {
            path: path.into(),
            message: e.to_string(),
        })
    }
}
