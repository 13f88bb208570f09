//! Momentum-selective, position-selective and Hadamard-test runs of one model
//! under the same noise, compared through their per-momentum spectra.

use serde::{Deserialize, Serialize};

use crate::engine::{
    combine_momentum, hadamard_test_greens_with, position_selective_greens_with, response_trace_with, Backend,
    ExperimentPlan, Method,
};
use crate::error::{Error, Result};
use crate::noise::{snr_and_leakage_metrics, MetricsReport, NoiseModel, Noisy};
use crate::oracle::momentum_response;
use crate::program::derive_seed;
use crate::signal::{apply_damping, fourier_transform, ResponseTrace, Spectrum};
use crate::ssh::{build_ssh, SshParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSettings {
    pub eta: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Damping time applied before the Fourier transform.
    pub tau: f64,
    pub pad: usize,
    pub trajectories: usize,
    pub shots_per_traj: u64,
    /// Half-width around a peak frequency counted as the peak.
    pub window: f64,
}

impl Default for ComparisonSettings {
    fn default() -> Self {
        Self {
            eta: 0.04,
            t_max: 20.0,
            dt: 0.25,
            tau: 8.0,
            pad: 4,
            trajectories: 24,
            shots_per_traj: 1000,
            window: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMethod {
    MomentumSelective,
    PositionSelective,
    HadamardTest,
}

impl CompareMethod {
    pub const ALL: [CompareMethod; 3] = [
        CompareMethod::MomentumSelective,
        CompareMethod::PositionSelective,
        CompareMethod::HadamardTest,
    ];
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: CompareMethod,
    /// `L_k(t)` per momentum.
    #[serde(skip)]
    pub traces: Vec<ResponseTrace>,
    #[serde(skip)]
    pub spectra: Vec<Spectrum>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub momenta: Vec<f64>,
    /// Noiseless peak frequency of each momentum.
    pub peaks: Vec<f64>,
    pub noise: NoiseModel,
    pub seed: u64,
    pub methods: Vec<MethodResult>,
}

impl Comparison {
    pub fn result(&self, m: CompareMethod) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }

    /// momentum > position > Hadamard in median SNR.
    pub fn snr_ordered(&self) -> bool {
        let s: Vec<f64> = CompareMethod::ALL
            .iter()
            .filter_map(|m| self.result(*m).map(|r| r.metrics.median_snr))
            .collect();
        s.len() == 3 && s[0] > s[1] && s[1] > s[2]
    }

    pub fn hadamard_leaks_more(&self) -> bool {
        match (
            self.result(CompareMethod::HadamardTest),
            self.result(CompareMethod::MomentumSelective),
        ) {
            (Some(h), Some(m)) => h.metrics.median_leakage > m.metrics.median_leakage,
            _ => false,
        }
    }
}

/// `2 pi j / n` for `j = 0..n`.
pub fn momentum_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
        .collect()
}

fn spectrum(trace: &ResponseTrace, s: &ComparisonSettings) -> Result<Spectrum> {
    fourier_transform(&apply_damping(trace, s.tau)?, s.pad)
}

/// Strongest non-negative frequency of the exact `L_k(w)` on the same grid.
pub fn oracle_peaks(params: &SshParams, ks: &[f64], s: &ComparisonSettings) -> Result<Vec<f64>> {
    let m = build_ssh(params)?.single_particle;
    let steps = (s.t_max / s.dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * s.dt).collect();
    ks.iter()
        .map(|&k| {
            let tr = ResponseTrace::from_real(times.clone(), &momentum_response(&m, k, &times))?;
            let sp = spectrum(&tr, s)?;
            (0..sp.len())
                .filter(|&i| sp.omegas[i] >= 0.0)
                .max_by(|&a, &b| sp.values[a].norm().total_cmp(&sp.values[b].norm()))
                .map(|i| sp.omegas[i])
                .ok_or_else(|| Error::Numerical("empty spectrum".into()))
        })
        .collect()
}

/// Runs the three methods on the vacuum of `params` with every momentum of
/// the `2 pi j / n` grid, using the compressed backend and local drives.
pub fn three_method_comparison(
    params: &SshParams,
    noise: &NoiseModel,
    settings: &ComparisonSettings,
    seed: u64,
) -> Result<Comparison> {
    let n = params.n;
    let ks = momentum_grid(n);
    let peaks = oracle_peaks(params, &ks, settings)?;
    let exec = Noisy {
        model: *noise,
        trajectories: settings.trajectories,
        shots_per_traj: settings.shots_per_traj,
    };
    let shots = settings.trajectories as u64 * settings.shots_per_traj;
    let plan_for = |k: f64, method: Method, sub: u64| -> Result<ExperimentPlan> {
        let mut p = ExperimentPlan::momentum(*params, k, settings.eta, settings.t_max, settings.dt)?;
        p.backend = Backend::Compressed;
        p.local_drive = true;
        p.method = method;
        p.seed = derive_seed(seed, sub);
        p.shots = shots;
        Ok(p)
    };

    let mut methods = Vec::with_capacity(3);
    for (mi, method) in CompareMethod::ALL.into_iter().enumerate() {
        let base = 1000 * mi as u64;
        let traces: Vec<ResponseTrace> = match method {
            CompareMethod::MomentumSelective => ks
                .iter()
                .enumerate()
                .map(|(j, &k)| response_trace_with(&plan_for(k, Method::AuxiliaryParity, base + j as u64)?, &exec))
                .collect::<Result<_>>()?,
            CompareMethod::PositionSelective | CompareMethod::HadamardTest => {
                let per_site = if method == CompareMethod::PositionSelective {
                    position_selective_greens_with(&plan_for(0.0, Method::PositionSelective, base)?, &exec)?
                } else {
                    hadamard_test_greens_with(&plan_for(0.0, Method::HadamardTest, base)?, &exec)?
                };
                ks.iter()
                    .map(|&k| combine_momentum(&per_site, k))
                    .collect::<Result<_>>()?
            }
        };
        let spectra = traces
            .iter()
            .map(|t| spectrum(t, settings))
            .collect::<Result<Vec<_>>>()?;
        let metrics = snr_and_leakage_metrics(&spectra, &peaks, settings.window)?;
        methods.push(MethodResult {
            method,
            traces,
            spectra,
            metrics,
        });
    }
    Ok(Comparison {
        momenta: ks,
        peaks,
        noise: *noise,
        seed,
        methods,
    })
}
