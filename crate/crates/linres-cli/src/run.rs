//! Experiment runners. Each writes its data files through [`Outputs`] and returns
//! metadata plus verification checks for the summary.

use std::fs;
use std::path::{Path, PathBuf};

use linres_core::compare::{three_method_comparison, CompareMethod};
use linres_core::engine::{
    drive_spectrum, polarizability_run, polarizability_spectrum, response_trace_with, ExperimentPlan,
};
use linres_core::linalg::phase_distance;
use linres_core::noise::Noisy;
use linres_core::oracle::{
    band_gap, lindhard_polarizability, momentum_response, ring_energies, single_particle_energies,
};
use linres_core::program::{derive_seed, Executor, Ideal};
use linres_core::signal::{apply_damping, fourier_transform, positive_peaks, Peak, ResponseTrace, Spectrum};
use linres_core::ssh::{build_ssh, Boundary, SshParams};
use linres_core::tfxy::{compress, lightcone_prune, trotter_circuit};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;

/// Files written under one output directory, in write order.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable output");
        text.push('\n');
        self.write(rel, &text)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: String, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn holds(name: String, ok: bool) -> Self {
        Self {
            name,
            value: ok as u8 as f64,
            tolerance: 1.0,
            passed: ok,
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    tool: &'static str,
    cli_version: &'static str,
    core_version: &'static str,
    experiment: &'static str,
    config_sha256: String,
    config: &'a RunConfig,
    outputs: &'a [String],
    checks: &'a [Check],
    metadata: Value,
}

#[derive(Serialize)]
struct PeakRow {
    delta: f64,
    k_index: usize,
    k: f64,
    omega_peak: f64,
    height: f64,
    width: f64,
}

fn peak_rows(delta: f64, j: usize, k: f64, peaks: &[Peak]) -> impl Iterator<Item = PeakRow> + '_ {
    peaks.iter().map(move |p| PeakRow {
        delta,
        k_index: j,
        k,
        omega_peak: p.omega,
        height: p.height,
        width: p.width,
    })
}

fn spectrum_of(trace: &ResponseTrace, tau: f64, pad: usize) -> Result<Spectrum, CliError> {
    Ok(fourier_transform(&apply_damping(trace, tau)?, pad)?)
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("serializable config");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs `config` and writes everything into `config.output`. Verification failures
/// are reported after all files, the summary included, are written.
pub fn run(config: &RunConfig) -> Result<Vec<String>, CliError> {
    config.validate()?;
    let mut out = Outputs::new(&config.output)?;
    let (metadata, checks) = match config.experiment {
        Experiment::Greens => greens(config, &mut out)?,
        Experiment::Polarizability => polarizability(config, &mut out)?,
        Experiment::Compare => compare(config, &mut out)?,
        Experiment::Compress => compression(config, &mut out)?,
        Experiment::Oracle => oracle(config, &mut out)?,
    };
    let files = out.files.clone();
    out.write_json(
        "summary.json",
        &Summary {
            tool: "linres",
            cli_version: env!("CARGO_PKG_VERSION"),
            core_version: linres_core::VERSION,
            experiment: config.experiment.name(),
            config_sha256: config_hash(config),
            config,
            outputs: &files,
            checks: &checks,
            metadata,
        },
    )?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} = {:.3e} (tolerance {:.3e})", c.name, c.value, c.tolerance))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Verification(failed.join("; ")));
    }
    Ok(out.files)
}

type Report = (Value, Vec<Check>);

fn deltas(config: &RunConfig) -> impl Iterator<Item = (usize, f64, SshParams)> + '_ {
    config
        .model
        .deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| (i, d, config.model.params(d)))
}

/// Energies a momentum-`k` peak may sit at: the ring bands, or every level of an open chain.
fn reference_energies(params: &SshParams, k: f64) -> Result<Vec<f64>, CliError> {
    Ok(match params.boundary {
        Boundary::Periodic => ring_energies(params, k),
        Boundary::Open => single_particle_energies(params)?,
    })
}

fn greens(config: &RunConfig, out: &mut Outputs) -> Result<Report, CliError> {
    let g = config.greens.as_ref().expect("validated");
    let noise = config.noise_model("greens.noise", &g.noise)?;
    // build and check every plan before running any
    let mut plans = Vec::new();
    for (di, delta, params) in deltas(config) {
        for &j in &g.momentum_indices {
            let k = config.model.momentum(j);
            let mut p = ExperimentPlan::momentum(params, k, g.eta, g.t_max, g.dt)?;
            p.method = g.method;
            p.backend = g.backend;
            p.evolution = g.evolution;
            p.shots = g.shots;
            p.local_drive = g.local_drive;
            p.prune = g.prune;
            p.seed = derive_seed(config.seed, (di * config.model.n + j) as u64);
            p.validate().map_err(|e| CliError::Config {
                path: "greens".into(),
                message: e.to_string(),
            })?;
            plans.push((di, delta, j, k, p));
        }
    }
    let exec: Box<dyn Executor> = if noise.is_noiseless() {
        Box::new(Ideal { shots: g.shots })
    } else {
        Box::new(Noisy {
            model: noise,
            trajectories: g.trajectories,
            shots_per_traj: g.shots / g.trajectories as u64,
        })
    };
    let results = plans
        .par_iter()
        .map(|(_, _, _, _, p)| {
            let trace = response_trace_with(p, exec.as_ref())?;
            let spec = spectrum_of(&trace, g.tau, g.pad)?;
            Ok((trace, spec))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for ((di, delta, j, k, p), (trace, spec)) in plans.iter().zip(&results) {
        out.write(&format!("delta{di}/k{j}_trace.csv"), &trace.to_csv())?;
        out.write(&format!("delta{di}/k{j}_spectrum.csv"), &spec.to_csv())?;
        let peaks = positive_peaks(spec, g.peak_min_height);
        if let Some(top) = peaks.first() {
            let miss = reference_energies(&p.model, *k)?
                .iter()
                .map(|e| (top.omega - e.abs()).abs())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(miss);
        } else {
            worst = f64::INFINITY;
        }
        rows.extend(peak_rows(*delta, *j, *k, &peaks));
    }
    out.write_json("peaks.json", &rows)?;
    let checks = g
        .peak_tolerance
        .map(|tol| {
            vec![Check::at_most(
                "max distance of strongest peak to a single-particle energy".into(),
                worst,
                tol,
            )]
        })
        .unwrap_or_default();
    let gaps = deltas(config)
        .map(|(_, d, p)| Ok(json!({ "delta": d, "bulk_gap": band_gap(&p)?.bulk })))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((json!({ "oracle_gaps": gaps, "worst_peak_miss": worst }), checks))
}

/// Contiguous frequency ranges whose bins are valid.
fn valid_bands(spec: &Spectrum) -> Vec<[f64; 2]> {
    let mut bands = Vec::new();
    let mut start = None;
    for i in 0..=spec.len() {
        let valid = i < spec.len() && spec.valid[i];
        match (valid, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                bands.push([spec.omegas[s], spec.omegas[i - 1]]);
                start = None;
            }
            _ => {}
        }
    }
    bands
}

fn polarizability(config: &RunConfig, out: &mut Outputs) -> Result<Report, CliError> {
    let p = config.polarizability.as_ref().expect("validated");
    let mut meta = Vec::new();
    let mut worst: f64 = 0.0;
    for (di, delta, params) in deltas(config) {
        let run = polarizability_run(&params, p.site, &p.field, p.t_max, p.dt, p.antisymmetrize)?;
        // bins the mask keeps: the drive carries at least `mask` of its peak power there
        let mut h = drive_spectrum(&p.field, p.dt, run.times.len() - 1, p.tau, p.pad)?;
        let hmax = h.values.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let keep: Vec<bool> = h.values.iter().map(|z| z.norm_sqr() >= p.mask * hmax).collect();
        h.valid = keep;
        out.write(&format!("delta{di}/drive_spectrum.csv"), &h.to_csv())?;
        for &j in &p.momentum_indices {
            let q = config.model.momentum(j);
            let chi = polarizability_spectrum(&run, q, p.tau, p.pad, p.mask)?;
            let lind = lindhard_polarizability(&params, p.site, &[q], &chi.omegas, 1.0 / p.tau)?.remove(0);
            out.write(&format!("delta{di}/q{j}_trace.csv"), &run.momentum_trace(q)?.to_csv())?;
            out.write(&format!("delta{di}/q{j}_spectrum.csv"), &chi.to_csv())?;
            out.write(
                &format!("delta{di}/q{j}_lindhard.csv"),
                &Spectrum::new(chi.omegas.clone(), lind.clone())?.to_csv(),
            )?;
            let scale = lind.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if scale > 1e-12 {
                for i in 0..chi.len() {
                    if let Some(z) = chi.value(i) {
                        worst = worst.max((z - lind[i]).norm() / scale);
                    }
                }
            }
        }
        meta.push(json!({
            "delta": delta,
            "particles": run.particles,
            "drive_bands": valid_bands(&h),
        }));
    }
    let checks = p
        .lindhard_tolerance
        .map(|tol| {
            vec![Check::at_most(
                "max deviation from Lindhard relative to its maximum".into(),
                worst,
                tol,
            )]
        })
        .unwrap_or_default();
    Ok((json!({ "runs": meta, "worst_lindhard_deviation": worst }), checks))
}

fn method_name(m: CompareMethod) -> &'static str {
    match m {
        CompareMethod::MomentumSelective => "momentum_selective",
        CompareMethod::PositionSelective => "position_selective",
        CompareMethod::HadamardTest => "hadamard_test",
    }
}

fn compare(config: &RunConfig, out: &mut Outputs) -> Result<Report, CliError> {
    let c = config.compare.as_ref().expect("validated");
    let noise = config.noise_model("compare.noise", &c.noise)?;
    let mut checks = Vec::new();
    let mut meta = Vec::new();
    for (di, delta, params) in deltas(config) {
        let cmp = three_method_comparison(&params, &noise, &c.settings, derive_seed(config.seed, di as u64))?;
        for r in &cmp.methods {
            let name = method_name(r.method);
            for (j, (t, s)) in r.traces.iter().zip(&r.spectra).enumerate() {
                out.write(&format!("delta{di}/{name}/k{j}_trace.csv"), &t.to_csv())?;
                out.write(&format!("delta{di}/{name}/k{j}_spectrum.csv"), &s.to_csv())?;
            }
        }
        out.write_json(&format!("delta{di}/metrics.json"), &cmp)?;
        if c.require_ordering {
            checks.push(Check::holds(
                format!("delta={delta}: median SNR momentum > position > Hadamard"),
                cmp.snr_ordered(),
            ));
            checks.push(Check::holds(
                format!("delta={delta}: Hadamard leakage above momentum-selective"),
                cmp.hadamard_leaks_more(),
            ));
        }
        meta.push(json!({
            "delta": delta,
            "snr_ordered": cmp.snr_ordered(),
            "hadamard_leaks_more": cmp.hadamard_leaks_more(),
        }));
    }
    Ok((json!({ "noise": noise, "runs": meta }), checks))
}

#[derive(Serialize)]
struct CompressionReport {
    delta: f64,
    n: usize,
    steps: usize,
    trotter_blocks: usize,
    blocks: usize,
    cnots: usize,
    pruned_blocks: usize,
    cnots_pruned: usize,
    /// Distance up to a global phase between the triangle and the Trotter circuit.
    residual: Option<f64>,
}

fn compression(config: &RunConfig, out: &mut Outputs) -> Result<Report, CliError> {
    let c = config.compress.as_ref().expect("validated");
    let n = config.model.n;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for (_, delta, params) in deltas(config) {
        let trotter = trotter_circuit(&params, c.dt, c.steps)?;
        let tri = compress(&trotter)?;
        let pruned = lightcone_prune(&tri, c.measured_qubit)?;
        let residual = if n <= c.max_dense_sites {
            Some(phase_distance(&tri.unitary()?, &trotter.unitary()?))
        } else {
            None
        };
        checks.push(Check::holds(
            format!("delta={delta}: n(n-1)/2 blocks and n-1 after pruning"),
            tri.len() == n * (n - 1) / 2 && pruned.len() == n - 1,
        ));
        if let Some(r) = residual {
            checks.push(Check::at_most(
                format!("delta={delta}: unitary residual"),
                r,
                c.residual_tolerance,
            ));
        }
        reports.push(CompressionReport {
            delta,
            n,
            steps: c.steps,
            trotter_blocks: trotter.len(),
            blocks: tri.len(),
            cnots: tri.cnot_count(),
            pruned_blocks: pruned.len(),
            cnots_pruned: pruned.cnot_count(),
            residual,
        });
    }
    out.write_json("compression.json", &reports)?;
    Ok((json!({ "cnots_per_block": 2 }), checks))
}

#[derive(Serialize)]
struct OracleLevels {
    delta: f64,
    bulk_gap: f64,
    finite_gap: f64,
    energies: Vec<f64>,
    ring_energies: Vec<(usize, Vec<f64>)>,
}

fn oracle(config: &RunConfig, out: &mut Outputs) -> Result<Report, CliError> {
    let o = config.oracle.as_ref().expect("validated");
    let steps = (o.t_max / o.dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * o.dt).collect();
    let mut levels = Vec::new();
    let mut rows = Vec::new();
    for (di, delta, params) in deltas(config) {
        let m = build_ssh(&params)?.single_particle;
        for &j in &o.momentum_indices {
            let k = config.model.momentum(j);
            let trace = ResponseTrace::from_real(times.clone(), &momentum_response(&m, k, &times))?;
            let spec = spectrum_of(&trace, o.tau, o.pad)?;
            out.write(&format!("delta{di}/k{j}_trace.csv"), &trace.to_csv())?;
            out.write(&format!("delta{di}/k{j}_spectrum.csv"), &spec.to_csv())?;
            rows.extend(peak_rows(delta, j, k, &positive_peaks(&spec, o.peak_min_height)));
        }
        let gap = band_gap(&params)?;
        let ring = if params.boundary == Boundary::Periodic {
            o.momentum_indices
                .iter()
                .map(|&j| (j, ring_energies(&params, config.model.momentum(j))))
                .collect()
        } else {
            Vec::new()
        };
        levels.push(OracleLevels {
            delta,
            bulk_gap: gap.bulk,
            finite_gap: gap.finite,
            energies: single_particle_energies(&params)?,
            ring_energies: ring,
        });
    }
    out.write_json("peaks.json", &rows)?;
    out.write_json("levels.json", &levels)?;
    Ok((Value::Null, Vec::new()))
}
