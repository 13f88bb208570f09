//! Time profiles `h(t)` of the applied field and their spectra.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveField {
    /// `h(t) = eta * delta(t)`, applied as one kick at `t = 0`.
    DeltaPulse { eta: f64 },
    /// `h(t) = amplitude * exp(-sigma^2 (t - t0)^2 / 2) * cos(omega0 (t - t0))`, so that
    /// `|h(w)|` is a Gaussian of width `sigma` centred on `+-omega0`.
    GaussianSinusoid {
        amplitude: f64,
        omega0: f64,
        sigma: f64,
        t0: f64,
    },
    /// Values at the step midpoints `(k + 1/2) dt`.
    Sampled { values: Vec<f64>, dt: f64 },
}

impl DriveField {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DriveField::DeltaPulse { eta } => eta.is_finite(),
            DriveField::GaussianSinusoid {
                amplitude,
                omega0,
                sigma,
                t0,
            } => amplitude.is_finite() && omega0.is_finite() && *sigma > 0.0 && t0.is_finite(),
            DriveField::Sampled { values, dt } => *dt > 0.0 && values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid drive field {self:?}")))
        }
    }

    /// Same shape with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match self.clone() {
            DriveField::DeltaPulse { eta } => DriveField::DeltaPulse { eta: eta * s },
            DriveField::GaussianSinusoid {
                amplitude,
                omega0,
                sigma,
                t0,
            } => DriveField::GaussianSinusoid {
                amplitude: amplitude * s,
                omega0,
                sigma,
                t0,
            },
            DriveField::Sampled { values, dt } => DriveField::Sampled {
                values: values.into_iter().map(|v| v * s).collect(),
                dt,
            },
        }
    }

    /// Kick area applied at `t = 0`, if any.
    pub fn kick_area(&self) -> Option<f64> {
        match self {
            DriveField::DeltaPulse { eta } => Some(*eta),
            _ => None,
        }
    }

    /// Smooth part of `h(t)` (zero for a delta pulse).
    pub fn value(&self, t: f64) -> f64 {
        match self {
            DriveField::DeltaPulse { .. } => 0.0,
            DriveField::GaussianSinusoid {
                amplitude,
                omega0,
                sigma,
                t0,
            } => {
                let s = t - t0;
                amplitude * (-sigma * sigma * s * s / 2.0).exp() * (omega0 * s).cos()
            }
            DriveField::Sampled { values, dt } => {
                if t < 0.0 {
                    return 0.0;
                }
                values.get((t / dt).floor() as usize).copied().unwrap_or(0.0)
            }
        }
    }

    /// Midpoint values for `steps` steps of size `dt`.
    pub fn midpoints(&self, dt: f64, steps: usize) -> Result<Vec<f64>> {
        if let DriveField::Sampled { values, dt: sdt } = self {
            if (sdt - dt).abs() > 1e-12 * dt {
                return Err(Error::InvalidArgument(format!(
                    "sampled field has dt={sdt}, run uses dt={dt}"
                )));
            }
            return Ok((0..steps).map(|k| values.get(k).copied().unwrap_or(0.0)).collect());
        }
        Ok((0..steps).map(|k| self.value((k as f64 + 0.5) * dt)).collect())
    }

    /// Closed-form `h(w) = int h(t) e^{iwt} dt` for the parametric shapes.
    pub fn spectrum_closed_form(&self, omega: f64) -> Option<C64> {
        match self {
            DriveField::DeltaPulse { eta } => Some(C64::new(*eta, 0.0)),
            DriveField::GaussianSinusoid {
                amplitude,
                omega0,
                sigma,
                t0,
            } => {
                let g = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp();
                let mag = amplitude / sigma * (2.0 * std::f64::consts::PI).sqrt() / 2.0
                    * (g(omega - omega0) + g(omega + omega0));
                Some(C64::from_polar(mag, omega * t0))
            }
            DriveField::Sampled { .. } => None,
        }
    }

    /// Discrete spectrum of the field as the simulator applies it, damped by `exp(-t/tau)`:
    /// `sum_k h_k e^{-t_k/tau} e^{i w t_k} dt` over midpoints, plus the kick at `t = 0`.
    pub fn sampled_spectrum(&self, dt: f64, steps: usize, tau: Option<f64>, omegas: &[f64]) -> Result<Vec<C64>> {
        let mids = self.midpoints(dt, steps)?;
        let kick = self.kick_area().unwrap_or(0.0);
        let damp = |t: f64| tau.map_or(1.0, |tau| (-t / tau).exp());
        Ok(omegas
            .iter()
            .map(|&w| {
                let smooth: C64 = mids
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| **h != 0.0)
                    .map(|(k, h)| {
                        let t = (k as f64 + 0.5) * dt;
                        C64::from_polar(h * damp(t) * dt, w * t)
                    })
                    .sum();
                smooth + kick
            })
            .collect())
    }
}
