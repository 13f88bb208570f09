//! Damping, Fourier transforms, division by the drive spectrum and peak finding.
//!
//! Transforms use `A(w) = sum_t A(t) e^{+iwt} dt`.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response on a uniform time grid starting at the pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTrace {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    /// 0 means exact expectation values.
    pub shots: u64,
    /// Statistical variance of the real part at each time (zero for exact runs).
    pub variance: Vec<f64>,
}

impl ResponseTrace {
    pub fn new(times: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "trace has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        let variance = vec![0.0; times.len()];
        Ok(Self {
            times,
            values,
            shots: 0,
            variance,
        })
    }

    pub fn from_real(times: Vec<f64>, values: &[f64]) -> Result<Self> {
        Self::new(times, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    fn dt(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InvalidArgument("trace needs at least two samples".into()));
        }
        let dt = self.times[1] - self.times[0];
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
        if !(dt > 0.0) || !uniform {
            return Err(Error::InvalidArgument(
                "time grid must be uniform and increasing".into(),
            ));
        }
        Ok(dt)
    }

    /// `t, value` rows (real part).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{}", v.re).unwrap();
        }
        out
    }
}

/// Multiply by `exp(-t/tau)`.
pub fn apply_damping(trace: &ResponseTrace, tau: f64) -> Result<ResponseTrace> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let mut out = trace.clone();
    for (v, t) in out.values.iter_mut().zip(&trace.times) {
        *v *= (-t / tau).exp();
    }
    Ok(out)
}

/// `tau` giving a broadening of three unpadded FFT bins.
pub fn default_tau(t_span: f64) -> f64 {
    t_span / (3.0 * 2.0 * std::f64::consts::PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omegas: Vec<f64>,
    pub values: Vec<C64>,
    pub valid: Vec<bool>,
}

impl Spectrum {
    pub fn new(omegas: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(Error::InvalidArgument(
                "spectrum grid and values differ in length".into(),
            ));
        }
        let valid = vec![true; omegas.len()];
        Ok(Self { omegas, values, valid })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn value(&self, i: usize) -> Option<C64> {
        self.valid[i].then(|| self.values[i])
    }

    pub fn bin_width(&self) -> f64 {
        if self.omegas.len() < 2 {
            0.0
        } else {
            self.omegas[1] - self.omegas[0]
        }
    }

    /// Index of the grid point closest to `omega`.
    pub fn nearest(&self, omega: f64) -> usize {
        (0..self.omegas.len())
            .min_by(|&a, &b| {
                (self.omegas[a] - omega)
                    .abs()
                    .total_cmp(&(self.omegas[b] - omega).abs())
            })
            .unwrap_or(0)
    }

    /// `omega, re, im, abs2, valid`; masked bins leave the value columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,re,im,abs2,valid\n");
        for i in 0..self.len() {
            match self.value(i) {
                Some(z) => writeln!(out, "{},{},{},{},true", self.omegas[i], z.re, z.im, z.norm_sqr()).unwrap(),
                None => writeln!(out, "{},,,,false", self.omegas[i]).unwrap(),
            }
        }
        out
    }
}

/// Zero-padded FFT onto the symmetric grid `w_j = 2 pi j / (N dt)`, `j = -N/2 .. N/2 - 1`.
pub fn fourier_transform(trace: &ResponseTrace, pad_factor: usize) -> Result<Spectrum> {
    let dt = trace.dt()?;
    let pad = pad_factor.max(4);
    let n = trace.len() * pad;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    buf[..trace.len()].copy_from_slice(&trace.values);
    // e^{+iwt}: the unnormalized inverse transform
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let t0 = trace.times[0];
    let dw = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let half = (n / 2) as i64;
    let mut omegas = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for j in -half..(n as i64 - half) {
        let w = j as f64 * dw;
        let idx = j.rem_euclid(n as i64) as usize;
        omegas.push(w);
        values.push(buf[idx] * dt * C64::from_polar(1.0, w * t0));
    }
    Spectrum::new(omegas, values)
}

/// `chi(w) = A(w) / h(w)` where `|h|^2 >= rel_threshold * max |h|^2`; other bins are invalid.
pub fn functional_division(a: &Spectrum, h: &Spectrum, rel_threshold: f64) -> Result<Spectrum> {
    if a.len() != h.len() || a.omegas.iter().zip(&h.omegas).any(|(x, y)| (x - y).abs() > 1e-9) {
        return Err(Error::InvalidArgument(
            "response and drive spectra use different grids".into(),
        ));
    }
    let hmax = h
        .values
        .iter()
        .zip(&h.valid)
        .filter(|(_, v)| **v)
        .map(|(z, _)| z.norm_sqr())
        .fold(0.0, f64::max);
    let mut valid = Vec::with_capacity(a.len());
    let mut values = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let ok = a.valid[i] && h.valid[i] && hmax > 0.0 && h.values[i].norm_sqr() >= rel_threshold * hmax;
        valid.push(ok);
        values.push(if ok {
            a.values[i] / h.values[i]
        } else {
            C64::new(f64::NAN, f64::NAN)
        });
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::NoDriveSupport);
    }
    Ok(Spectrum {
        omegas: a.omegas.clone(),
        values,
        valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    /// Normalized `|A|^2` at the refined position.
    pub height: f64,
    /// Full width at half maximum of `|A|^2`.
    pub width: f64,
}

/// `|A(w)|^2` normalized to a maximum of 1 over valid bins (invalid bins are 0).
pub fn power_spectrum(spec: &Spectrum) -> Vec<f64> {
    let p: Vec<f64> = (0..spec.len())
        .map(|i| spec.value(i).map_or(0.0, |z| z.norm_sqr()))
        .collect();
    let max = p.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        p.iter().map(|x| x / max).collect()
    } else {
        p
    }
}

/// Local maxima of the normalized power spectrum above `min_height`, strongest first,
/// refined by a 3-point parabola.
pub fn power_spectrum_and_peaks(spec: &Spectrum, min_height: f64) -> Vec<Peak> {
    let p = power_spectrum(spec);
    let n = p.len();
    let dw = spec.bin_width();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let flat = p.iter().all(|&x| (x - p[0]).abs() < 1e-12);
    if flat {
        return peaks;
    }
    for i in 1..n - 1 {
        if !(p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] >= min_height) {
            continue;
        }
        let (a, b, c) = (p[i - 1], p[i], p[i + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-300 {
            0.5 * (a - c) / denom
        } else {
            0.0
        };
        let height = b - 0.25 * (a - c) * shift;
        let half = height / 2.0;
        let cross = |dir: i64| -> f64 {
            let mut j = i as i64;
            loop {
                let next = j + dir;
                if next < 0 || next >= n as i64 {
                    return (j - i as i64).abs() as f64 * dw;
                }
                if p[next as usize] < half {
                    let (y0, y1) = (p[j as usize], p[next as usize]);
                    let frac = (y0 - half) / (y0 - y1);
                    return ((j - i as i64).abs() as f64 + frac) * dw;
                }
                j = next;
            }
        };
        peaks.push(Peak {
            omega: spec.omegas[i] + shift * dw,
            height,
            width: cross(-1) + cross(1),
        });
    }
    peaks.sort_by(|x, y| y.height.total_cmp(&x.height));
    peaks
}

/// Peaks restricted to `omega > 0` (the mirror branch of a real trace is dropped).
pub fn positive_peaks(spec: &Spectrum, min_height: f64) -> Vec<Peak> {
    power_spectrum_and_peaks(spec, min_height)
        .into_iter()
        .filter(|p| p.omega > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn damping_values() {
        let tr = ResponseTrace::from_real(vec![0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        let d = apply_damping(&tr, 2.0).unwrap();
        assert!((d.values[2].re - (-1.0f64).exp()).abs() < 1e-15);
        let inf = apply_damping(&tr, 1e300).unwrap();
        assert_eq!(inf.values, tr.values);
        assert!(apply_damping(&tr, 0.0).is_err());
    }

    #[test]
    fn single_sample_is_flat() {
        let mut v = vec![0.0; 64];
        v[0] = 1.0;
        let s = fourier_transform(&ResponseTrace::from_real(grid(64, 0.1), &v).unwrap(), 4).unwrap();
        assert!(s.values.iter().all(|z| (z.norm() - 0.1).abs() < 1e-14));
        assert!(power_spectrum_and_peaks(&s, 0.1).is_empty());
    }

    #[test]
    fn matches_direct_sum_and_offset_grid() {
        let times: Vec<f64> = (0..50).map(|k| 1.3 + 0.07 * k as f64).collect();
        let vals: Vec<C64> = times.iter().map(|t| C64::new((2.0 * t).sin(), 0.3 * t)).collect();
        let tr = ResponseTrace::new(times.clone(), vals.clone()).unwrap();
        let s = fourier_transform(&tr, 4).unwrap();
        for i in [0, 17, 100, 199] {
            let w = s.omegas[i];
            let direct: C64 = times
                .iter()
                .zip(&vals)
                .map(|(t, v)| v * C64::from_polar(0.07, w * t))
                .sum();
            assert!((direct - s.values[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn damped_sine_peaks_and_width() {
        let (eps, tau, dt) = (2.0, 10.0, 0.05);
        let times = grid(4000, dt);
        let vals: Vec<f64> = times.iter().map(|t| -2.0 * (eps * t).sin()).collect();
        let tr = apply_damping(&ResponseTrace::from_real(times, &vals).unwrap(), tau).unwrap();
        let s = fourier_transform(&tr, 4).unwrap();
        let peaks = power_spectrum_and_peaks(&s, 0.5);
        assert_eq!(peaks.len(), 2);
        let mut ws: Vec<f64> = peaks.iter().map(|p| p.omega).collect();
        ws.sort_by(f64::total_cmp);
        // the mirror pole's tail shifts each maximum slightly
        assert!((ws[0] + eps).abs() < s.bin_width() && (ws[1] - eps).abs() < s.bin_width());
        // |Lorentzian|^2 has half width 1/tau
        for p in &peaks {
            assert!(
                (p.width / 2.0 - 1.0 / tau).abs() < 0.1 / tau + s.bin_width(),
                "{}",
                p.width
            );
        }
        let ip = s.nearest(eps);
        let analytic = {
            // -2 sin = i(e^{i eps t} - e^{-i eps t})
            let w = s.omegas[ip];
            let l = |x: f64| 1.0 / C64::new(1.0 / tau, -(w + x));
            C64::i() * (l(eps) - l(-eps))
        };
        assert!((s.values[ip] - analytic).norm() / analytic.norm() < 0.01);
        assert_eq!(positive_peaks(&s, 0.5).len(), 1);
    }

    #[test]
    fn single_damped_exponential_peak() {
        let (eps, tau, dt) = (1.7, 8.0, 0.05);
        let times = grid(2000, dt);
        let vals: Vec<C64> = times
            .iter()
            .map(|&t| C64::from_polar((-t / tau).exp(), -eps * t))
            .collect();
        let s = fourier_transform(&ResponseTrace::new(times, vals).unwrap(), 4).unwrap();
        let peaks = power_spectrum_and_peaks(&s, 0.1);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].omega - eps).abs() < s.bin_width() / 4.0);
        assert!((peaks[0].width / 2.0 - 1.0 / tau).abs() < s.bin_width());
    }

    #[test]
    fn division_recovers_two_pole_response() {
        let omegas: Vec<f64> = (0..400).map(|k| -10.0 + 0.05 * k as f64).collect();
        let chi = |w: f64| 1.0 / C64::new(w - 1.0, 0.1) - 0.5 / C64::new(w + 2.0, 0.1);
        let h = |w: f64| C64::from_polar(0.05 * (-(w - 1.5f64).powi(2) / 2.0).exp(), 0.3 * w);
        let a = Spectrum::new(omegas.clone(), omegas.iter().map(|&w| chi(w) * h(w)).collect()).unwrap();
        let hs = Spectrum::new(omegas.clone(), omegas.iter().map(|&w| h(w)).collect()).unwrap();
        let out = functional_division(&a, &hs, 1e-3).unwrap();
        let mut n_valid = 0;
        for (i, &w) in omegas.iter().enumerate() {
            match out.value(i) {
                Some(z) => {
                    n_valid += 1;
                    assert!((z - chi(w)).norm() < 1e-10);
                    assert!(h(w).norm_sqr() >= 1e-3 * 0.05f64.powi(2) * (1.0 - 1e-9));
                }
                None => assert!(h(w).norm_sqr() < 1e-3 * 0.05f64.powi(2) * (1.0 + 1e-9)),
            }
        }
        assert!(n_valid > 0 && n_valid < omegas.len());
        assert!(out.to_csv().contains(",,,,false"));

        let zero = Spectrum::new(omegas.clone(), vec![C64::new(0.0, 0.0); omegas.len()]).unwrap();
        assert!(matches!(
            functional_division(&a, &zero, 1e-3),
            Err(Error::NoDriveSupport)
        ));
    }

    #[test]
    fn delta_division_is_plain_scaling() {
        let omegas: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let a = Spectrum::new(omegas.clone(), omegas.iter().map(|&w| C64::new(w, 1.0)).collect()).unwrap();
        let h = Spectrum::new(omegas.clone(), vec![C64::new(0.04, 0.0); 10]).unwrap();
        let chi = functional_division(&a, &h, 1e-3).unwrap();
        assert!(chi.valid.iter().all(|&v| v));
        assert!((chi.values[3] - C64::new(75.0, 25.0)).norm() < 1e-12);
    }

    #[test]
    fn retarded_identity_for_momentum_trace() {
        // L(t) = 2 Re G(t) => L(w) = G(w) + G(-w)^*
        let times = grid(512, 0.05);
        let g: Vec<C64> = times
            .iter()
            .map(|&t| -C64::i() * (C64::from_polar(0.7, -1.3 * t) + C64::from_polar(0.3, 2.1 * t)) * (-t / 5.0).exp())
            .collect();
        let l: Vec<f64> = g.iter().map(|z| 2.0 * z.re).collect();
        let gs = fourier_transform(&ResponseTrace::new(times.clone(), g).unwrap(), 4).unwrap();
        let ls = fourier_transform(&ResponseTrace::from_real(times, &l).unwrap(), 4).unwrap();
        let n = gs.len();
        for i in 1..n {
            let mirror = n - i; // w_{-j} on the symmetric grid
            let want = gs.values[i] + gs.values[mirror].conj();
            assert!((ls.values[i] - want).norm() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn parseval(vals in prop::collection::vec(-1.0f64..1.0, 8..64), dt in 0.01f64..0.5) {
            let tr = ResponseTrace::from_real(grid(vals.len(), dt), &vals).unwrap();
            let s = fourier_transform(&tr, 4).unwrap();
            let lhs: f64 = vals.iter().map(|v| v * v * dt).sum();
            let rhs: f64 = s.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * s.bin_width() / (2.0 * PI);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs));
        }

        #[test]
        fn real_input_is_hermitian(vals in prop::collection::vec(-1.0f64..1.0, 8..64)) {
            let tr = ResponseTrace::from_real(grid(vals.len(), 0.1), &vals).unwrap();
            let s = fourier_transform(&tr, 4).unwrap();
            let n = s.len();
            for i in 1..n {
                prop_assert!((s.omegas[i] + s.omegas[n - i]).abs() < 1e-9);
                prop_assert!((s.values[i] - s.values[n - i].conj()).norm() < 1e-10);
            }
        }
    }
}
