use std::f64::consts::PI;

use num_complex::Complex64;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs_hz: f64,
    /// Butterworth order per band edge; the bandpass has twice this order.
    pub order: usize,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        BandpassSpec {
            low_hz: 1.0,
            high_hz: 45.0,
            fs_hz: 100.0,
            order: 3,
        }
    }
}

impl BandpassSpec {
    pub const MAX_ORDER: usize = 8;

    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz > 0.0) || !self.fs_hz.is_finite() {
            return Err(Error::invalid(format!("sampling rate must be positive, got {}", self.fs_hz)));
        }
        if self.high_hz >= self.fs_hz / 2.0 {
            return Err(Error::AboveNyquist {
                high_hz: self.high_hz,
                fs_hz: self.fs_hz,
            });
        }
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz) {
            return Err(Error::invalid(format!(
                "band edges must satisfy 0 < low < high, got [{}, {}]",
                self.low_hz, self.high_hz
            )));
        }
        if !(1..=Self::MAX_ORDER).contains(&self.order) {
            return Err(Error::invalid(format!("filter order must be in 1..=8, got {}", self.order)));
        }
        Ok(())
    }
}

/// Second-order section with `a0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }

    pub fn poles(&self) -> [Complex64; 2] {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub gain: f64,
}

impl BiquadCascade {
    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs_hz);
        self.sections.iter().fold(Complex64::new(self.gain, 0.0), |h, s| h * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        self.response(freq_hz, fs_hz).norm()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Reflection pad used by [`apply_zero_phase`]: three times the
    /// number of taps of the equivalent direct-form filter.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    fn filter_in_place(&self, x: &mut [f64], x0: f64) {
        // Steady-state start for a step of height x0. Only the first section
        // sees a nonzero DC input since each section has a zero at z = 1.
        let mut state: Vec<[f64; 2]> = vec![[0.0; 2]; self.sections.len()];
        let mut u = x0 * self.gain;
        for (s, st) in self.sections.iter().zip(state.iter_mut()) {
            let dc = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
            let y = dc * u;
            st[1] = s.b[2] * u - s.a[1] * y;
            st[0] = s.b[1] * u - s.a[0] * y + st[1];
            u = y;
        }
        for v in x.iter_mut() {
            let mut u = *v * self.gain;
            for (s, st) in self.sections.iter().zip(state.iter_mut()) {
                let y = s.b[0] * u + st[0];
                st[0] = s.b[1] * u - s.a[0] * y + st[1];
                st[1] = s.b[2] * u - s.a[1] * y;
                u = y;
            }
            *v = u;
        }
    }
}

/// Digital Butterworth bandpass as second-order sections.
pub fn design_bandpass(spec: &BandpassSpec) -> Result<BiquadCascade> {
    spec.validate()?;
    let n = spec.order;
    let fs2 = 2.0 * spec.fs_hz;
    let warp = |f: f64| fs2 * (PI * f / spec.fs_hz).tan();
    let (wl, wh) = (warp(spec.low_hz), warp(spec.high_hz));
    let bw = wh - wl;
    let w0sq = wl * wh;

    let mut analog = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let d = (p * p - w0sq).sqrt();
        analog.push(p + d);
        analog.push(p - d);
    }
    // n zeros at s = 0 map to z = 1, the n at infinity to z = -1.
    let poles: Vec<Complex64> = analog.iter().map(|s| (fs2 + s) / (fs2 - s)).collect();
    let denom: Complex64 = analog.iter().map(|s| fs2 - s).product();
    let gain = (bw * fs2).powi(n as i32) / denom.re;

    let tol = 1e-12;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > tol).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);
    let mut sections: Vec<Biquad> = complex
        .iter()
        .map(|p| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    for pair in real.chunks(2) {
        let (p1, p2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-(p1 + p2), p1 * p2],
        });
    }
    if sections.len() != n {
        return Err(Error::invalid(format!(
            "pole pairing produced {} sections for order {n}",
            sections.len()
        )));
    }
    let cascade = BiquadCascade { sections, gain };
    if !cascade.is_stable() {
        return Err(Error::invalid("designed filter is unstable"));
    }
    Ok(cascade)
}

/// Forward-backward filtering with odd reflection padding at both ends.
pub fn apply_zero_phase(x: &[f64], f: &BiquadCascade) -> Result<Vec<f64>> {
    let pad = f.pad_len();
    if x.len() <= pad {
        return Err(Error::SignalTooShort {
            length: x.len(),
            required: pad,
        });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let x0 = ext[0];
    f.filter_in_place(&mut ext, x0);
    ext.reverse();
    let x0 = ext[0];
    f.filter_in_place(&mut ext, x0);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Filters every lead of every record.
pub fn filter_dataset(ds: &Dataset, spec: &BandpassSpec) -> Result<Dataset> {
    if (spec.fs_hz - ds.fs_hz).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "filter designed for {} Hz, dataset sampled at {} Hz",
            spec.fs_hz, ds.fs_hz
        )));
    }
    let cascade = design_bandpass(spec)?;
    let mut out = ds.clone();
    let mut lead = vec![0.0; ds.samples];
    for r in &mut out.records {
        for chunk in r.signal.chunks_mut(ds.samples) {
            for (d, &s) in lead.iter_mut().zip(chunk.iter()) {
                *d = s as f64;
            }
            let y = apply_zero_phase(&lead, &cascade)?;
            for (d, v) in chunk.iter_mut().zip(y) {
                *d = v as f32;
            }
        }
    }
    Ok(out)
}
