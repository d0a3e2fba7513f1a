//! Synthetic data: the Chen benchmark system, held-Gaussian excitation, and
//! white or band-limited Gaussian noise.
//!
//! Band-limited noise is white noise passed through a digital Butterworth
//! filter forward and backward ([`filtfilt`]), so its spectrum follows `|H|²`
//! with zero phase. Frequencies are normalized so that 1 is Nyquist.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynmodel::Dataset;
use crate::error::{Error, Result};

/// Frequency band of a noise process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "cutoff", rename_all = "lowercase")]
pub enum Band {
    White,
    Lowpass(f64),
    Highpass(f64),
}

impl Band {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Band::White => Ok(()),
            Band::Lowpass(wc) | Band::Highpass(wc) => check_cutoff(wc),
        }
    }

    /// `(low, high)` normalized frequency range the band occupies.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Band::White => (0.0, 1.0),
            Band::Lowpass(wc) => (0.0, wc),
            Band::Highpass(wc) => (wc, 1.0),
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Band::White => write!(f, "white"),
            Band::Lowpass(wc) => write!(f, "low:{wc}"),
            Band::Highpass(wc) => write!(f, "high:{wc}"),
        }
    }
}

impl std::str::FromStr for Band {
    type Err = Error;

    /// Parses `white`, `low:<ωc>` or `high:<ωc>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("white") {
            return Ok(Band::White);
        }
        let (kind, wc) = s
            .split_once(':')
            .ok_or_else(|| Error::Data(format!("invalid band `{s}` (white | low:ωc | high:ωc)")))?;
        let wc: f64 = wc
            .parse()
            .map_err(|_| Error::Data(format!("invalid cutoff in band `{s}`")))?;
        let band = match kind {
            "low" | "lowpass" => Band::Lowpass(wc),
            "high" | "highpass" => Band::Highpass(wc),
            _ => return Err(Error::Data(format!("invalid band kind `{kind}`"))),
        };
        band.validate()?;
        Ok(band)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub band: Band,
}

impl NoiseSpec {
    pub fn white(sigma: f64) -> Self {
        Self {
            sigma,
            band: Band::White,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Data(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        self.band.validate()
    }
}

fn check_cutoff(wc: f64) -> Result<()> {
    if wc > 0.0 && wc < 1.0 {
        Ok(())
    } else {
        Err(Error::Data(format!("cutoff {wc} outside (0, 1)")))
    }
}

/// Output of [`chen_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChenRecord {
    /// Input and noisy output `y = y* + w`.
    pub data: Dataset,
    /// Noise-free output `y*` (still driven by the equation error `v`).
    pub clean: Vec<f64>,
}

/// Chen benchmark system:
///
/// ```text
/// y*[k] = (0.8 - 0.5 exp(-y*[k-1]²)) y*[k-1] - (0.3 + 0.9 exp(-y*[k-1]²)) y*[k-2]
///         + u[k-1] + 0.2 u[k-2] + 0.1 u[k-1] u[k-2] + v[k]
/// y[k]  = y*[k] + w[k]
/// ```
///
/// `y_init` gives `y*[0]` and `y*[1]`.
pub fn chen_generate(u: &[f64], v: &[f64], w: &[f64], y_init: [f64; 2]) -> Result<ChenRecord> {
    let n = u.len();
    if v.len() != n || w.len() != n {
        return Err(Error::Data(format!(
            "chen_generate: lengths differ (u {}, v {}, w {})",
            n,
            v.len(),
            w.len()
        )));
    }
    if n < 2 {
        return Err(Error::Data("chen_generate needs at least two samples".into()));
    }
    let mut clean = vec![0.0; n];
    clean[0] = y_init[0];
    clean[1] = y_init[1];
    for k in 2..n {
        clean[k] = chen_step(clean[k - 1], clean[k - 2], u[k - 1], u[k - 2]) + v[k];
    }
    let y: Vec<f64> = clean.iter().zip(w).map(|(c, w)| c + w).collect();
    Ok(ChenRecord {
        data: Dataset::siso(u, &y)?,
        clean,
    })
}

/// Noise-free right-hand side of the Chen recursion.
#[inline]
pub fn chen_step(y1: f64, y2: f64, u1: f64, u2: f64) -> f64 {
    let g = (-y1 * y1).exp();
    (0.8 - 0.5 * g) * y1 - (0.3 + 0.9 * g) * y2 + u1 + 0.2 * u2 + 0.1 * u1 * u2
}

/// Standard-normal values, each held for `hold` consecutive samples.
pub fn held_gaussian_input<R: Rng + ?Sized>(n: usize, hold: usize, rng: &mut R) -> Result<Vec<f64>> {
    if hold == 0 {
        return Err(Error::Data("hold must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: f64 = rng.sample(StandardNormal);
        let take = hold.min(n - out.len());
        out.extend(std::iter::repeat_n(v, take));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

/// Second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a1, a2`; `a0 = 1`.
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }

    /// Both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        let [a1, a2] = self.a;
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state for a unit step in steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let s2 = self.b[2] - self.a[1] * g;
        let s1 = self.b[1] - self.a[0] * g + s2;
        [s1, s2]
    }

    fn run(&self, x: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let out = b0 * input + state[0];
            state[0] = b1 * input - a1 * out + state[1];
            state[1] = b2 * input - a2 * out;
            *v = out;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub order: usize,
}

impl BiquadCascade {
    /// Frequency response at normalized frequency `w` (1 = Nyquist).
    pub fn response(&self, w: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -PI * w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, w: f64) -> f64 {
        self.response(w).norm()
    }

    /// Causal filtering with zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    /// Causal filtering starting from the steady state of a constant input
    /// equal to `x[0]`.
    fn filter_steady(&self, x: &mut [f64]) {
        let mut level = x.first().copied().unwrap_or(0.0);
        for s in &self.sections {
            let [s1, s2] = s.step_state();
            s.run(x, [s1 * level, s2 * level]);
            level *= s.dc_gain();
        }
    }
}

/// Digital Butterworth filter of the given order: analog prototype poles,
/// prewarped cutoff, bilinear transform, grouped into second-order sections.
///
/// Gain is 1 at DC (lowpass) or at Nyquist (highpass) and `1/√2` at the cutoff.
pub fn butterworth_design(order: usize, cutoff: f64, kind: FilterKind) -> Result<BiquadCascade> {
    check_cutoff(cutoff)?;
    if order == 0 {
        return Err(Error::Data("filter order must be positive".into()));
    }
    // bilinear map with T = 2: s = (z - 1)/(z + 1), so Ω = tan(ω/2)
    let warped = (PI * cutoff / 2.0).tan();
    let to_z = |s: Complex64| (1.0 + s) / (1.0 - s);
    let analog_pole = |k: usize| {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        Complex64::from_polar(1.0, theta)
    };
    let map_pole = |p: Complex64| match kind {
        FilterKind::Lowpass => p * warped,
        FilterKind::Highpass => warped / p,
    };
    let zero_sign = match kind {
        FilterKind::Lowpass => 1.0,
        FilterKind::Highpass => -1.0,
    };
    // gain normalization point: z = 1 for lowpass, z = -1 for highpass
    let z_ref = zero_sign;

    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let z = to_z(map_pole(analog_pole(k)));
        let a1 = -2.0 * z.re;
        let a2 = z.norm_sqr();
        let b_shape = [1.0, 2.0 * zero_sign, 1.0];
        let num_at_ref = b_shape[0] + b_shape[1] * z_ref + b_shape[2];
        let den_at_ref = 1.0 + a1 * z_ref + a2;
        let g = den_at_ref / num_at_ref;
        sections.push(Biquad {
            b: [g * b_shape[0], g * b_shape[1], g * b_shape[2]],
            a: [a1, a2],
        });
    }
    if order % 2 == 1 {
        // real pole at k = (order - 1)/2
        let z = to_z(map_pole(analog_pole((order - 1) / 2))).re;
        let a1 = -z;
        let g = (1.0 + a1 * z_ref) / (1.0 + zero_sign * z_ref);
        sections.push(Biquad {
            b: [g, g * zero_sign, 0.0],
            a: [a1, 0.0],
        });
    }
    Ok(BiquadCascade { sections, order })
}

/// Edge padding used by [`filtfilt`]: `3·order` samples on each side.
pub fn filtfilt_padlen(cascade: &BiquadCascade) -> usize {
    3 * cascade.order
}

/// Zero-phase filtering: odd-reflection padding, a forward pass, a backward
/// pass, then trimming. Each pass starts from the steady state matching its
/// first sample. The effective magnitude response is `|H|²`.
///
/// The edge transients depend on which pass runs first, so the result is the
/// mean of the forward-backward and backward-forward orders. This makes
/// `filtfilt(reverse(x)) == reverse(filtfilt(x))` hold exactly.
pub fn filtfilt(cascade: &BiquadCascade, x: &[f64]) -> Result<Vec<f64>> {
    let pad = filtfilt_padlen(cascade);
    let n = x.len();
    if n <= pad {
        return Err(Error::Data(format!(
            "signal of length {n} too short for filtfilt (needs more than {pad} samples)"
        )));
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let mut fb = ext.clone();
    cascade.filter_steady(&mut fb);
    fb.reverse();
    cascade.filter_steady(&mut fb);
    fb.reverse();
    let mut bf = ext;
    bf.reverse();
    cascade.filter_steady(&mut bf);
    bf.reverse();
    cascade.filter_steady(&mut bf);
    Ok((pad..pad + n).map(|k| 0.5 * (fb[k] + bf[k])).collect())
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Gaussian noise with the band of `spec`, centered and rescaled so that its
/// (population) standard deviation is exactly `spec.sigma`.
pub fn band_noise<R: Rng + ?Sized>(n: usize, spec: &NoiseSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if spec.sigma == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = match spec.band {
        Band::White => white,
        Band::Lowpass(wc) => filtfilt(&butterworth_design(4, wc, FilterKind::Lowpass)?, &white)?,
        Band::Highpass(wc) => filtfilt(&butterworth_design(4, wc, FilterKind::Highpass)?, &white)?,
    };
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let sd = std_dev(&x);
    if !(sd > 0.0) {
        return Err(Error::Data("generated noise has zero variance".into()));
    }
    let k = spec.sigma / sd;
    x.iter_mut().for_each(|v| *v *= k);
    Ok(x)
}

/// Column matrix helper for single-channel signals.
pub fn column(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(x.len(), 1, x)
}
