use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

use nnsysid::signals::{
    band_noise, butterworth_design, chen_generate, chen_step, filtfilt, held_gaussian_input, std_dev, Band, FilterKind,
    NoiseSpec,
};

const CUTOFFS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// One-sided periodogram on `n/2 + 1` bins; bin `i` sits at normalized frequency `2i/n`.
fn periodogram(x: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[..=x.len() / 2].iter().map(|c| c.norm_sqr()).collect()
}

fn mass_fraction(psd: &[f64], lo: f64, hi: f64) -> f64 {
    let step = 1.0 / (psd.len() - 1) as f64;
    let total: f64 = psd.iter().sum();
    let inside: f64 = psd
        .iter()
        .enumerate()
        .filter(|(i, _)| (lo..=hi).contains(&(*i as f64 * step)))
        .map(|(_, p)| p)
        .sum();
    inside / total
}

#[test]
fn half_power_at_cutoff() {
    for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
        for wc in CUTOFFS {
            let f = butterworth_design(4, wc, kind).unwrap();
            let g = f.magnitude(wc);
            assert!((g - 0.5f64.sqrt()).abs() < 1e-6, "{kind:?} ωc = {wc}: |H| = {g}");
        }
    }
    assert!((butterworth_design(4, 0.5, FilterKind::Lowpass).unwrap().magnitude(0.0) - 1.0).abs() < 1e-12);
    assert!((butterworth_design(4, 0.2, FilterKind::Highpass).unwrap().magnitude(1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn magnitude_is_monotone() {
    for wc in CUTOFFS {
        for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
            let f = butterworth_design(4, wc, kind).unwrap();
            let mags: Vec<f64> = (0..512).map(|i| f.magnitude(i as f64 / 511.0)).collect();
            let ok = mags.windows(2).all(|w| match kind {
                FilterKind::Lowpass => w[1] <= w[0] + 1e-12,
                FilterKind::Highpass => w[1] >= w[0] - 1e-12,
            });
            assert!(ok, "{kind:?} ωc = {wc} is not monotone");
        }
    }
}

#[test]
fn every_section_is_stable() {
    for wc in CUTOFFS {
        for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
            let f = butterworth_design(4, wc, kind).unwrap();
            assert!(f.sections.iter().all(|s| s.is_stable()), "{kind:?} ωc = {wc}");
        }
    }
}

#[test]
fn cutoff_outside_unit_interval_is_rejected() {
    for wc in [0.0, 1.0, -0.2, 1.5] {
        assert!(butterworth_design(4, wc, FilterKind::Lowpass).is_err());
    }
}

#[test]
fn passband_sinusoid_keeps_amplitude_and_phase() {
    let f = butterworth_design(4, 0.5, FilterKind::Lowpass).unwrap();
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|k| (PI * 0.05 * k as f64).sin()).collect();
    let y = filtfilt(&f, &x).unwrap();
    let interior = 200..n - 200;
    let amp = std_dev(&y[interior.clone()]) * 2f64.sqrt();
    assert!((amp - 1.0).abs() < 0.02, "amplitude {amp}");

    let xcorr = |lag: i64| -> f64 { interior.clone().map(|k| x[k] * y[(k as i64 + lag) as usize]).sum() };
    let best = (-10..=10).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
    assert_eq!(best, 0);
}

#[test]
fn constant_passes_lowpass_unchanged() {
    let f = butterworth_design(4, 0.3, FilterKind::Lowpass).unwrap();
    let y = filtfilt(&f, &[2.5; 300]).unwrap();
    assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
}

#[test]
fn filtfilt_commutes_with_time_reversal() {
    let f = butterworth_design(4, 0.3, FilterKind::Highpass).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = band_noise(500, &NoiseSpec::white(1.0), &mut rng).unwrap();
    let mut xr = x.clone();
    xr.reverse();
    let mut yr = filtfilt(&f, &xr).unwrap();
    yr.reverse();
    let y = filtfilt(&f, &x).unwrap();
    assert!(y.iter().zip(&yr).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn filtfilt_rejects_short_signals() {
    let f = butterworth_design(4, 0.3, FilterKind::Lowpass).unwrap();
    assert!(filtfilt(&f, &[0.0; 12]).is_err());
    assert!(filtfilt(&f, &[0.0; 13]).is_ok());
}

#[test]
fn lowpass_noise_concentrates_below_cutoff() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = band_noise(
        8192,
        &NoiseSpec {
            sigma: 1.0,
            band: Band::Lowpass(0.2),
        },
        &mut rng,
    )
    .unwrap();
    let frac = mass_fraction(&periodogram(&x), 0.0, 0.3);
    assert!(frac >= 0.95, "mass below 0.3: {frac}");
}

#[test]
fn band_noise_stays_in_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for wc in [0.2, 0.6] {
        for band in [Band::Lowpass(wc), Band::Highpass(wc)] {
            let x = band_noise(8192, &NoiseSpec { sigma: 1.0, band }, &mut rng).unwrap();
            let (lo, hi) = band.range();
            let frac = mass_fraction(&periodogram(&x), lo, hi);
            assert!(frac >= 0.90, "{band}: in-band mass {frac}");
        }
    }
}

#[test]
fn band_noise_has_exact_sigma_and_small_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 5000;
    for band in [Band::White, Band::Lowpass(0.2), Band::Highpass(0.6)] {
        for sigma in [0.1, 0.5, 1.0] {
            let x = band_noise(n, &NoiseSpec { sigma, band }, &mut rng).unwrap();
            assert_eq!(x.len(), n);
            assert!((std_dev(&x) - sigma).abs() < 1e-12 * sigma.max(1.0));
            let mean = x.iter().sum::<f64>() / n as f64;
            assert!(
                mean.abs() < 3.0 * sigma / (n as f64).sqrt(),
                "{band} σ = {sigma}: mean {mean}"
            );
        }
    }
    let zero = band_noise(
        100,
        &NoiseSpec {
            sigma: 0.0,
            band: Band::Lowpass(0.2),
        },
        &mut rng,
    )
    .unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn white_noise_is_close_to_unit_before_rescaling() {
    // with σ = 1 the output is the raw draws centered and divided by their sd
    let mut a = ChaCha8Rng::seed_from_u64(8);
    let mut b = ChaCha8Rng::seed_from_u64(8);
    let raw = held_gaussian_input(10000, 1, &mut a).unwrap();
    let scaled = band_noise(10000, &NoiseSpec::white(1.0), &mut b).unwrap();
    assert!((std_dev(&raw) - 1.0).abs() < 0.02);
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    assert!((scaled[0] * std_dev(&raw) + mean - raw[0]).abs() < 1e-12);
}

#[test]
fn held_input_has_block_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = held_gaussian_input(12, 5, &mut rng).unwrap();
    assert!(u[..5].iter().all(|&v| v == u[0]));
    assert!(u[5..10].iter().all(|&v| v == u[5]));
    assert!(u[10..].iter().all(|&v| v == u[10]));
    assert!(u[0] != u[5] && u[5] != u[10]);

    let long = held_gaussian_input(50000, 5, &mut rng).unwrap();
    assert!((std_dev(&long) - 1.0).abs() < 0.02);
    assert!(held_gaussian_input(10, 0, &mut rng).is_err());
}

#[test]
fn chen_clean_output_satisfies_the_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 2000;
    let u = held_gaussian_input(n, 5, &mut rng).unwrap();
    let v = band_noise(n, &NoiseSpec::white(0.1), &mut rng).unwrap();
    let w = band_noise(n, &NoiseSpec::white(0.5), &mut rng).unwrap();
    let rec = chen_generate(&u, &v, &w, [0.0, 0.0]).unwrap();
    let y = &rec.clean;
    let defect = (2..n)
        .map(|k| (y[k] - chen_step(y[k - 1], y[k - 2], u[k - 1], u[k - 2]) - v[k]).abs())
        .fold(0.0, f64::max);
    assert!(defect < 1e-12, "defect {defect:e}");
    for k in 0..n {
        assert_eq!(rec.data.y[(k, 0)], y[k] + w[k]);
    }
    assert_eq!(chen_generate(&u, &v, &w, [0.0, 0.0]).unwrap(), rec);
}
