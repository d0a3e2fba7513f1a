use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nnsysid::metrics::{mse, predict_flops, summarize, FlopRow, NetDims};
use nnsysid::TrainingMethod;

const METHODS: [TrainingMethod; 3] = [
    TrainingMethod::SeriesParallel,
    TrainingMethod::ParallelTheta,
    TrainingMethod::ParallelPhi,
];

fn dims(n: u64, ny: u64, nu_window: u64, n_u: u64, n_y: u64, hidden: &[u64]) -> NetDims {
    let mut layer_sizes = hidden.to_vec();
    layer_sizes.push(n_y);
    NetDims {
        n_samples: n,
        n_x: ny * n_y + nu_window * n_u,
        n_outputs: n_y,
        n_inputs: n_u,
        ny,
        layer_sizes,
    }
}

fn random_dims(rng: &mut ChaCha8Rng) -> NetDims {
    let n_y = rng.gen_range(1..=3);
    let hidden: Vec<u64> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(n_y + 1..=40)).collect();
    dims(
        rng.gen_range(10..=5000),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
        rng.gen_range(1..=3),
        n_y,
        &hidden,
    )
}

/// Per-iteration cost written out row by row from the printed table.
fn hand_total(d: &NetDims, method: TrainingMethod) -> u128 {
    let n = d.n_samples as u128;
    let nx = d.n_x as u128;
    let nyc = d.n_outputs as u128;
    let sizes: Vec<u128> = d.layer_sizes.iter().map(|&s| s as u128).collect();
    let mut nw = nx * sizes[0];
    for l in 1..sizes.len() {
        nw += sizes[l - 1] * sizes[l];
    }
    let ntheta = nw + sizes.iter().sum::<u128>();
    let nphi = ntheta + d.ny as u128 * nyc;

    let i = 2 * n * nw;
    let ii = n * (2 * nyc + 1) * (nw - nx * sizes[0]);
    let iii = n * nw * nyc;
    let iv = 2 * n * nx * sizes[0] * nyc;
    let v = 2 * n * ntheta * (nyc * nyc + nyc);
    let vi = 2 * n * d.ny as u128 * nyc * (nyc * nyc + nyc);
    let vii = 2 * n * ntheta * ntheta + ntheta * ntheta * ntheta / 3;
    let viii = 2 * n * nphi * nphi + nphi * nphi * nphi / 3;
    match method {
        TrainingMethod::SeriesParallel => i + ii + iii + vii,
        TrainingMethod::ParallelTheta => i + ii + iii + iv + v + vii,
        TrainingMethod::ParallelPhi => i + ii + iii + iv + v + vi + viii,
    }
}

#[test]
fn totals_match_hand_sums_on_random_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let d = random_dims(&mut rng);
        for m in METHODS {
            let b = predict_flops(&d, m);
            assert_eq!(b.total, hand_total(&d, m), "{m:?} on {d:?}");
            assert_eq!(b.rows.iter().map(|(_, f)| f).sum::<u128>(), b.total);
        }
    }
}

#[test]
fn worked_examples() {
    // 4-10-1: N_w = 50, N_Θ = 61
    let d = dims(1, 2, 2, 1, 1, &[10]);
    assert_eq!(d.n_weights(), 50);
    assert_eq!(d.n_theta(), 61);
    assert_eq!(FlopRow::Output.flops(&d), 100);
    let d = NetDims { n_samples: 1000, ..d };
    assert_eq!(FlopRow::SolveTheta.flops(&d), 7_442_000 + 75_660);
    assert_eq!(d.n_phi(), 63);
}

#[test]
fn size_relations_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..500 {
        let mut d = random_dims(&mut rng);
        // N_x < N_x·N_s1 needs N_s1 >= 2, which random_dims guarantees
        d.layer_sizes[0] = d.layer_sizes[0].max(2);
        let (nx, nyc, nw, nt) = (d.n_x, d.n_outputs, d.n_weights(), d.n_theta());
        let ns1 = d.first_layer();
        let last = d.last_hidden();
        assert!(nyc < last);
        assert!(d.ny * nyc <= nx && nx < nx * ns1 && nx * ns1 <= nw && nw < nt, "{d:?}");
        if nyc >= 2 {
            assert!(nyc < nyc * nyc);
        } else {
            assert!(nyc <= nyc * nyc);
        }
        assert!(nyc * nyc < nyc * last && nyc * last <= nw, "{d:?}");
        assert!(d.n_phi() < 2 * nt);
    }
}

#[test]
fn methods_cost_within_a_factor_of_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for _ in 0..2000 {
        let d = random_dims(&mut rng);
        if d.n_theta() < 20 * d.ny * d.n_outputs * d.n_outputs {
            continue;
        }
        checked += 1;
        let totals: Vec<u128> = METHODS.iter().map(|&m| predict_flops(&d, m).total).collect();
        let (lo, hi) = (*totals.iter().min().unwrap(), *totals.iter().max().unwrap());
        assert!(hi <= 2 * lo, "{d:?}: {totals:?}");
    }
    assert!(checked > 100);
}

#[test]
fn solve_row_dominates_when_samples_exceed_parameters() {
    for n_y in [1, 2] {
        for hidden in [5, 10, 20, 40, 80] {
            for n_mult in [1, 10, 100] {
                let mut d = dims(0, 2, 2, 1, n_y, &[hidden]);
                d.n_samples = n_mult * d.n_theta();
                for m in METHODS {
                    let b = predict_flops(&d, m);
                    let (row, f) = b.dominant();
                    assert!(
                        matches!(row, FlopRow::SolveTheta | FlopRow::SolvePhi),
                        "{m:?} {d:?}: dominant row {row:?}"
                    );
                    assert!(2 * f >= b.total, "{m:?} {d:?}: {} of {}", f, b.total);
                }
            }
        }
    }
}

#[test]
fn parallel_cost_approaches_series_parallel() {
    // 4-h-1 with N_Θ = 6h + 1 close to 100 and 1000
    for hidden in [17, 167] {
        let d = dims(1000, 2, 2, 1, 1, &[hidden]);
        let sp = predict_flops(&d, TrainingMethod::SeriesParallel).total as f64;
        let pt = predict_flops(&d, TrainingMethod::ParallelTheta).total as f64;
        assert!((pt / sp - 1.0).abs() < 0.10, "N_Θ = {}: ratio {}", d.n_theta(), pt / sp);
    }
}

#[test]
fn summary_matches_sort_and_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s = summarize(&x, 0.3).unwrap();

        let mut sorted = x.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kept = &sorted[1..11];
        let mean = kept.iter().sum::<f64>() / 10.0;
        let std = (kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0).sqrt();
        let median = 0.5 * (sorted[5] + sorted[6]);
        let q1 = 0.25 * sorted[2] + 0.75 * sorted[3];
        let q3 = 0.75 * sorted[8] + 0.25 * sorted[9];

        let close = |a: f64, b: f64| (a - b).abs() <= 1e-15;
        assert!(close(s.trimmed_mean, mean));
        assert!(close(s.trimmed_std, std));
        assert!(close(s.median, median));
        assert!(close(s.iqr_low, q1), "{} vs {q1}", s.iqr_low);
        assert!(close(s.iqr_high, q3), "{} vs {q3}", s.iqr_high);
        assert!(s.iqr_low <= s.median && s.median <= s.iqr_high);
        assert_eq!(s.n_samples, 12);
        assert_eq!(s.trim_fraction, 0.3);
    }
}

#[test]
fn summary_edge_cases() {
    let s = summarize(&[2.0; 6], 0.3).unwrap();
    assert_eq!(s.trimmed_std, 0.0);
    assert!(summarize(&[], 0.3).is_err());
    assert!(summarize(&[1.0, 2.0, 3.0], 0.3).is_err());
    assert!(summarize(&[1.0, 2.0, 3.0, 4.0], 0.5).is_err());
}

#[test]
fn mse_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for len in [1, 7, 1000] {
        let y: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y_hat: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut acc = 0.0;
        for k in 0..len {
            acc += (y[k] - y_hat[k]).powi(2);
        }
        assert!((mse(&y, &y_hat).unwrap() - acc / len as f64).abs() < 1e-15);
    }
}
