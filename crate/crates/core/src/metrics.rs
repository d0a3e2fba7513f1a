//! Error metrics, robust summaries, and per-iteration flop predictions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynmodel::ModelOrders;
use crate::error::{Error, Result};
use crate::net::NetStructure;
use crate::training::TrainingMethod;

/// Mean-square error `(1/N) Σ (y - ŷ)²` over all entries.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Data(format!(
            "mse: lengths differ ({} vs {})",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Data("mse of empty series".into()));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mse_matrix(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    if y.shape() != y_hat.shape() {
        return Err(Error::Data(format!(
            "mse: shapes differ ({:?} vs {:?})",
            y.shape(),
            y_hat.shape()
        )));
    }
    mse(y.as_slice(), y_hat.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub median: f64,
    pub iqr_low: f64,
    pub iqr_high: f64,
    pub trimmed_mean: f64,
    pub trimmed_std: f64,
    pub n_samples: usize,
    /// Total trimmed mass (split evenly between the tails).
    pub trim_fraction: f64,
}

/// Quantile `q` of sorted data, linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Median, interquartile range and trimmed mean / standard deviation.
///
/// `trim_fraction` is the total trimmed mass: `⌊trim_fraction/2 · n⌋` values
/// are removed from each tail before computing the trimmed statistics (one
/// per tail for 30% of 12 samples). The trimmed standard deviation uses the
/// `n - 1` denominator.
pub fn summarize(samples: &[f64], trim_fraction: f64) -> Result<SummaryStats> {
    if samples.is_empty() {
        return Err(Error::Data("summary of an empty sample".into()));
    }
    if samples.len() < 4 {
        return Err(Error::Data(format!(
            "summary needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::Data(format!("trim fraction {trim_fraction} outside [0, 0.5)")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("summary of a sample containing NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let per_tail = (trim_fraction / 2.0 * n as f64).floor() as usize;
    let kept = &sorted[per_tail..n - per_tail];
    let m = kept.len() as f64;
    let trimmed_mean = kept.iter().sum::<f64>() / m;
    let trimmed_std = if kept.len() > 1 {
        (kept.iter().map(|v| (v - trimmed_mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        median: quantile_sorted(&sorted, 0.5),
        iqr_low: quantile_sorted(&sorted, 0.25),
        iqr_high: quantile_sorted(&sorted, 0.75),
        trimmed_mean,
        trimmed_std,
        n_samples: n,
        trim_fraction,
    })
}

/// Sample lag-`lag` autocorrelation coefficient.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (lag..n).map(|k| (x[k] - mean) * (x[k - lag] - mean)).sum();
    num / denom
}

/// Dimensions entering the flop counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    /// Number of samples `N`.
    pub n_samples: u64,
    /// Network input size `N_x`.
    pub n_x: u64,
    /// Output channels `N_y` (= `N_z`).
    pub n_outputs: u64,
    /// Input channels `N_u`.
    pub n_inputs: u64,
    /// Output lag `n_y`.
    pub ny: u64,
    /// `N_s1 … N_sL`.
    pub layer_sizes: Vec<u64>,
}

impl NetDims {
    pub fn new(n_samples: usize, orders: &ModelOrders, structure: &NetStructure, n_inputs: usize) -> Self {
        Self {
            n_samples: n_samples as u64,
            n_x: structure.input_size as u64,
            n_outputs: structure.output_size() as u64,
            n_inputs: n_inputs as u64,
            ny: orders.ny as u64,
            layer_sizes: structure.layers.iter().map(|l| l.size as u64).collect(),
        }
    }

    pub fn n_weights(&self) -> u64 {
        let mut fan_in = self.n_x;
        let mut total = 0;
        for &s in &self.layer_sizes {
            total += fan_in * s;
            fan_in = s;
        }
        total
    }

    pub fn n_biases(&self) -> u64 {
        self.layer_sizes.iter().sum()
    }

    pub fn n_theta(&self) -> u64 {
        self.n_weights() + self.n_biases()
    }

    pub fn n_phi(&self) -> u64 {
        self.n_theta() + self.ny * self.n_outputs
    }

    pub fn first_layer(&self) -> u64 {
        self.layer_sizes[0]
    }

    /// Size of the last hidden layer, `N_s(L-1)` (the input size for a
    /// single-layer net).
    pub fn last_hidden(&self) -> u64 {
        let l = self.layer_sizes.len();
        if l >= 2 {
            self.layer_sizes[l - 2]
        } else {
            self.n_x
        }
    }
}

/// The cost items of one Levenberg-Marquardt iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlopRow {
    /// (i) network output: `2 N N_w`.
    Output,
    /// (ii) backward stage: `N (2 N_y + 1)(N_w - N_x N_s1)`.
    Backward,
    /// (iii) `∂F/∂Θ`: `N N_w N_y`.
    ParamDerivatives,
    /// (iv) `∂F/∂x`: `2 N N_x N_s1 N_y`.
    InputDerivatives,
    /// (v) Θ recursion: `2 N N_Θ (N_y² + N_y)`.
    ThetaRecursion,
    /// (vi) y0 recursion: `2 N n_y N_y (N_y² + N_y)`.
    InitialRecursion,
    /// (vii) step for Θ: `2 N N_Θ² + N_Θ³/3`.
    SolveTheta,
    /// (viii) step for Φ: `2 N N_Φ² + N_Φ³/3`.
    SolvePhi,
}

impl FlopRow {
    pub fn label(&self) -> &'static str {
        match self {
            FlopRow::Output => "i",
            FlopRow::Backward => "ii",
            FlopRow::ParamDerivatives => "iii",
            FlopRow::InputDerivatives => "iv",
            FlopRow::ThetaRecursion => "v",
            FlopRow::InitialRecursion => "vi",
            FlopRow::SolveTheta => "vii",
            FlopRow::SolvePhi => "viii",
        }
    }

    /// Flops of this row. The cubic factorization term is rounded down.
    pub fn flops(&self, d: &NetDims) -> u128 {
        let n = d.n_samples as u128;
        let nw = d.n_weights() as u128;
        let nyc = d.n_outputs as u128;
        let nx = d.n_x as u128;
        let ns1 = d.first_layer() as u128;
        let solve = |p: u128| 2 * n * p * p + p * p * p / 3;
        match self {
            FlopRow::Output => 2 * n * nw,
            FlopRow::Backward => n * (2 * nyc + 1) * (nw - nx * ns1),
            FlopRow::ParamDerivatives => n * nw * nyc,
            FlopRow::InputDerivatives => 2 * n * nx * ns1 * nyc,
            FlopRow::ThetaRecursion => 2 * n * d.n_theta() as u128 * (nyc * nyc + nyc),
            FlopRow::InitialRecursion => 2 * n * d.ny as u128 * nyc * (nyc * nyc + nyc),
            FlopRow::SolveTheta => solve(d.n_theta() as u128),
            FlopRow::SolvePhi => solve(d.n_phi() as u128),
        }
    }

    /// Rows charged to each method.
    pub fn rows_for(method: TrainingMethod) -> &'static [FlopRow] {
        use FlopRow::*;
        match method {
            TrainingMethod::SeriesParallel => &[Output, Backward, ParamDerivatives, SolveTheta],
            TrainingMethod::ParallelTheta => &[
                Output,
                Backward,
                ParamDerivatives,
                InputDerivatives,
                ThetaRecursion,
                SolveTheta,
            ],
            TrainingMethod::ParallelPhi => &[
                Output,
                Backward,
                ParamDerivatives,
                InputDerivatives,
                ThetaRecursion,
                InitialRecursion,
                SolvePhi,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    pub rows: Vec<(FlopRow, u128)>,
    pub total: u128,
}

impl FlopBreakdown {
    /// Row with the largest cost.
    pub fn dominant(&self) -> (FlopRow, u128) {
        *self.rows.iter().max_by_key(|(_, f)| *f).expect("at least one row")
    }
}

/// Per-iteration flop count of a training method.
pub fn predict_flops(dims: &NetDims, method: TrainingMethod) -> FlopBreakdown {
    let rows: Vec<(FlopRow, u128)> = FlopRow::rows_for(method).iter().map(|r| (*r, r.flops(dims))).collect();
    let total = rows.iter().map(|(_, f)| f).sum();
    FlopBreakdown { rows, total }
}
