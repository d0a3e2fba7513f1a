//! Experiment orchestration: Chen data generation, training from a seed,
//! free-run validation, noise sweeps and runtime benchmarks.
//!
//! Every random draw comes from [`nnsysid::rng::stream`] with a path
//! `prefix ++ [stream id]`. The `generate`/`train` commands use an empty
//! prefix; sweep realization `r` of cell `c` uses `[hash(c), r]`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nnsysid::dynmodel::{apply_scaling, DynamicModel, ModelOrders};
use nnsysid::lmsolver::{LmAbort, LmConfig};
use nnsysid::metrics::{mse_matrix, predict_flops, summarize, NetDims, SummaryStats};
use nnsysid::net::{FeedforwardNet, InitScale, NetStructure};
use nnsysid::rng::{self, hash_label};
use nnsysid::signals::{band_noise, chen_generate, column, held_gaussian_input, Band, NoiseSpec};
use nnsysid::training::{train, TrainOutcome};
use nnsysid::{DMatrix, Dataset, Error, TrainingMethod};

fn path(prefix: &[u64], stream: u64) -> Vec<u64> {
    let mut p = prefix.to_vec();
    p.push(stream);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub hold: usize,
    pub equation_noise: NoiseSpec,
    pub output_noise: NoiseSpec,
}

impl Default for ChenConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_val: 1000,
            hold: 5,
            equation_noise: NoiseSpec::white(0.1),
            output_noise: NoiseSpec::white(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChenData {
    /// Noisy training record.
    pub train: Dataset,
    /// Noise-free training output `y*` (still carries the equation error).
    pub train_clean: Vec<f64>,
    /// Fresh input realization with noise-free output.
    pub validation: Dataset,
}

/// Generates a training and a validation record of the Chen system.
pub fn generate_chen(cfg: &ChenConfig, seed: u64, prefix: &[u64]) -> nnsysid::Result<ChenData> {
    cfg.equation_noise.validate()?;
    cfg.output_noise.validate()?;
    let n = cfg.n_train;
    let u = held_gaussian_input(n, cfg.hold, &mut rng::stream(seed, &path(prefix, rng::STREAM_INPUT)))?;
    let v = band_noise(
        n,
        &cfg.equation_noise,
        &mut rng::stream(seed, &path(prefix, rng::STREAM_EQUATION_NOISE)),
    )?;
    let w = band_noise(
        n,
        &cfg.output_noise,
        &mut rng::stream(seed, &path(prefix, rng::STREAM_OUTPUT_NOISE)),
    )?;
    let train = chen_generate(&u, &v, &w, [0.0, 0.0])?;

    let m = cfg.n_val;
    let u_val = held_gaussian_input(
        m,
        cfg.hold,
        &mut rng::stream(seed, &path(prefix, rng::STREAM_VALIDATION_INPUT)),
    )?;
    let zeros = vec![0.0; m];
    let val = chen_generate(&u_val, &zeros, &zeros, [0.0, 0.0])?;
    Ok(ChenData {
        train: train.data,
        train_clean: train.clean,
        validation: val.data,
    })
}

/// Sidecar record written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateMeta {
    pub system: String,
    pub seed: u64,
    #[serde(flatten)]
    pub config: ChenConfig,
    pub y_init: [f64; 2],
}

impl GenerateMeta {
    pub fn new(cfg: &ChenConfig, seed: u64) -> Self {
        Self {
            system: "chen".into(),
            seed,
            config: *cfg,
            y_init: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub orders: ModelOrders,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub init: InitScale,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            orders: ModelOrders { ny: 2, nu: 2, tau_d: 1 },
            hidden: vec![10],
            init: InitScale::default(),
        }
    }
}

impl ModelSpec {
    pub fn structure(&self, n_inputs: usize, n_outputs: usize) -> nnsysid::Result<NetStructure> {
        NetStructure::regression(self.orders.regressor_len(n_outputs, n_inputs), &self.hidden, n_outputs)
    }
}

/// A model initialized from `seed` with scalers fitted on `data`, and `data`
/// in network units.
pub fn init_model(
    spec: &ModelSpec,
    data: &Dataset,
    seed: u64,
    prefix: &[u64],
) -> nnsysid::Result<(DynamicModel, Dataset)> {
    let min_len = spec.orders.first_predictable() + 1;
    if data.len() < min_len {
        return Err(Error::Data(format!(
            "dataset has {} samples, the model needs at least {min_len}",
            data.len()
        )));
    }
    let (scaled, scaling) = apply_scaling(data, None)?;
    let structure = spec.structure(data.n_inputs(), data.n_outputs())?;
    let net = FeedforwardNet::init_params_with(
        &structure,
        spec.init,
        &mut rng::stream(seed, &path(prefix, rng::STREAM_INIT)),
    );
    Ok((DynamicModel::new(net, spec.orders, scaling)?, scaled))
}

#[derive(Debug)]
pub enum FitError {
    Setup(Error),
    Solver(LmAbort),
}

impl From<FitError> for crate::CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Setup(e) => e.into(),
            FitError::Solver(e) => e.into(),
        }
    }
}

impl std::fmt::Display for FitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitError::Setup(e) => e.fmt(f),
            FitError::Solver(e) => e.fmt(f),
        }
    }
}

/// Scales `data`, initializes a network from `seed` and trains it. The
/// initial guess for Θ depends only on `(spec, seed, prefix)`, so every
/// method starts from the same point.
pub fn fit(
    spec: &ModelSpec,
    method: TrainingMethod,
    data: &Dataset,
    cfg: &LmConfig,
    seed: u64,
    prefix: &[u64],
) -> Result<TrainOutcome, FitError> {
    let (model, scaled) = init_model(spec, data, seed, prefix).map_err(FitError::Setup)?;
    cfg.validate().map_err(FitError::Setup)?;
    train(&model, &scaled, method, cfg).map_err(FitError::Solver)
}

/// Initial damping used by the experiment commands.
pub const EXPERIMENT_LAMBDA0: f64 = 100.0;

/// Solver settings for the experiment commands.
pub fn experiment_lm_config(epochs: usize, lambda0: f64) -> LmConfig {
    LmConfig {
        max_epochs: epochs,
        lambda0,
        ..LmConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub mse: f64,
    /// Free-run output in physical units for samples `start..N`.
    pub simulated: DMatrix<f64>,
    pub start: usize,
    /// First sample scored; earlier ones are the initial conditions.
    pub scored_from: usize,
}

/// Free-run simulation on `data` started from its first `ny` measured
/// outputs. The MSE covers the simulated samples only.
pub fn validate(model: &DynamicModel, data: &Dataset) -> nnsysid::Result<Validation> {
    if data.n_inputs() != model.n_inputs() || data.n_outputs() != model.n_outputs() {
        return Err(Error::Data(format!(
            "validation data has {} inputs and {} outputs, the model expects {} and {}",
            data.n_inputs(),
            data.n_outputs(),
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    let t0 = model.orders.free_run_start();
    let p = model.orders.first_predictable();
    if data.len() <= p {
        return Err(Error::Data(format!(
            "validation data has {} samples, needs more than {p}",
            data.len()
        )));
    }
    let y0 = data.y.rows(t0, model.orders.ny).into_owned();
    let run = model.simulate_physical(&data.u, &y0);
    let n = data.len();
    let mse = mse_matrix(
        &data.y.rows(p, n - p).into_owned(),
        &run.outputs.rows(p - t0, n - p).into_owned(),
    )?;
    Ok(Validation {
        mse,
        simulated: run.outputs,
        start: t0,
        scored_from: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// `v ≠ 0, w = 0`.
    Equation,
    /// `w ≠ 0, v = 0`.
    Output,
}

impl NoiseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::Equation => "equation",
            NoiseKind::Output => "output",
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> nnsysid::Result<Self> {
        match s {
            "equation" | "eq" | "v" => Ok(NoiseKind::Equation),
            "output" | "out" | "w" => Ok(NoiseKind::Output),
            _ => Err(Error::Data(format!("unknown noise kind `{s}` (equation | output)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub noise: NoiseKind,
    pub bands: Vec<Band>,
    pub sigmas: Vec<f64>,
    pub realizations: usize,
    pub methods: Vec<TrainingMethod>,
    pub epochs: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub hold: usize,
    pub hidden: usize,
    pub orders: ModelOrders,
    pub init: InitScale,
    pub lambda0: f64,
    /// Total trimmed mass for the trimmed mean and std.
    pub trim: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            noise: NoiseKind::Equation,
            bands: vec![Band::White],
            sigmas: vec![1.0],
            realizations: 12,
            methods: vec![TrainingMethod::SeriesParallel, TrainingMethod::ParallelPhi],
            epochs: 100,
            n_train: 1000,
            n_val: 1000,
            hold: 5,
            hidden: 10,
            orders: ModelOrders { ny: 2, nu: 2, tau_d: 1 },
            init: InitScale::default(),
            lambda0: EXPERIMENT_LAMBDA0,
            trim: 0.3,
            seed: 1,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> nnsysid::Result<()> {
        if self.realizations < 2 {
            return Err(Error::Data("a sweep needs at least 2 realizations".into()));
        }
        if self.bands.is_empty() || self.sigmas.is_empty() || self.methods.is_empty() {
            return Err(Error::Data("sweep bands, sigmas and methods must be nonempty".into()));
        }
        for s in &self.sigmas {
            NoiseSpec {
                sigma: *s,
                band: Band::White,
            }
            .validate()?;
        }
        for b in &self.bands {
            b.validate()?;
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::Data(format!("trim fraction {} outside [0, 0.5)", self.trim)));
        }
        if self.lambda0.is_nan() || self.lambda0 <= 0.0 {
            return Err(Error::Data(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if self.hidden == 0 || self.epochs == 0 {
            return Err(Error::Data("hidden nodes and epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<SweepCell> {
        self.bands
            .iter()
            .flat_map(|&band| {
                self.sigmas.iter().map(move |&sigma| SweepCell {
                    noise: self.noise,
                    band,
                    sigma,
                })
            })
            .collect()
    }

    fn chen_config(&self, cell: &SweepCell) -> ChenConfig {
        let active = NoiseSpec {
            sigma: cell.sigma,
            band: cell.band,
        };
        let silent = NoiseSpec::white(0.0);
        let (equation_noise, output_noise) = match cell.noise {
            NoiseKind::Equation => (active, silent),
            NoiseKind::Output => (silent, active),
        };
        ChenConfig {
            n_train: self.n_train,
            n_val: self.n_val,
            hold: self.hold,
            equation_noise,
            output_noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub noise: NoiseKind,
    pub band: Band,
    pub sigma: f64,
}

impl SweepCell {
    /// Stable identifier hashed into the cell's seed path.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.noise, self.band, self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationResult {
    pub cell: usize,
    pub realization: usize,
    pub method: TrainingMethod,
    /// `None` when training or validation failed or produced a non-finite MSE.
    pub mse: Option<f64>,
    pub final_objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub method: TrainingMethod,
    pub n_ok: usize,
    pub n_missing: usize,
    pub stats: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResults {
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
    pub raw: Vec<RealizationResult>,
    pub summaries: Vec<CellSummary>,
}

impl SweepResults {
    pub fn summary(&self, cell: usize, method: TrainingMethod) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.cell == cell && s.method == method)
    }
}

fn run_realization(cfg: &SweepConfig, cell_idx: usize, cell: &SweepCell, r: usize) -> Vec<RealizationResult> {
    let prefix = [hash_label(&cell.label()), r as u64];
    let failed = |method, msg: String| RealizationResult {
        cell: cell_idx,
        realization: r,
        method,
        mse: None,
        final_objective: None,
        error: Some(msg),
    };
    let data = match generate_chen(&cfg.chen_config(cell), cfg.seed, &prefix) {
        Ok(d) => d,
        Err(e) => return cfg.methods.iter().map(|&m| failed(m, e.to_string())).collect(),
    };
    let spec = ModelSpec {
        orders: cfg.orders,
        hidden: vec![cfg.hidden],
        init: cfg.init,
    };
    let lm = experiment_lm_config(cfg.epochs, cfg.lambda0);
    cfg.methods
        .iter()
        .map(|&method| {
            let outcome = match fit(&spec, method, &data.train, &lm, cfg.seed, &prefix) {
                Ok(o) => o,
                Err(e) => return failed(method, e.to_string()),
            };
            match validate(&outcome.model, &data.validation) {
                Ok(v) if v.mse.is_finite() => RealizationResult {
                    cell: cell_idx,
                    realization: r,
                    method,
                    mse: Some(v.mse),
                    final_objective: Some(outcome.state.objective),
                    error: None,
                },
                Ok(v) => RealizationResult {
                    final_objective: Some(outcome.state.objective),
                    ..failed(method, format!("free-run simulation diverged (MSE {})", v.mse))
                },
                Err(e) => failed(method, e.to_string()),
            }
        })
        .collect()
}

/// Runs every (cell, realization) pair, possibly in parallel, and
/// summarizes each (cell, method). Output order does not depend on
/// scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> nnsysid::Result<SweepResults> {
    cfg.validate()?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.realizations).map(move |r| (c, r)))
        .collect();
    let raw: Vec<RealizationResult> = jobs
        .par_iter()
        .map(|&(c, r)| run_realization(cfg, c, &cells[c], r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut summaries = Vec::new();
    for c in 0..cells.len() {
        for &method in &cfg.methods {
            let ok: Vec<f64> = raw
                .iter()
                .filter(|x| x.cell == c && x.method == method)
                .filter_map(|x| x.mse)
                .collect();
            let stats = if ok.len() >= 4 {
                Some(summarize(&ok, cfg.trim)?)
            } else {
                None
            };
            summaries.push(CellSummary {
                cell: c,
                method,
                n_ok: ok.len(),
                n_missing: cfg.realizations - ok.len(),
                stats,
            });
        }
    }
    Ok(SweepResults {
        config: cfg.clone(),
        cells,
        raw,
        summaries,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `raw.csv`, `summary.csv`, `curves.csv` (median and IQR against σ)
/// and `table.csv` (trimmed mean ± std per method with the winning method)
/// into `dir`, plus the configuration as `sweep.json`.
pub fn write_sweep(results: &SweepResults, dir: &std::path::Path) -> crate::Result<()> {
    use crate::formats::{write_json, write_table};
    let cell_fields = |c: usize| {
        let cell = &results.cells[c];
        vec![cell.noise.to_string(), cell.band.to_string(), cell.sigma.to_string()]
    };

    let raw: Vec<Vec<String>> = results
        .raw
        .iter()
        .map(|r| {
            let mut row = cell_fields(r.cell);
            row.extend([
                r.method.to_string(),
                r.realization.to_string(),
                fmt_opt(r.mse),
                fmt_opt(r.final_objective),
                r.error.clone().unwrap_or_default(),
            ]);
            row
        })
        .collect();
    write_table(
        &dir.join("raw.csv"),
        &[
            "noise",
            "band",
            "sigma",
            "method",
            "realization",
            "mse",
            "final_V",
            "error",
        ],
        &raw,
    )?;

    let summary: Vec<Vec<String>> = results
        .summaries
        .iter()
        .map(|s| {
            let mut row = cell_fields(s.cell);
            row.extend([s.method.to_string(), s.n_ok.to_string(), s.n_missing.to_string()]);
            let st = s.stats.as_ref();
            row.extend(
                [
                    st.map(|x| x.median),
                    st.map(|x| x.iqr_low),
                    st.map(|x| x.iqr_high),
                    st.map(|x| x.trimmed_mean),
                    st.map(|x| x.trimmed_std),
                ]
                .map(fmt_opt),
            );
            row
        })
        .collect();
    write_table(
        &dir.join("summary.csv"),
        &[
            "noise",
            "band",
            "sigma",
            "method",
            "n_ok",
            "n_missing",
            "median",
            "iqr_low",
            "iqr_high",
            "trimmed_mean",
            "trimmed_std",
        ],
        &summary,
    )?;

    let mut curves: Vec<(String, String, f64, Vec<String>)> = results
        .summaries
        .iter()
        .map(|s| {
            let cell = &results.cells[s.cell];
            let st = s.stats.as_ref();
            let row = vec![
                cell.noise.to_string(),
                cell.band.to_string(),
                s.method.to_string(),
                cell.sigma.to_string(),
                fmt_opt(st.map(|x| x.median)),
                fmt_opt(st.map(|x| x.iqr_low)),
                fmt_opt(st.map(|x| x.iqr_high)),
            ];
            (cell.band.to_string(), s.method.to_string(), cell.sigma, row)
        })
        .collect();
    curves.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)).then(a.2.total_cmp(&b.2)));
    write_table(
        &dir.join("curves.csv"),
        &["noise", "band", "method", "sigma", "median", "iqr_low", "iqr_high"],
        &curves.into_iter().map(|c| c.3).collect::<Vec<_>>(),
    )?;

    let mut header: Vec<String> = ["noise", "band", "sigma"].map(String::from).to_vec();
    for m in &results.config.methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.extend(["best".to_string(), "significant".to_string()]);
    let table: Vec<Vec<String>> = (0..results.cells.len())
        .map(|c| {
            let mut row = cell_fields(c);
            let mut scored = Vec::new();
            for &m in &results.config.methods {
                let st = results.summary(c, m).and_then(|s| s.stats);
                row.push(fmt_opt(st.map(|x| x.trimmed_mean)));
                row.push(fmt_opt(st.map(|x| x.trimmed_std)));
                if let Some(st) = st {
                    scored.push((m, st.trimmed_mean, st.trimmed_std));
                }
            }
            scored.sort_by(|a, b| a.1.total_cmp(&b.1));
            match scored.as_slice() {
                [best, second, ..] => {
                    row.push(best.0.to_string());
                    row.push((second.1 - best.1 > best.2 + second.2).to_string());
                }
                [only] => row.extend([only.0.to_string(), String::new()]),
                [] => row.extend([String::new(), String::new()]),
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("table.csv"), &header_refs, &table)?;
    write_json(&dir.join("sweep.json"), &results.config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Training lengths timed at `fixed_n_theta`.
    pub n_grid: Vec<usize>,
    pub fixed_n_theta: usize,
    /// Parameter counts timed at `fixed_n`.
    pub n_theta_grid: Vec<usize>,
    pub fixed_n: usize,
    pub repetitions: usize,
    pub epochs: usize,
    pub methods: Vec<TrainingMethod>,
    pub orders: ModelOrders,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![1000, 2000, 4000, 8000],
            fixed_n_theta: 61,
            n_theta_grid: vec![61, 121, 181, 241, 301],
            fixed_n: 10000,
            repetitions: 5,
            epochs: 100,
            methods: vec![TrainingMethod::SeriesParallel, TrainingMethod::ParallelPhi],
            orders: ModelOrders { ny: 2, nu: 2, tau_d: 1 },
            seed: 1,
        }
    }
}

impl BenchConfig {
    /// Hidden nodes of a single-hidden-layer SISO net closest to `n_theta`
    /// parameters.
    pub fn hidden_for(&self, n_theta: usize) -> usize {
        let n_x = self.orders.regressor_len(1, 1);
        (((n_theta as f64 - 1.0) / (n_x as f64 + 2.0)).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchAxis {
    N,
    NTheta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchPoint {
    pub axis: BenchAxis,
    pub method: TrainingMethod,
    pub n: usize,
    pub hidden: usize,
    pub n_theta: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub predicted_flops_per_epoch: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchFit {
    pub method: TrainingMethod,
    pub slope_n: Option<f64>,
    pub slope_n_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResults {
    pub points: Vec<BenchPoint>,
    pub fits: Vec<BenchFit>,
    /// Mean and max over grid points of `t(P) / t(SP)`, when both were timed.
    pub p_sp_ratio_mean: Option<f64>,
    pub p_sp_ratio_max: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn time_point(
    cfg: &BenchConfig,
    axis: BenchAxis,
    method: TrainingMethod,
    n: usize,
    hidden: usize,
) -> crate::Result<BenchPoint> {
    let spec = ModelSpec {
        orders: cfg.orders,
        hidden: vec![hidden],
        init: InitScale::default(),
    };
    let chen = ChenConfig {
        n_train: n,
        n_val: cfg.orders.first_predictable() + 1,
        ..ChenConfig::default()
    };
    let lm = experiment_lm_config(cfg.epochs, EXPERIMENT_LAMBDA0);
    let mut times = Vec::with_capacity(cfg.repetitions);
    let mut structure = None;
    for rep in 0..cfg.repetitions {
        let prefix = [hash_label("bench"), n as u64, rep as u64];
        let data = generate_chen(&chen, cfg.seed, &prefix)?;
        let (model, scaled) = init_model(&spec, &data.train, cfg.seed, &prefix)?;
        let start = Instant::now();
        train(&model, &scaled, method, &lm)?;
        times.push(start.elapsed().as_secs_f64());
        structure = Some(model.net.structure());
    }
    let structure = structure.expect("at least one repetition");
    let dims = NetDims::new(n, &cfg.orders, &structure, 1);
    Ok(BenchPoint {
        axis,
        method,
        n,
        hidden,
        n_theta: structure.n_params(),
        mean_s: times.iter().sum::<f64>() / times.len() as f64,
        min_s: times.iter().copied().fold(f64::INFINITY, f64::min),
        predicted_flops_per_epoch: predict_flops(&dims, method).total,
    })
}

/// Times `epochs`-epoch training runs on Chen data across both grids.
/// Runs are sequential so timings do not interfere.
pub fn run_bench(cfg: &BenchConfig) -> crate::Result<BenchResults> {
    if cfg.repetitions == 0 || cfg.methods.is_empty() || (cfg.n_grid.is_empty() && cfg.n_theta_grid.is_empty()) {
        return Err(Error::Data("bench needs a nonempty grid, methods and repetitions".into()).into());
    }
    let mut points = Vec::new();
    for &method in &cfg.methods {
        for &n in &cfg.n_grid {
            points.push(time_point(
                cfg,
                BenchAxis::N,
                method,
                n,
                cfg.hidden_for(cfg.fixed_n_theta),
            )?);
        }
        for &nt in &cfg.n_theta_grid {
            points.push(time_point(
                cfg,
                BenchAxis::NTheta,
                method,
                cfg.fixed_n,
                cfg.hidden_for(nt),
            )?);
        }
    }
    let fits = cfg
        .methods
        .iter()
        .map(|&method| {
            let along = |axis: BenchAxis| {
                let pts: Vec<&BenchPoint> = points.iter().filter(|p| p.method == method && p.axis == axis).collect();
                let x: Vec<f64> = pts
                    .iter()
                    .map(|p| {
                        if axis == BenchAxis::N {
                            p.n as f64
                        } else {
                            p.n_theta as f64
                        }
                    })
                    .collect();
                let y: Vec<f64> = pts.iter().map(|p| p.mean_s).collect();
                loglog_slope(&x, &y)
            };
            BenchFit {
                method,
                slope_n: along(BenchAxis::N),
                slope_n_theta: along(BenchAxis::NTheta),
            }
        })
        .collect();
    let ratios: Vec<f64> = points
        .iter()
        .filter(|p| p.method == TrainingMethod::ParallelPhi)
        .filter_map(|p| {
            points
                .iter()
                .find(|q| {
                    q.method == TrainingMethod::SeriesParallel && q.axis == p.axis && q.n == p.n && q.hidden == p.hidden
                })
                .map(|q| p.mean_s / q.mean_s)
        })
        .collect();
    let (p_sp_ratio_mean, p_sp_ratio_max) = if ratios.is_empty() {
        (None, None)
    } else {
        (
            Some(ratios.iter().sum::<f64>() / ratios.len() as f64),
            Some(ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    Ok(BenchResults {
        points,
        fits,
        p_sp_ratio_mean,
        p_sp_ratio_max,
    })
}

/// Writes `timings.csv` and `fits.csv` into `dir`.
pub fn write_bench(results: &BenchResults, dir: &std::path::Path) -> crate::Result<()> {
    use crate::formats::write_table;
    let rows: Vec<Vec<String>> = results
        .points
        .iter()
        .map(|p| {
            vec![
                match p.axis {
                    BenchAxis::N => "N".to_string(),
                    BenchAxis::NTheta => "N_theta".to_string(),
                },
                p.method.to_string(),
                p.n.to_string(),
                p.hidden.to_string(),
                p.n_theta.to_string(),
                p.mean_s.to_string(),
                p.min_s.to_string(),
                p.predicted_flops_per_epoch.to_string(),
            ]
        })
        .collect();
    write_table(
        &dir.join("timings.csv"),
        &[
            "axis",
            "method",
            "N",
            "hidden",
            "N_theta",
            "mean_s",
            "min_s",
            "predicted_flops_per_epoch",
        ],
        &rows,
    )?;
    let mut fits: Vec<Vec<String>> = results
        .fits
        .iter()
        .map(|f| vec![f.method.to_string(), fmt_opt(f.slope_n), fmt_opt(f.slope_n_theta)])
        .collect();
    fits.push(vec![
        "p/sp".into(),
        format!("ratio_mean={}", fmt_opt(results.p_sp_ratio_mean)),
        format!("ratio_max={}", fmt_opt(results.p_sp_ratio_max)),
    ]);
    write_table(&dir.join("fits.csv"), &["method", "slope_N", "slope_N_theta"], &fits)
}

/// Single-channel dataset helper.
pub fn siso(u: &[f64], y: &[f64]) -> nnsysid::Result<Dataset> {
    Dataset::new(column(u), column(y), None)
}
