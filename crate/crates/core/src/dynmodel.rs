//! Neural network difference-equation models.
//!
//! A [`DynamicModel`] evaluates
//! `ŷ[k] = F(y[k-1], …, y[k-ny], u[k-τd], …, u[k-nu]; Θ)` either with measured
//! lagged outputs (one-step-ahead prediction) or with its own past predictions
//! (free-run simulation). All sample indices in this module are 0-based.
//!
//! Predictions start at `p = max(ny, nu)`, the first index whose regressor is
//! fully inside the record. A free-run simulation is seeded with `ny`
//! initial conditions placed at samples `p-ny … p-1`; when `nu <= ny` that is
//! the start of the record.
//!
//! Every routine here works in network units. [`Scaling`] converts between
//! physical units and network units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{FeedforwardNet, ForwardCache, Sensitivities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrders {
    /// Maximum output lag.
    pub ny: usize,
    /// Maximum input lag.
    pub nu: usize,
    /// Input-output delay.
    pub tau_d: usize,
}

impl ModelOrders {
    pub fn new(ny: usize, nu: usize, tau_d: usize) -> Result<Self> {
        if ny == 0 || nu == 0 {
            return Err(Error::Structure(format!(
                "lag orders must be positive (ny = {ny}, nu = {nu})"
            )));
        }
        if tau_d > nu {
            return Err(Error::Structure(format!("delay {tau_d} exceeds input lag {nu}")));
        }
        Ok(Self { ny, nu, tau_d })
    }

    /// Number of input samples in each regressor, `nu - τd + 1`.
    pub fn input_window(&self) -> usize {
        self.nu - self.tau_d + 1
    }

    /// Network input size `N_x = ny·N_y + (nu - τd + 1)·N_u`.
    pub fn regressor_len(&self, n_outputs: usize, n_inputs: usize) -> usize {
        self.ny * n_outputs + self.input_window() * n_inputs
    }

    /// Index of the first sample with a complete regressor.
    pub fn first_predictable(&self) -> usize {
        self.ny.max(self.nu)
    }

    /// Index of the first initial condition of a free-run simulation.
    pub fn free_run_start(&self) -> usize {
        self.first_predictable() - self.ny
    }
}

/// Sampled input/output record: `u` is `N × N_u`, `y` is `N × N_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub sample_period: Option<f64>,
}

impl Dataset {
    pub fn new(u: DMatrix<f64>, y: DMatrix<f64>, sample_period: Option<f64>) -> Result<Self> {
        if u.nrows() != y.nrows() {
            return Err(Error::Data(format!(
                "input has {} samples but output has {}",
                u.nrows(),
                y.nrows()
            )));
        }
        if u.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::Data(
                "dataset needs at least one input and one output channel".into(),
            ));
        }
        if let Some(ts) = sample_period {
            if !(ts > 0.0) {
                return Err(Error::Data(format!("sample period must be positive, got {ts}")));
            }
        }
        Ok(Self { u, y, sample_period })
    }

    /// Single-input single-output record.
    pub fn siso(u: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(u.len(), 1, u),
            DMatrix::from_column_slice(y.len(), 1, y),
            None,
        )
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_inputs(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.y.ncols()
    }
}

/// Jacobian recursion values below this magnitude are set to zero.
const FLUSH_BELOW: f64 = 1e-150;

fn fill_regressor(buf: &mut [f64], y: &DMatrix<f64>, u: &DMatrix<f64>, orders: &ModelOrders, k: usize) {
    let n_y = y.ncols();
    let n_u = u.ncols();
    let mut pos = 0;
    for lag in 1..=orders.ny {
        for c in 0..n_y {
            buf[pos] = y[(k - lag, c)];
            pos += 1;
        }
    }
    for lag in orders.tau_d..=orders.nu {
        for c in 0..n_u {
            buf[pos] = u[(k - lag, c)];
            pos += 1;
        }
    }
}

/// Regressor `[y[k-1]ᵀ … y[k-ny]ᵀ, u[k-τd]ᵀ … u[k-nu]ᵀ]ᵀ` at sample `k`.
///
/// `y` supplies the lagged outputs (measured or simulated).
pub fn build_regressor(y: &DMatrix<f64>, u: &DMatrix<f64>, orders: &ModelOrders, k: usize) -> Result<DVector<f64>> {
    let p = orders.first_predictable();
    let n = y.nrows().min(u.nrows());
    if k < p || k >= n {
        return Err(Error::Index {
            index: k,
            reason: format!("regressor needs {p} <= k < {n}"),
        });
    }
    let mut buf = vec![0.0; orders.regressor_len(y.ncols(), u.ncols())];
    fill_regressor(&mut buf, y, u, orders, k);
    Ok(DVector::from_vec(buf))
}

/// Per-channel affine map `scaled = (x - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mean: f64,
    pub scale: f64,
}

impl ChannelScaler {
    pub const IDENTITY: ChannelScaler = ChannelScaler { mean: 0.0, scale: 1.0 };

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    #[inline]
    pub fn invert(&self, x: f64) -> f64 {
        x * self.scale + self.mean
    }
}

/// Z-score normalization of every input and output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub inputs: Vec<ChannelScaler>,
    pub outputs: Vec<ChannelScaler>,
}

fn fit_channels(m: &DMatrix<f64>, what: &str) -> Result<Vec<ChannelScaler>> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::Data("scaling needs at least two samples".into()));
    }
    m.column_iter()
        .enumerate()
        .map(|(c, col)| {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let scale = var.sqrt();
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::Data(format!(
                    "{what} channel {} has zero (or non-finite) variance",
                    c + 1
                )));
            }
            Ok(ChannelScaler { mean, scale })
        })
        .collect()
}

fn map_channels(m: &DMatrix<f64>, scalers: &[ChannelScaler], f: fn(&ChannelScaler, f64) -> f64) -> DMatrix<f64> {
    assert_eq!(m.ncols(), scalers.len(), "channel count mismatch");
    let mut out = m.clone();
    for (mut col, s) in out.column_iter_mut().zip(scalers) {
        col.apply(|v| *v = f(s, *v));
    }
    out
}

impl Scaling {
    pub fn identity(n_inputs: usize, n_outputs: usize) -> Self {
        Self {
            inputs: vec![ChannelScaler::IDENTITY; n_inputs],
            outputs: vec![ChannelScaler::IDENTITY; n_outputs],
        }
    }

    /// Per-channel mean and (population) standard deviation of `data`.
    pub fn fit(data: &Dataset) -> Result<Self> {
        Ok(Self {
            inputs: fit_channels(&data.u, "input")?,
            outputs: fit_channels(&data.y, "output")?,
        })
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        Dataset {
            u: self.apply_inputs(&data.u),
            y: self.apply_outputs(&data.y),
            sample_period: data.sample_period,
        }
    }

    pub fn apply_inputs(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        map_channels(u, &self.inputs, ChannelScaler::apply)
    }

    pub fn apply_outputs(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        map_channels(y, &self.outputs, ChannelScaler::apply)
    }

    pub fn invert_outputs(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        map_channels(y, &self.outputs, ChannelScaler::invert)
    }

    pub fn invert_inputs(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        map_channels(u, &self.inputs, ChannelScaler::invert)
    }
}

/// Scales `data`, fitting new scalers unless `existing` is given.
pub fn apply_scaling(data: &Dataset, existing: Option<&Scaling>) -> Result<(Dataset, Scaling)> {
    let scaling = match existing {
        Some(s) => {
            if s.inputs.len() != data.n_inputs() || s.outputs.len() != data.n_outputs() {
                return Err(Error::Data("scaler channel count does not match dataset".into()));
            }
            s.clone()
        }
        None => Scaling::fit(data)?,
    };
    Ok((scaling.apply(data), scaling))
}

/// Initial conditions and network parameters estimated together,
/// `Φ = [Θ; y0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedParameters {
    pub theta: DVector<f64>,
    /// Stacked `[y0[1]ᵀ … y0[ny]ᵀ]ᵀ`.
    pub y0: DVector<f64>,
}

impl ExtendedParameters {
    pub fn len(&self) -> usize {
        self.theta.len() + self.y0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.theta.iter().chain(self.y0.iter()).copied())
    }

    pub fn from_vector(phi: &[f64], n_theta: usize) -> Self {
        Self {
            theta: DVector::from_column_slice(&phi[..n_theta]),
            y0: DVector::from_column_slice(&phi[n_theta..]),
        }
    }
}

/// Stacked initial conditions read from the measured outputs.
pub fn measured_initial_conditions(data: &Dataset, orders: &ModelOrders) -> DVector<f64> {
    let t0 = orders.free_run_start();
    let n_y = data.n_outputs();
    let mut y0 = DVector::zeros(orders.ny * n_y);
    for k in 0..orders.ny {
        for c in 0..n_y {
            y0[k * n_y + c] = data.y[(t0 + k, c)];
        }
    }
    y0
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStepPrediction {
    /// Sample index of the first prediction.
    pub start: usize,
    /// `(N - start) × N_y`.
    pub predictions: DMatrix<f64>,
    /// `ŷ₁[k] - y[k]` stacked in time order.
    pub residuals: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeRun {
    /// Sample index of the first row of `outputs` (the first initial condition).
    pub start: usize,
    /// `(N - start) × N_y`; the first `ny` rows are the initial conditions.
    pub outputs: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelJacobian {
    pub residuals: DVector<f64>,
    pub d_theta: DMatrix<f64>,
    pub d_y0: Option<DMatrix<f64>>,
}

/// A network wrapped as a difference equation, plus the data scalers it was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicModel {
    pub net: FeedforwardNet,
    pub orders: ModelOrders,
    pub scaling: Scaling,
}

impl DynamicModel {
    pub fn new(net: FeedforwardNet, orders: ModelOrders, scaling: Scaling) -> Result<Self> {
        let n_y = net.output_size();
        let n_u = scaling.inputs.len();
        if scaling.outputs.len() != n_y {
            return Err(Error::Structure(format!(
                "network has {} outputs but {} output scalers",
                n_y,
                scaling.outputs.len()
            )));
        }
        let expected = orders.regressor_len(n_y, n_u);
        if net.input_size() != expected {
            return Err(Error::Structure(format!(
                "network input size {} does not match orders (expected {})",
                net.input_size(),
                expected
            )));
        }
        if scaling
            .inputs
            .iter()
            .chain(&scaling.outputs)
            .any(|s| !(s.scale > 0.0) || !s.scale.is_finite() || !s.mean.is_finite())
        {
            return Err(Error::Structure(
                "scalers must have finite mean and positive scale".into(),
            ));
        }
        Ok(Self { net, orders, scaling })
    }

    pub fn n_outputs(&self) -> usize {
        self.net.output_size()
    }

    pub fn n_inputs(&self) -> usize {
        self.scaling.inputs.len()
    }

    fn check_data(&self, data: &Dataset) {
        assert_eq!(data.n_outputs(), self.n_outputs(), "output channel mismatch");
        assert_eq!(data.n_inputs(), self.n_inputs(), "input channel mismatch");
    }

    pub fn predict_one_step(&self, data: &Dataset) -> OneStepPrediction {
        self.check_data(data);
        let p = self.orders.first_predictable();
        let n = data.len();
        let n_y = self.n_outputs();
        let rows = n.saturating_sub(p);
        let mut predictions = DMatrix::zeros(rows, n_y);
        let mut residuals = DVector::zeros(rows * n_y);
        let mut x = vec![0.0; self.net.input_size()];
        let mut cache = ForwardCache::for_net(&self.net);
        for k in p..n {
            fill_regressor(&mut x, &data.y, &data.u, &self.orders, k);
            self.net.forward_into(&x, &mut cache);
            let z = cache.output();
            for c in 0..n_y {
                predictions[(k - p, c)] = z[c];
                residuals[(k - p) * n_y + c] = z[c] - data.y[(k, c)];
            }
        }
        OneStepPrediction {
            start: p,
            predictions,
            residuals,
        }
    }

    /// Free-run simulation driven by `u` from initial conditions `y0`
    /// (`ny × N_y`, row `i` placed at sample `free_run_start + i`).
    ///
    /// Divergence is not an error: non-finite values propagate.
    pub fn simulate_free_run(&self, u: &DMatrix<f64>, y0: &DMatrix<f64>) -> FreeRun {
        let n_y = self.n_outputs();
        assert_eq!(u.ncols(), self.n_inputs(), "input channel mismatch");
        assert_eq!(y0.shape(), (self.orders.ny, n_y), "initial condition shape");
        let t0 = self.orders.free_run_start();
        let p = self.orders.first_predictable();
        let n = u.nrows();
        assert!(n >= p, "record shorter than the initial window");
        let mut sim = DMatrix::zeros(n, n_y);
        for i in 0..self.orders.ny {
            for c in 0..n_y {
                sim[(t0 + i, c)] = y0[(i, c)];
            }
        }
        let mut x = vec![0.0; self.net.input_size()];
        let mut cache = ForwardCache::for_net(&self.net);
        for k in p..n {
            fill_regressor(&mut x, &sim, u, &self.orders, k);
            self.net.forward_into(&x, &mut cache);
            let z = cache.output();
            for c in 0..n_y {
                sim[(k, c)] = z[c];
            }
        }
        FreeRun {
            start: t0,
            outputs: sim.rows(t0, n - t0).into_owned(),
        }
    }

    /// Free-run residuals `ŷs[k] - y[k]` for `k >= free_run_start`, with the
    /// initial conditions given stacked.
    pub fn free_run_residuals(&self, data: &Dataset, y0: &DVector<f64>) -> DVector<f64> {
        self.check_data(data);
        let n_y = self.n_outputs();
        let y0m = DMatrix::from_row_slice(self.orders.ny, n_y, y0.as_slice());
        let run = self.simulate_free_run(&data.u, &y0m);
        let t0 = run.start;
        let rows = run.outputs.nrows();
        DVector::from_fn(rows * n_y, |i, _| {
            let (r, c) = (i / n_y, i % n_y);
            run.outputs[(r, c)] - data.y[(t0 + r, c)]
        })
    }

    /// One-step residuals and their Jacobian with respect to Θ.
    ///
    /// Row block `k - p` is the network's parameter Jacobian at regressor `k`.
    pub fn residuals_jacobian_sp(&self, data: &Dataset) -> (DVector<f64>, DMatrix<f64>) {
        let n_theta = self.net.n_params();
        let mut e = Vec::new();
        let mut jac = Vec::new();
        self.for_each_sp_row(data, |r, row| {
            e.push(r);
            jac.extend_from_slice(row);
        });
        let rows = e.len();
        (DVector::from_vec(e), DMatrix::from_row_slice(rows, n_theta, &jac))
    }

    /// Calls `emit(e, ∂e/∂Θ)` for each one-step residual in time order.
    pub fn for_each_sp_row(&self, data: &Dataset, mut emit: impl FnMut(f64, &[f64])) {
        self.check_data(data);
        let p = self.orders.first_predictable();
        let n_y = self.n_outputs();
        let n_theta = self.net.n_params();
        let mut rows = vec![0.0; n_y * n_theta];
        let mut x = vec![0.0; self.net.input_size()];
        let mut cache = ForwardCache::for_net(&self.net);
        let mut sens = Sensitivities::for_net(&self.net);
        for k in p..data.len() {
            fill_regressor(&mut x, &data.y, &data.u, &self.orders, k);
            self.net.forward_into(&x, &mut cache);
            self.net.backward_into(&cache, &mut sens);
            self.net.param_jacobian_into(&cache, &sens, &mut rows, n_theta);
            let z = cache.output();
            for c in 0..n_y {
                emit(z[c] - data.y[(k, c)], &rows[c * n_theta..(c + 1) * n_theta]);
            }
        }
    }

    /// Calls `emit(e, ∂e/∂[Θ; y0])` (or `∂e/∂Θ`) for each free-run residual in
    /// time order, starting at `free_run_start`. Returns the row width
    /// `N_Θ (+ ny·N_y)`.
    ///
    /// For samples inside the initial window the Θ block is zero and the y0
    /// block is the selector picking that sample's initial condition. After it,
    /// `∂ŷs[k] = ∂F/∂Θ + Σᵢ ∂F/∂y[k-i] · ∂ŷs[k-i]`, with `∂F/∂y[k-i]` read from
    /// the network's input Jacobian. The last `ny` samples' rows are kept in a
    /// ring, so each step costs one `N_y × N_y` by `N_y × width` product per lag.
    pub fn for_each_p_row(
        &self,
        data: &Dataset,
        y0: &DVector<f64>,
        estimate_y0: bool,
        mut emit: impl FnMut(f64, &[f64]),
    ) -> usize {
        self.check_data(data);
        let ny = self.orders.ny;
        let n_y = self.n_outputs();
        assert_eq!(y0.len(), ny * n_y, "initial condition length");
        let t0 = self.orders.free_run_start();
        let p = self.orders.first_predictable();
        let n = data.len();
        assert!(n >= p, "record shorter than the initial window");
        let n_theta = self.net.n_params();
        let width = if estimate_y0 { n_theta + ny * n_y } else { n_theta };
        let block = n_y * width;
        // rows of sample t live in slot (t - t0) % ny
        let mut ring = vec![0.0; ny * block];
        let mut sim = DMatrix::zeros(n, n_y);

        for i in 0..ny {
            let slot = &mut ring[i * block..(i + 1) * block];
            for c in 0..n_y {
                let r = i * n_y + c;
                sim[(t0 + i, c)] = y0[r];
                let row = &mut slot[c * width..(c + 1) * width];
                if estimate_y0 {
                    row[n_theta + r] = 1.0;
                }
                emit(y0[r] - data.y[(t0 + i, c)], row);
            }
        }

        let mut x = vec![0.0; self.net.input_size()];
        let mut cache = ForwardCache::for_net(&self.net);
        let mut sens = Sensitivities::for_net(&self.net);
        let mut dx = DMatrix::zeros(n_y, self.net.input_size());
        let mut current = vec![0.0; block];
        for k in p..n {
            fill_regressor(&mut x, &sim, &data.u, &self.orders, k);
            self.net.forward_into(&x, &mut cache);
            self.net.backward_into(&cache, &mut sens);
            self.net.input_jacobian_into(&sens, &mut dx);
            current.iter_mut().for_each(|v| *v = 0.0);
            self.net.param_jacobian_into(&cache, &sens, &mut current, width);
            for lag in 1..=ny {
                let prev = &ring[((k - lag - t0) % ny) * block..][..block];
                for c in 0..n_y {
                    let row = &mut current[c * width..(c + 1) * width];
                    for c2 in 0..n_y {
                        let coeff = dx[(c, (lag - 1) * n_y + c2)];
                        if coeff == 0.0 {
                            continue;
                        }
                        for (dst, v) in row.iter_mut().zip(&prev[c2 * width..(c2 + 1) * width]) {
                            *dst += coeff * v;
                        }
                    }
                }
            }
            // sensitivities to early initial conditions decay geometrically;
            // keep them out of the subnormal range
            for v in current.iter_mut() {
                if v.abs() < FLUSH_BELOW {
                    *v = 0.0;
                }
            }
            ring[((k - t0) % ny) * block..][..block].copy_from_slice(&current);
            let z = cache.output();
            for c in 0..n_y {
                sim[(k, c)] = z[c];
                emit(z[c] - data.y[(k, c)], &current[c * width..(c + 1) * width]);
            }
        }
        width
    }

    /// Free-run residuals with `∂e_s/∂Θ` and, when `estimate_y0`, `∂e_s/∂y0`.
    ///
    /// Residual rows run from `free_run_start` to the end of the record, so the
    /// initial window is included (its Θ-rows are zero).
    pub fn residuals_jacobian_p(&self, data: &Dataset, y0: &DVector<f64>, estimate_y0: bool) -> ParallelJacobian {
        let mut e = Vec::new();
        let mut jac = Vec::new();
        let width = self.for_each_p_row(data, y0, estimate_y0, |r, row| {
            e.push(r);
            jac.extend_from_slice(row);
        });
        let e = DVector::from_vec(e);
        let full = DMatrix::from_row_slice(e.len(), width, &jac);
        let n_theta = self.net.n_params();
        let d_theta = full.columns(0, n_theta).into_owned();
        let d_y0 = estimate_y0.then(|| full.columns(n_theta, width - n_theta).into_owned());
        ParallelJacobian {
            residuals: e,
            d_theta,
            d_y0,
        }
    }

    /// Free-run simulation in physical units. `y0` holds the initial
    /// conditions (`ny × N_y`) in physical units; the result covers samples
    /// `free_run_start..N`.
    pub fn simulate_physical(&self, u: &DMatrix<f64>, y0: &DMatrix<f64>) -> FreeRun {
        let run = self.simulate_free_run(&self.scaling.apply_inputs(u), &self.scaling.apply_outputs(y0));
        FreeRun {
            start: run.start,
            outputs: self.scaling.invert_outputs(&run.outputs),
        }
    }
}
