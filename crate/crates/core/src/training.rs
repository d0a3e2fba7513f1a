//! Residual providers for series-parallel and parallel training, and a
//! [`train`] entry point.
//!
//! Training data must already be in network units (see
//! [`crate::dynmodel::apply_scaling`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynmodel::{measured_initial_conditions, Dataset, DynamicModel};
use crate::error::{Error, Result};
use crate::lmsolver::{run_lm, LmAbort, LmConfig, LmState, NormalAccumulator, ResidualProvider, Termination};
use crate::metrics::{predict_flops, NetDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingMethod {
    /// One-step-ahead prediction error (NARX).
    #[serde(rename = "sp")]
    SeriesParallel,
    /// Free-run simulation error, initial conditions fixed at measured outputs.
    #[serde(rename = "p-theta")]
    ParallelTheta,
    /// Free-run simulation error, initial conditions estimated with Θ.
    #[serde(rename = "p-phi")]
    ParallelPhi,
}

impl TrainingMethod {
    pub const ALL: [TrainingMethod; 3] = [
        TrainingMethod::SeriesParallel,
        TrainingMethod::ParallelTheta,
        TrainingMethod::ParallelPhi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainingMethod::SeriesParallel => "sp",
            TrainingMethod::ParallelTheta => "p-theta",
            TrainingMethod::ParallelPhi => "p-phi",
        }
    }

    pub fn is_parallel(&self) -> bool {
        !matches!(self, TrainingMethod::SeriesParallel)
    }
}

impl std::fmt::Display for TrainingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sp" => Ok(TrainingMethod::SeriesParallel),
            "p-theta" => Ok(TrainingMethod::ParallelTheta),
            "p-phi" | "p" => Ok(TrainingMethod::ParallelPhi),
            _ => Err(Error::Data(format!(
                "unknown training method `{s}` (sp | p-theta | p-phi)"
            ))),
        }
    }
}

/// One-step-ahead residuals as a function of Θ.
pub struct SeriesParallelProblem<'a> {
    model: DynamicModel,
    data: &'a Dataset,
    flops: f64,
}

impl<'a> SeriesParallelProblem<'a> {
    pub fn new(model: &DynamicModel, data: &'a Dataset) -> Self {
        let dims = NetDims::new(data.len(), &model.orders, &model.net.structure(), model.n_inputs());
        Self {
            model: model.clone(),
            data,
            flops: predict_flops(&dims, TrainingMethod::SeriesParallel).total as f64,
        }
    }
}

impl ResidualProvider for SeriesParallelProblem<'_> {
    fn n_params(&self) -> usize {
        self.model.net.n_params()
    }

    fn residuals(&mut self, params: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.net.set_params(params.as_slice())?;
        Ok(self.model.predict_one_step(self.data).residuals)
    }

    fn residuals_and_jacobian(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.model.net.set_params(params.as_slice())?;
        Ok(self.model.residuals_jacobian_sp(self.data))
    }

    fn linearize(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        self.model.net.set_params(params.as_slice())?;
        let mut acc = NormalAccumulator::new(self.model.net.n_params());
        self.model.for_each_sp_row(self.data, |e, row| acc.push(e, row));
        Ok(acc.finish())
    }

    fn predicted_flops(&self) -> Option<f64> {
        Some(self.flops)
    }
}

/// Free-run residuals as a function of Θ (fixed initial conditions) or of
/// `Φ = [Θ; y0]`.
pub struct ParallelProblem<'a> {
    model: DynamicModel,
    data: &'a Dataset,
    fixed_y0: DVector<f64>,
    estimate_y0: bool,
    flops: f64,
}

impl<'a> ParallelProblem<'a> {
    /// `y0` is the fixed initial condition (Θ only) or ignored when
    /// `estimate_y0`, in which case it is read from the parameter vector.
    pub fn new(model: &DynamicModel, data: &'a Dataset, y0: DVector<f64>, estimate_y0: bool) -> Self {
        let dims = NetDims::new(data.len(), &model.orders, &model.net.structure(), model.n_inputs());
        let method = if estimate_y0 {
            TrainingMethod::ParallelPhi
        } else {
            TrainingMethod::ParallelTheta
        };
        Self {
            model: model.clone(),
            data,
            fixed_y0: y0,
            estimate_y0,
            flops: predict_flops(&dims, method).total as f64,
        }
    }

    fn load(&mut self, params: &DVector<f64>) -> Result<DVector<f64>> {
        let n_theta = self.model.net.n_params();
        if params.len() != self.n_params() {
            return Err(Error::Data(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                self.n_params()
            )));
        }
        self.model.net.set_params(&params.as_slice()[..n_theta])?;
        Ok(if self.estimate_y0 {
            params.rows(n_theta, params.len() - n_theta).into_owned()
        } else {
            self.fixed_y0.clone()
        })
    }
}

impl ResidualProvider for ParallelProblem<'_> {
    fn n_params(&self) -> usize {
        self.model.net.n_params() + if self.estimate_y0 { self.fixed_y0.len() } else { 0 }
    }

    fn residuals(&mut self, params: &DVector<f64>) -> Result<DVector<f64>> {
        let y0 = self.load(params)?;
        Ok(self.model.free_run_residuals(self.data, &y0))
    }

    fn residuals_and_jacobian(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let y0 = self.load(params)?;
        let mut e = Vec::new();
        let mut jac = Vec::new();
        let width = self.model.for_each_p_row(self.data, &y0, self.estimate_y0, |r, row| {
            e.push(r);
            jac.extend_from_slice(row);
        });
        let rows = e.len();
        Ok((DVector::from_vec(e), DMatrix::from_row_slice(rows, width, &jac)))
    }

    fn linearize(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let y0 = self.load(params)?;
        let mut acc = NormalAccumulator::new(self.n_params());
        self.model
            .for_each_p_row(self.data, &y0, self.estimate_y0, |e, row| acc.push(e, row));
        Ok(acc.finish())
    }

    fn predicted_flops(&self) -> Option<f64> {
        Some(self.flops)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// The model with the final Θ.
    pub model: DynamicModel,
    /// Estimated initial conditions (network units), for [`TrainingMethod::ParallelPhi`].
    pub initial_conditions: Option<DVector<f64>>,
    pub state: LmState,
    pub termination: Termination,
}

/// Initial parameter vector for `method`: Θ of `model`, extended with the
/// measured initial conditions for [`TrainingMethod::ParallelPhi`].
pub fn initial_guess(model: &DynamicModel, data: &Dataset, method: TrainingMethod) -> DVector<f64> {
    let theta = model.net.pack_params();
    match method {
        TrainingMethod::ParallelPhi => {
            let y0 = measured_initial_conditions(data, &model.orders);
            DVector::from_iterator(theta.len() + y0.len(), theta.iter().chain(y0.iter()).copied())
        }
        _ => theta,
    }
}

/// Trains `model` (its current parameters are the initial guess) on `data`.
pub fn train(
    model: &DynamicModel,
    data: &Dataset,
    method: TrainingMethod,
    cfg: &LmConfig,
) -> Result<TrainOutcome, LmAbort> {
    let min_len = model.orders.first_predictable() + 1;
    if data.len() < min_len || data.n_outputs() != model.n_outputs() || data.n_inputs() != model.n_inputs() {
        let error = Error::Data(format!(
            "training data ({} samples, {} inputs, {} outputs) does not fit the model",
            data.len(),
            data.n_inputs(),
            data.n_outputs()
        ));
        return Err(LmAbort {
            error,
            state: LmState {
                params: model.net.pack_params(),
                lambda: cfg.lambda0,
                objective: f64::NAN,
                epoch: 0,
                history: Vec::new(),
            },
        });
    }
    let x0 = initial_guess(model, data, method);
    let report = match method {
        TrainingMethod::SeriesParallel => run_lm(&mut SeriesParallelProblem::new(model, data), x0, cfg)?,
        TrainingMethod::ParallelTheta => {
            let y0 = measured_initial_conditions(data, &model.orders);
            run_lm(&mut ParallelProblem::new(model, data, y0, false), x0, cfg)?
        }
        TrainingMethod::ParallelPhi => {
            let y0 = measured_initial_conditions(data, &model.orders);
            run_lm(&mut ParallelProblem::new(model, data, y0, true), x0, cfg)?
        }
    };
    let n_theta = model.net.n_params();
    let mut trained = model.clone();
    trained
        .net
        .set_params(&report.state.params.as_slice()[..n_theta])
        .expect("solver keeps the parameter length");
    let initial_conditions = (method == TrainingMethod::ParallelPhi).then(|| {
        report
            .state
            .params
            .rows(n_theta, report.state.params.len() - n_theta)
            .into_owned()
    });
    Ok(TrainOutcome {
        model: trained,
        initial_conditions,
        state: report.state,
        termination: report.termination,
    })
}
