//! Levenberg-Marquardt solver for `min ½‖e(Θ)‖²`.
//!
//! Each epoch performs exactly one trial step:
//!
//! 1. evaluate `e` and `J` at the current iterate (if not cached),
//! 2. set `D = diag(JᵀJ)` (floored at `diag_floor`),
//! 3. solve `(JᵀJ + λD) Δ = -Jᵀe` by Cholesky factorization,
//! 4. compute the agreement ratio ρ between the actual and the predicted decrease,
//! 5. update λ from ρ,
//! 6. accept `Θ + Δ` iff `ρ > accept_threshold`.
//!
//! A trial whose residuals are not finite (e.g. a diverging free-run
//! simulation) gets `ρ = -∞`: it is rejected and λ grows.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orientation of the damping update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Shrink λ on good agreement (`ρ > ¾`), grow it on poor agreement (`ρ < ¼`).
    #[default]
    Fletcher,
    /// The transposed rule: grow λ when `ρ > ¾`, shrink it when `ρ < ¼`.
    /// Kept for comparison runs only; it does not converge reliably.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub max_epochs: usize,
    pub lambda0: f64,
    pub accept_threshold: f64,
    pub shrink: f64,
    pub grow: f64,
    /// `ρ` below which the model is considered poor.
    pub rho_low: f64,
    /// `ρ` above which the model is considered good.
    pub rho_high: f64,
    pub diag_floor: f64,
    pub schedule: ScheduleMode,
    /// Stop early once `‖Jᵀe‖∞` falls below this value.
    pub grad_tol: Option<f64>,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            lambda0: 1e-2,
            accept_threshold: 1e-3,
            shrink: 0.5,
            grow: 4.0,
            rho_low: 0.25,
            rho_high: 0.75,
            diag_floor: 1e-10,
            schedule: ScheduleMode::Fletcher,
            grad_tol: None,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda0 > 0.0
            && 0.0 < self.shrink
            && self.shrink < 1.0
            && self.grow > 1.0
            && 0.0 < self.accept_threshold
            && self.accept_threshold < self.rho_low
            && self.rho_low < self.rho_high
            && self.diag_floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Solver(format!("invalid solver configuration: {self:?}")))
        }
    }
}

/// One trial step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective at the iterate kept after this epoch.
    pub objective: f64,
    /// Damping used for the trial step.
    pub lambda: f64,
    pub rho: f64,
    pub accepted: bool,
    pub wall_ms: f64,
    pub predicted_flops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmState {
    pub params: DVector<f64>,
    pub lambda: f64,
    /// `V = ½‖e‖²` at `params`.
    pub objective: f64,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Source of residuals and Jacobians for the solver.
pub trait ResidualProvider {
    fn n_params(&self) -> usize;

    /// Residuals at `params`. Non-finite entries are allowed.
    fn residuals(&mut self, params: &DVector<f64>) -> Result<DVector<f64>>;

    /// Residuals and Jacobian (`N_e × N_params`) at `params`.
    fn residuals_and_jacobian(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// Residuals with `JᵀJ` and `Jᵀe`. Providers that hold the Jacobian in
    /// another layout can skip building the `DMatrix`.
    fn linearize(&mut self, params: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let (e, j) = self.residuals_and_jacobian(params)?;
        let (jtj, jte) = normal_equations(&j, &e);
        Ok((e, jtj, jte))
    }

    /// Predicted flops per iteration, reported in the history.
    fn predicted_flops(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxEpochs,
    GradientTolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub state: LmState,
    pub termination: Termination,
}

/// A run that stopped on a provider or factorization failure. The state
/// holds the last accepted iterate and the history so far.
#[derive(Debug)]
pub struct LmAbort {
    pub error: Error,
    pub state: LmState,
}

impl std::fmt::Display for LmAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "solver aborted after {} epochs: {}", self.state.epoch, self.error)
    }
}

impl std::error::Error for LmAbort {}

pub fn objective(e: &DVector<f64>) -> f64 {
    let v = 0.5 * e.norm_squared();
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Adds `JᵀJ` and `Jᵀe` of an `rows × width` Jacobian, whose entry `(r, c)`
/// sits at `data[r·rs + c·cs]`, to `jtj` and `jte`.
#[allow(clippy::too_many_arguments)]
fn accumulate_gram(
    data: &[f64],
    rows: usize,
    width: usize,
    rs: usize,
    cs: usize,
    e: &[f64],
    jtj: &mut DMatrix<f64>,
    jte: &mut DVector<f64>,
) {
    assert!(data.len() >= rows * width, "Jacobian buffer size");
    assert_eq!(e.len(), rows, "residual length");
    assert_eq!(jtj.shape(), (width, width));
    assert_eq!(jte.len(), width);
    if rows == 0 || width == 0 {
        return;
    }
    let (rs, cs) = (rs as isize, cs as isize);
    // SAFETY: every index r·rs + c·cs with r < rows, c < width lies inside
    // `data` (checked above for the two layouts used here), `e` has `rows`
    // entries, and the outputs are column-major width × width and width × 1.
    unsafe {
        matrixmultiply::dgemm(
            width,
            rows,
            width,
            1.0,
            data.as_ptr(),
            cs,
            rs,
            data.as_ptr(),
            rs,
            cs,
            1.0,
            jtj.as_mut_ptr(),
            1,
            width as isize,
        );
        matrixmultiply::dgemm(
            width,
            rows,
            1,
            1.0,
            data.as_ptr(),
            cs,
            rs,
            e.as_ptr(),
            1,
            rows as isize,
            1.0,
            jte.as_mut_ptr(),
            1,
            width as isize,
        );
    }
}

/// Normal-equation pieces `JᵀJ` and `Jᵀe`.
pub fn normal_equations(j: &DMatrix<f64>, e: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (rows, width) = j.shape();
    let mut jtj = DMatrix::zeros(width, width);
    let mut jte = DVector::zeros(width);
    accumulate_gram(j.as_slice(), rows, width, 1, rows, e.as_slice(), &mut jtj, &mut jte);
    (jtj, jte)
}

/// Builds `JᵀJ` and `Jᵀe` from Jacobian rows pushed one at a time, holding
/// only a small block of rows in memory.
#[derive(Debug, Clone)]
pub struct NormalAccumulator {
    width: usize,
    block: Vec<f64>,
    block_e: Vec<f64>,
    residuals: Vec<f64>,
    jtj: DMatrix<f64>,
    jte: DVector<f64>,
}

impl NormalAccumulator {
    const BLOCK_ROWS: usize = 256;

    pub fn new(width: usize) -> Self {
        Self {
            width,
            block: Vec::with_capacity(Self::BLOCK_ROWS * width),
            block_e: Vec::with_capacity(Self::BLOCK_ROWS),
            residuals: Vec::new(),
            jtj: DMatrix::zeros(width, width),
            jte: DVector::zeros(width),
        }
    }

    pub fn push(&mut self, e: f64, row: &[f64]) {
        assert_eq!(row.len(), self.width, "row width");
        self.block.extend_from_slice(row);
        self.block_e.push(e);
        self.residuals.push(e);
        if self.block_e.len() == Self::BLOCK_ROWS {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let rows = self.block_e.len();
        accumulate_gram(
            &self.block,
            rows,
            self.width,
            self.width,
            1,
            &self.block_e,
            &mut self.jtj,
            &mut self.jte,
        );
        self.block.clear();
        self.block_e.clear();
    }

    /// `(e, JᵀJ, Jᵀe)`.
    pub fn finish(mut self) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        self.flush();
        (DVector::from_vec(self.residuals), self.jtj, self.jte)
    }
}

/// `Δ = -(JᵀJ + λD)⁻¹ Jᵀe` with `D = diag(JᵀJ)` floored at `diag_floor`.
///
/// If the damped matrix is not numerically positive definite, λ is multiplied
/// by `grow` and the factorization retried up to ten times. Returns the step
/// and the λ actually used.
pub fn solve_damped_step_normal(
    jtj: &DMatrix<f64>,
    jte: &DVector<f64>,
    lambda: f64,
    diag_floor: f64,
    grow: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = jtj.nrows();
    let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(diag_floor)).collect();
    let mut lambda = lambda;
    for _ in 0..=10 {
        let mut a = jtj.clone();
        for (i, d) in diag.iter().enumerate() {
            a[(i, i)] += lambda * d;
        }
        if let Some(chol) = Cholesky::new(a) {
            let step = -chol.solve(jte);
            if step.iter().all(|v| v.is_finite()) {
                return Ok((step, lambda));
            }
        }
        lambda *= grow;
    }
    Err(Error::Solver(format!(
        "damped normal matrix not positive definite (λ reached {lambda:e})"
    )))
}

pub fn solve_damped_step(j: &DMatrix<f64>, e: &DVector<f64>, lambda: f64, diag_floor: f64) -> Result<DVector<f64>> {
    let (jtj, jte) = normal_equations(j, e);
    solve_damped_step_normal(&jtj, &jte, lambda, diag_floor, 4.0).map(|(d, _)| d)
}

/// Decrease of the local model `φ(Δ) = ½‖e + JΔ‖²`, computed from the normal
/// equations as `-(Jᵀe)ᵀΔ - ½ΔᵀJᵀJΔ`.
pub fn model_decrease(jtj: &DMatrix<f64>, jte: &DVector<f64>, step: &DVector<f64>) -> f64 {
    -jte.dot(step) - 0.5 * step.dot(&(jtj * step))
}

/// `ρ = (V_old - V_new) / (φ(0) - φ(Δ))`, or `-∞` when the trial objective
/// is not finite or the predicted decrease is not positive.
pub fn agreement_ratio(v_old: f64, v_new: f64, predicted_decrease: f64) -> f64 {
    if !v_new.is_finite() || !(predicted_decrease > 0.0) || !predicted_decrease.is_finite() {
        return f64::NEG_INFINITY;
    }
    (v_old - v_new) / predicted_decrease
}

fn update_lambda(lambda: f64, rho: f64, cfg: &LmConfig) -> f64 {
    if rho == f64::NEG_INFINITY {
        // overflow or breakdown: always back off, whatever the schedule
        return lambda * cfg.grow;
    }
    let (good, poor) = match cfg.schedule {
        ScheduleMode::Fletcher => (cfg.shrink, cfg.grow),
        ScheduleMode::PaperLiteral => (cfg.grow, cfg.shrink),
    };
    if rho > cfg.rho_high {
        lambda * good
    } else if rho < cfg.rho_low {
        lambda * poor
    } else {
        lambda
    }
}

// a non-finite Jacobian entry always reaches the diagonal of JᵀJ
fn is_finite((e, jtj, jte): &(DVector<f64>, DMatrix<f64>, DVector<f64>)) -> bool {
    objective(e).is_finite() && jtj.iter().chain(jte.iter()).all(|x| x.is_finite())
}

/// Runs the solver from `initial` for `cfg.max_epochs` epochs. A trial step
/// is accepted only if its residuals and Jacobian are finite.
pub fn run_lm<P: ResidualProvider + ?Sized>(
    provider: &mut P,
    initial: DVector<f64>,
    cfg: &LmConfig,
) -> Result<LmReport, LmAbort> {
    let mut state = LmState {
        params: initial,
        lambda: cfg.lambda0,
        objective: f64::INFINITY,
        epoch: 0,
        history: Vec::with_capacity(cfg.max_epochs),
    };
    if let Err(error) = cfg.validate() {
        return Err(LmAbort { error, state });
    }
    if state.params.len() != provider.n_params() {
        let error = Error::Solver(format!(
            "initial guess has {} parameters, problem has {}",
            state.params.len(),
            provider.n_params()
        ));
        return Err(LmAbort { error, state });
    }
    let flops = provider.predicted_flops();

    // (residuals, JᵀJ, Jᵀe) at the current iterate
    let mut cached: Option<(DVector<f64>, DMatrix<f64>, DVector<f64>)> = None;

    while state.epoch < cfg.max_epochs {
        let started = Instant::now();
        if cached.is_none() {
            match provider.linearize(&state.params) {
                Ok(lin) if is_finite(&lin) => {
                    state.objective = objective(&lin.0);
                    cached = Some(lin);
                }
                Ok(_) => {
                    let error = Error::Solver("non-finite residuals or Jacobian at the current iterate".into());
                    return Err(LmAbort { error, state });
                }
                Err(error) => return Err(LmAbort { error, state }),
            }
        }
        let (_, jtj, jte) = cached.as_ref().unwrap();

        if let Some(tol) = cfg.grad_tol {
            if jte.amax() < tol {
                return Ok(LmReport {
                    state,
                    termination: Termination::GradientTolerance,
                });
            }
        }

        let (step, lambda_used) = match solve_damped_step_normal(jtj, jte, state.lambda, cfg.diag_floor, cfg.grow) {
            Ok(s) => s,
            Err(error) => return Err(LmAbort { error, state }),
        };
        let predicted = model_decrease(jtj, jte, &step);
        let trial = &state.params + &step;
        let v_new = match provider.residuals(&trial) {
            Ok(e) => objective(&e),
            Err(error) => return Err(LmAbort { error, state }),
        };
        let mut rho = agreement_ratio(state.objective, v_new, predicted);
        let mut next = None;
        if rho > cfg.accept_threshold {
            // the Jacobian can overflow where the residuals do not; such a step counts as an overflow
            match provider.linearize(&trial) {
                Ok(lin) if is_finite(&lin) => next = Some(lin),
                Ok(_) => rho = f64::NEG_INFINITY,
                Err(error) => return Err(LmAbort { error, state }),
            }
        }
        let accepted = next.is_some();

        state.lambda = update_lambda(lambda_used, rho, cfg);
        if let Some(lin) = next {
            state.params = trial;
            state.objective = v_new;
            cached = Some(lin);
        }
        state.epoch += 1;
        state.history.push(EpochRecord {
            epoch: state.epoch,
            objective: state.objective,
            lambda: lambda_used,
            rho,
            accepted,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            predicted_flops: flops,
        });
    }
    Ok(LmReport {
        state,
        termination: Termination::MaxEpochs,
    })
}
