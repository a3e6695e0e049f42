use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::elasticity::ManufacturedProblem;
use crate::network::MixedSolution;
use crate::scalar::Real;

use super::{BatchLoss, CollocationSet, LossBreakdown, LossConfig, LossError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            learning_rate: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub adam: AdamConfig<T>,
    pub epochs: usize,
    /// Seed used to initialize the networks of a run.
    pub seed: u64,
    pub log_every: usize,
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.adam.learning_rate >= T::zero()) {
            return Err(TrainError::Config("learning rate must be >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(TrainError::Config("log_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training aborted at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: LossError },
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry<T> {
    pub epoch: usize,
    pub breakdown: LossBreakdown<T>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub solution: MixedSolution<T>,
    pub history: Vec<HistoryEntry<T>>,
    pub epochs_completed: usize,
    /// Set when training stopped on a non-finite loss or gradient; `solution`
    /// then holds the last parameters with a finite loss.
    pub error: Option<TrainError>,
}

/// A differentiable training objective over a [`MixedSolution`].
pub trait Objective<T> {
    /// Loss at `sol`. When `grad` is given it is overwritten with the
    /// gradient of the total in [`MixedSolution::flat_parameters`] order.
    fn evaluate(
        &self,
        sol: &MixedSolution<T>,
        grad: Option<&mut [T]>,
        full_report: bool,
    ) -> Result<LossBreakdown<T>, LossError>;
}

impl<T: Real> Objective<T> for BatchLoss<T> {
    fn evaluate(
        &self,
        sol: &MixedSolution<T>,
        grad: Option<&mut [T]>,
        full_report: bool,
    ) -> Result<LossBreakdown<T>, LossError> {
        BatchLoss::evaluate(self, sol, grad, full_report)
    }
}

/// Full-batch Adam over the concatenated parameters of the five networks.
pub struct Trainer<T, O = BatchLoss<T>> {
    solution: MixedSolution<T>,
    loss: O,
    adam: AdamConfig<T>,
    params: Vec<T>,
    previous: Vec<T>,
    /// Whether `previous` differs from `params` by one undoable update.
    undoable: bool,
    grad: Vec<T>,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real, O: Objective<T>> Trainer<T, O> {
    pub fn new(solution: MixedSolution<T>, loss: O, adam: AdamConfig<T>) -> Self {
        let params = solution.flat_parameters();
        let n = params.len();
        Trainer {
            solution,
            loss,
            adam,
            previous: params.clone(),
            undoable: false,
            params,
            grad: vec![T::zero(); n],
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn parameters(&self) -> &[T] {
        &self.params
    }

    /// Restores the parameters held before the most recent update. Adam
    /// moments are kept.
    pub fn rollback(&mut self) {
        if !self.undoable {
            return;
        }
        self.undoable = false;
        self.step -= 1;
        self.params.copy_from_slice(&self.previous);
        self.solution
            .set_flat_parameters(&self.params)
            .expect("parameter count is fixed");
    }

    pub fn solution(&self) -> &MixedSolution<T> {
        &self.solution
    }

    pub fn into_solution(self) -> MixedSolution<T> {
        self.solution
    }

    pub fn loss(&self) -> &O {
        &self.loss
    }

    /// Loss at the current parameters without updating them.
    pub fn evaluate(&self, full_report: bool) -> Result<LossBreakdown<T>, LossError> {
        self.loss.evaluate(&self.solution, None, full_report)
    }

    /// Number of updates reflected in the current parameters.
    pub fn updates(&self) -> usize {
        self.step as usize
    }

    /// One Adam step. Returns the loss at the parameters *before* the update.
    ///
    /// If the loss or gradient at the current parameters is not finite, the
    /// previous update is undone and the error returned; if the update itself
    /// is not finite, the parameters are left untouched.
    pub fn step(&mut self, full_report: bool) -> Result<LossBreakdown<T>, LossError> {
        let breakdown = match self.loss.evaluate(&self.solution, Some(&mut self.grad), full_report) {
            Ok(b) => b,
            Err(e) => {
                self.rollback();
                return Err(e);
            }
        };
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        let one = T::one();
        let bc1 = one - beta1.powi(self.step);
        let bc2 = one - beta2.powi(self.step);
        let mut next = self.params.clone();
        let (mut m, mut v) = (self.m.clone(), self.v.clone());
        for i in 0..next.len() {
            let g = self.grad[i];
            m[i] = beta1 * m[i] + (one - beta1) * g;
            v[i] = beta2 * v[i] + (one - beta2) * g * g;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            next[i] = next[i] - learning_rate * mh / (vh.sqrt() + epsilon);
        }
        if next.iter().any(|p| !p.is_finite()) {
            self.step -= 1;
            return Err(LossError::NonFinite { what: "parameter update" });
        }
        self.m = m;
        self.v = v;
        self.previous = std::mem::replace(&mut self.params, next);
        self.undoable = true;
        self.solution
            .set_flat_parameters(&self.params)
            .expect("parameter count is fixed");
        Ok(breakdown)
    }
}

pub fn train<T: Real>(
    sol: MixedSolution<T>,
    coll: &CollocationSet<T>,
    problem: &ManufacturedProblem<T>,
    loss_cfg: LossConfig<T>,
    train_cfg: &TrainConfig<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    train_with_observer(sol, coll, problem, loss_cfg, train_cfg, &mut |_| {})
}

/// Runs `epochs` Adam steps. History holds the loss at epoch 0, every
/// `log_every` epochs, and after the final step (epoch = `epochs`).
pub fn train_with_observer<T: Real>(
    sol: MixedSolution<T>,
    coll: &CollocationSet<T>,
    problem: &ManufacturedProblem<T>,
    loss_cfg: LossConfig<T>,
    train_cfg: &TrainConfig<T>,
    observer: &mut dyn FnMut(&HistoryEntry<T>),
) -> Result<TrainOutcome<T>, TrainError> {
    train_cfg.validate()?;
    let loss = BatchLoss::new(coll, problem, loss_cfg)?;
    let mut trainer = Trainer::new(sol, loss, train_cfg.adam);
    let start = Instant::now();
    let mut history = Vec::new();
    let mut record = |epoch: usize, breakdown: LossBreakdown<T>, history: &mut Vec<HistoryEntry<T>>| {
        let entry = HistoryEntry {
            epoch,
            breakdown,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        observer(&entry);
        history.push(entry);
    };
    for epoch in 0..train_cfg.epochs {
        let log = epoch % train_cfg.log_every == 0;
        match trainer.step(log) {
            Ok(b) => {
                if log {
                    record(epoch, b, &mut history);
                }
            }
            Err(e) => {
                return Ok(TrainOutcome {
                    epochs_completed: trainer.updates(),
                    solution: trainer.into_solution(),
                    history,
                    error: Some(TrainError::Diverged { epoch, source: e }),
                });
            }
        }
    }
    let epochs = train_cfg.epochs;
    match trainer.evaluate(true) {
        Ok(b) => {
            record(epochs, b, &mut history);
            Ok(TrainOutcome {
                solution: trainer.into_solution(),
                history,
                epochs_completed: epochs,
                error: None,
            })
        }
        Err(e) => {
            trainer.rollback();
            Ok(TrainOutcome {
                epochs_completed: trainer.updates(),
                solution: trainer.into_solution(),
                history,
                error: Some(TrainError::Diverged { epoch: epochs, source: e }),
            })
        }
    }
}
