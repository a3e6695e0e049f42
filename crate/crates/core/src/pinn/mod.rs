//! Physics-informed training of the mixed displacement-stress networks.
//!
//! The six-term loss is available through two independent routes:
//! [`assemble_loss`] records it on a [`ScalarGraph`](crate::autodiff::ScalarGraph)
//! (exact reference, any closed-form or network fields), and
//! [`BatchLoss`] evaluates it with batched dense kernels for training.

mod batch_loss;
mod collocation;
mod tape_loss;
mod train;

use serde::{Deserialize, Serialize};

pub use batch_loss::BatchLoss;
pub use collocation::CollocationSet;
pub use tape_loss::{assemble_loss, ClosedFormFields, LiftedSolution, TapeFields};
pub use train::{
    train, train_with_observer, AdamConfig, HistoryEntry, Objective, TrainConfig, TrainError, TrainOutcome, Trainer,
};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("autodiff: {0}")]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error("non-finite {what} in loss evaluation")]
    NonFinite { what: &'static str },
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

/// Weights of the constitutive penalty and the data terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig<T> {
    /// Constitutive penalty coefficient, `>= 0`.
    pub eta: T,
    /// Data-term switch, 0 or 1.
    pub alpha: u8,
}

impl<T: Real> LossConfig<T> {
    pub fn new(eta: T, alpha: u8) -> Result<Self, LossError> {
        let cfg = LossConfig { eta, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Boundary value problem defaults: `eta = 0.01`, no data.
    pub fn boundary_value() -> Self {
        LossConfig {
            eta: T::lit(0.01),
            alpha: 0,
        }
    }

    /// Regression defaults: `eta = 0`, data terms on.
    pub fn regression() -> Self {
        LossConfig {
            eta: T::zero(),
            alpha: 1,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.alpha > 1 {
            return Err(LossError::Config(format!("alpha must be 0 or 1, got {}", self.alpha)));
        }
        if !(self.eta >= T::zero()) || !self.eta.is_finite() {
            return Err(LossError::Config(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn uses_data(&self) -> bool {
        self.alpha == 1
    }
}

/// Values of the six loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub mse_gamma_d: T,
    pub mse_f: T,
    pub mse_gamma_n: T,
    pub mse_c: T,
    pub mse_u: T,
    pub mse_sigma: T,
    pub total: T,
}

impl<T: Real> LossBreakdown<T> {
    /// Fills `total = D + f + N + eta C + alpha (u + sigma)`.
    pub fn with_total(mut self, cfg: &LossConfig<T>) -> Self {
        self.total = self.weighted_sum(cfg);
        self
    }

    pub fn weighted_sum(&self, cfg: &LossConfig<T>) -> T {
        let alpha = if cfg.uses_data() { T::one() } else { T::zero() };
        self.mse_gamma_d + self.mse_f + self.mse_gamma_n + cfg.eta * self.mse_c + alpha * (self.mse_u + self.mse_sigma)
    }

    pub fn terms(&self) -> [T; 6] {
        [
            self.mse_gamma_d,
            self.mse_f,
            self.mse_gamma_n,
            self.mse_c,
            self.mse_u,
            self.mse_sigma,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.terms().iter().all(|t| t.is_finite()) && self.total.is_finite()
    }
}
