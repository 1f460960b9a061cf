//! RMSProp with geometric per-epoch learning-rate decay.
//!
//! The update is the classic two-liner, applied elementwise per parameter
//! tensor:
//!
//! ```text
//! E ← β·E + (1 − β)·g²
//! w ← w − η·g / (√E + ε)
//! ```
//!
//! After each epoch the learning rate decays by 5% down to a floor:
//! η ← max(lr_floor, η·(1 − lr_decay)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Optimizer hyperparameters as they appear in the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    /// Initial learning rate η.
    pub lr: f64,
    /// Per-epoch decay factor: η ← η·(1 − lr_decay).
    pub lr_decay: f64,
    /// Decay never takes η below this.
    pub lr_floor: f64,
    /// Moving-average coefficient β for the squared-gradient accumulator.
    pub beta: f64,
    /// Stabilizer ε added to √E before dividing.
    pub epsilon: f64,
}

impl Default for OptimConfig {
    fn default() -> OptimConfig {
        OptimConfig {
            lr: 0.001,
            lr_decay: 0.05,
            lr_floor: 1e-5,
            beta: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!("beta {} must be in (0, 1)", self.beta)));
        }
        if self.lr <= 0.0 {
            return Err(Error::config(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.lr_decay) {
            return Err(Error::config(format!("lr_decay {} must be in [0, 1)", self.lr_decay)));
        }
        if self.lr_floor <= 0.0 || self.lr_floor > self.lr {
            return Err(Error::config(format!(
                "lr_floor {} must be in (0, lr]",
                self.lr_floor
            )));
        }
        if self.epsilon < 0.0 {
            return Err(Error::config(format!("epsilon {} must be >= 0", self.epsilon)));
        }
        Ok(())
    }
}

/// Mutable optimizer state: the squared-gradient accumulators (one per
/// parameter tensor, addressed by a stable slot index) plus the current
/// learning rate.
#[derive(Debug, Clone)]
pub struct RmsPropState {
    pub config: OptimConfig,
    /// Current learning rate; starts at `config.lr`, decays per epoch.
    pub eta: f64,
    accumulators: Vec<Tensor>,
}

impl RmsPropState {
    pub fn new(config: OptimConfig) -> Result<RmsPropState> {
        config.validate()?;
        Ok(RmsPropState { config, eta: config.lr, accumulators: Vec::new() })
    }

    /// One RMSProp update for the parameter tensor registered at `slot`.
    ///
    /// Slots must be visited in a stable order; a new slot may only appear
    /// directly after the highest existing one (the accumulator is then
    /// created zero-initialized). `site` names the parameter in error messages.
    pub fn rmsprop_step(
        &mut self,
        slot: usize,
        param: &mut Tensor,
        grad: &Tensor,
        site: &str,
    ) -> Result<()> {
        if !param.same_shape(grad) {
            return Err(Error::usage(format!(
                "{site}: parameter shape {:?} does not match gradient shape {:?}",
                param.shape(),
                grad.shape()
            )));
        }
        grad.check_finite(site)?;
        if slot == self.accumulators.len() {
            self.accumulators.push(Tensor::zeros(param.shape()));
        }
        let acc = self
            .accumulators
            .get_mut(slot)
            .ok_or_else(|| Error::usage(format!("{site}: optimizer slot {slot} out of order")))?;
        if !acc.same_shape(param) {
            return Err(Error::usage(format!(
                "{site}: accumulator shape {:?} does not match parameter shape {:?}",
                acc.shape(),
                param.shape()
            )));
        }
        let beta = self.config.beta;
        let eps = self.config.epsilon;
        let eta = self.eta;
        for ((w, &g), e) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(acc.data_mut())
        {
            *e = beta * *e + (1.0 - beta) * g * g;
            *w -= eta * g / (e.sqrt() + eps);
        }
        Ok(())
    }

    /// End-of-epoch decay: η ← max(lr_floor, η·(1 − lr_decay)).
    pub fn decay_learning_rate(&mut self) {
        self.eta = (self.eta * (1.0 - self.config.lr_decay)).max(self.config.lr_floor);
    }

    /// Accumulator for `slot`, if a step has registered it (used by tests).
    pub fn accumulator(&self, slot: usize) -> Option<&Tensor> {
        self.accumulators.get(slot)
    }
}
