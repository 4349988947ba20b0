use super::network::{Parameters, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// One momentum SGD update: `v <- momentum * v - lr * g`, `w <- w + v`.
pub fn sgd_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    velocity: &mut Parameters<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(velocity) {
        return Err(Error::ShapeMismatch(
            "parameters, gradients and velocity differ in shape".into(),
        ));
    }
    let lr = T::cast_from(cfg.learning_rate);
    let mu = T::cast_from(cfg.momentum);
    for ((w, &g), v) in params.values_mut().zip(grads.values()).zip(velocity.values_mut()) {
        *v = mu * *v - lr * g;
        *w = *w + *v;
    }
    Ok(())
}
