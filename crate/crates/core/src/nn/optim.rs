use ndarray::Zip;

use super::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `v <- momentum * v - lr_t * g; w <- w + v` with `lr_t = lr / (1 + decay * t)`.
    SgdMomentum {
        learning_rate: f64,
        momentum: f64,
        decay: f64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub const fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerKind::SgdMomentum {
            learning_rate,
            momentum,
            decay: 0.0,
        }
    }

    pub const fn adam(learning_rate: f64) -> Self {
        OptimizerKind::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerKind::SgdMomentum { learning_rate, .. } => learning_rate,
            OptimizerKind::Adam { learning_rate, .. } => learning_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    SkippedNonFinite,
}

/// Optimizer hyperparameters plus per-parameter auxiliary buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    // velocity (sgd) or first moment (adam)
    first: Gradients,
    // second moment; adam only
    second: Option<Gradients>,
    steps: u64,
    skipped: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, net: &Network) -> Self {
        let second = match kind {
            OptimizerKind::Adam { .. } => Some(Gradients::zeros_like(net)),
            OptimizerKind::SgdMomentum { .. } => None,
        };
        Self {
            kind,
            first: Gradients::zeros_like(net),
            second,
            steps: 0,
            skipped: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Steps rejected because of non-finite gradients.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<StepOutcome> {
        if !grads.matches(net) || !self.first.matches(net) {
            return Err(Error::Dimension(
                "gradients or optimizer buffers do not match the network".into(),
            ));
        }
        if !grads.is_finite() {
            self.skipped += 1;
            log::warn!(
                "skipping optimizer step {}: non-finite gradient",
                self.steps + self.skipped
            );
            return Ok(StepOutcome::SkippedNonFinite);
        }
        match self.kind {
            OptimizerKind::SgdMomentum {
                learning_rate,
                momentum,
                decay,
            } => {
                let lr = learning_rate / (1.0 + decay * self.steps as f64);
                for ((layer, vel), g) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(self.first.layers.iter_mut())
                    .zip(&grads.layers)
                {
                    Zip::from(&mut layer.weights)
                        .and(&mut vel.weights)
                        .and(&g.weights)
                        .for_each(|w, v, &g| {
                            *v = momentum * *v - lr * g;
                            *w += *v;
                        });
                    Zip::from(&mut layer.biases)
                        .and(&mut vel.biases)
                        .and(&g.biases)
                        .for_each(|w, v, &g| {
                            *v = momentum * *v - lr * g;
                            *w += *v;
                        });
                }
            }
            OptimizerKind::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => {
                let t = (self.steps + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let second = self.second.as_mut().expect("adam keeps a second moment");
                let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                };
                for (((layer, m), v), g) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(self.first.layers.iter_mut())
                    .zip(second.layers.iter_mut())
                    .zip(&grads.layers)
                {
                    Zip::from(&mut layer.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&g.weights)
                        .for_each(|w, m, v, &g| update(w, m, v, g));
                    Zip::from(&mut layer.biases)
                        .and(&mut m.biases)
                        .and(&mut v.biases)
                        .and(&g.biases)
                        .for_each(|w, m, v, &g| update(w, m, v, g));
                }
            }
        }
        self.steps += 1;
        Ok(StepOutcome::Applied)
    }
}
