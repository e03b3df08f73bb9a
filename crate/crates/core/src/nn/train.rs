use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{batch_mse, Network, OptimizerState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    inputs: Array2<f64>,
    targets: Array2<f64>,
}

impl TrainingBatch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Empty("training batch has no rows"));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension(format!(
                "{} input rows but {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        let to_matrix = |rows: &[Vec<f64>]| -> Result<Array2<f64>> {
            let width = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != width) {
                return Err(Error::Dimension("ragged rows".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Array2::from_shape_vec((rows.len(), width), flat)
                .map_err(|e| Error::Dimension(e.to_string()))
        };
        Self::new(to_matrix(inputs)?, to_matrix(targets)?)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }
}

/// One pass over `batch` in shuffled minibatches of `minibatch_size` rows
/// (the last one may be short), one optimizer step per minibatch.
///
/// Returns the mean of the minibatch losses measured before each update.
pub fn fit_epoch<R: Rng + ?Sized>(
    net: &mut Network,
    batch: &TrainingBatch,
    state: &mut OptimizerState,
    minibatch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if minibatch_size == 0 {
        return Err(Error::Config("minibatch size must be at least 1".into()));
    }
    if batch.is_empty() {
        return Err(Error::Empty("training batch has no rows"));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(rng);

    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in order.chunks(minibatch_size) {
        let x = batch.inputs.select(Axis(0), chunk);
        let t = batch.targets.select(Axis(0), chunk);
        let (y, cache) = net.forward_batch(x.view())?;
        let (loss, grad) = batch_mse(y.view(), t.view())?;
        let grads = net.backward_batch(&cache, grad.view())?;
        state.step(net, &grads)?;
        total += loss;
        count += 1;
    }
    Ok(total / count as f64)
}
