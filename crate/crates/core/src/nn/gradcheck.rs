use super::{mse_grad, mse_loss, Network};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so parameters whose true
/// gradient is ~0 are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Largest relative disagreement between backpropagated gradients of the
/// single-sample MSE loss and central differences with step `h`, over
/// every weight and bias.
///
/// Perturbing one parameter of layer `k` only moves one pre-activation of
/// that layer, so each loss evaluation re-runs the network from that unit
/// onward instead of from the input.
pub fn gradcheck(net: &Network, input: &[f64], target: &[f64], h: f64) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    if target.len() != net.output_dim() {
        return Err(Error::Dimension(format!(
            "target has {} values, network outputs {}",
            target.len(),
            net.output_dim()
        )));
    }
    let (out, cache) = net.forward(input)?;
    let grads = net.backward(&cache, &mse_grad(&out, target)?)?;

    let layers = net.layers();
    let acts: Vec<Vec<f64>> = cache.activations().iter().map(|a| a.row(0).to_vec()).collect();
    let pre: Vec<Vec<f64>> = layers
        .iter()
        .zip(&acts)
        .map(|(l, x)| {
            (0..l.out_dim())
                .map(|r| l.biases[r] + l.weights.row(r).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
                .collect()
        })
        .collect();

    let last = layers.len() - 1;
    let loss_with_unit = |k: usize, unit: usize, z: f64| -> f64 {
        let a_new = layers[k].activation.apply(z);
        if k == last {
            let mut y = acts[k + 1].clone();
            y[unit] = a_new;
            return mse_loss(&y, target).expect("lengths checked");
        }
        let shift = a_new - acts[k + 1][unit];
        let next = &layers[k + 1];
        let mut a: Vec<f64> = pre[k + 1]
            .iter()
            .enumerate()
            .map(|(r, &zr)| next.activation.apply(zr + next.weights[[r, unit]] * shift))
            .collect();
        for layer in &layers[k + 2..] {
            a = (0..layer.out_dim())
                .map(|r| {
                    let s = layer.biases[r]
                        + layer.weights.row(r).iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
                    layer.activation.apply(s)
                })
                .collect();
        }
        mse_loss(&a, target).expect("lengths checked")
    };

    let mut worst: f64 = 0.0;
    for (k, layer) in layers.iter().enumerate() {
        let x = &acts[k];
        for unit in 0..layer.out_dim() {
            let z = pre[k][unit];
            for j in 0..=layer.in_dim() {
                // j == in_dim is the bias
                let (dz, analytic) = if j < layer.in_dim() {
                    (h * x[j], grads.layers[k].weights[[unit, j]])
                } else {
                    (h, grads.layers[k].biases[unit])
                };
                let numeric = (loss_with_unit(k, unit, z + dz) - loss_with_unit(k, unit, z - dz)) / (2.0 * h);
                let denom = analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}
