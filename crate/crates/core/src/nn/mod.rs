//! Dense feed-forward networks with exact backpropagation.
//!
//! Layers compute `a = f(W x + b)` with `W` stored row-major as
//! `(out_dim, in_dim)`. Everything is `f64`; batched inputs are
//! `(rows, in_dim)` matrices.

mod gradcheck;
mod io;
mod optim;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

pub use gradcheck::{gradcheck, GRADCHECK_FLOOR};
pub use io::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC};
pub use optim::{OptimizerKind, OptimizerState, StepOutcome};
pub use train::{fit_epoch, TrainingBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative written in terms of the activation's output.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Linear => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            3 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.in_dim(), self.out_dim(), self.activation)
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|v| v.is_finite())
    }
}

// Every parameter mutation takes a fresh stamp so caches from an older
// parameter state are rejected by `backward`.
static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn next_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<DenseLayer>,
    stamp: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

fn check_chain(specs: impl Iterator<Item = LayerSpec>) -> Result<()> {
    let mut prev: Option<LayerSpec> = None;
    let mut count = 0;
    for (i, spec) in specs.enumerate() {
        count += 1;
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(Error::Dimension(format!("layer {i} has a zero dimension")));
        }
        if let Some(p) = prev {
            if p.out_dim != spec.in_dim {
                return Err(Error::Dimension(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i - 1,
                    p.out_dim,
                    i,
                    spec.in_dim
                )));
            }
        }
        prev = Some(spec);
    }
    if count == 0 {
        return Err(Error::Empty("network has no layers"));
    }
    Ok(())
}

impl Network {
    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (in + out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &[LayerSpec], rng: &mut R) -> Result<Self> {
        check_chain(spec.iter().copied())?;
        let layers = spec
            .iter()
            .map(|s| {
                let bound = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((s.out_dim, s.in_dim), |_| rng.random_range(-bound..=bound));
                DenseLayer {
                    weights,
                    biases: Array1::zeros(s.out_dim),
                    activation: s.activation,
                }
            })
            .collect();
        Ok(Self {
            layers,
            stamp: next_stamp(),
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.out_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i}: {} biases for {} outputs",
                    l.biases.len(),
                    l.out_dim()
                )));
            }
            if !l.is_finite() {
                return Err(Error::Config(format!("layer {i} has non-finite parameters")));
            }
        }
        check_chain(layers.iter().map(DenseLayer::spec))?;
        Ok(Self {
            layers,
            stamp: next_stamp(),
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.stamp = next_stamp();
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(DenseLayer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Appends the layers of `tail` after this network's layers.
    pub fn concat(&self, tail: &Network) -> Result<Network> {
        let mut layers = self.layers.clone();
        layers.extend(tail.layers.iter().cloned());
        Network::from_layers(layers)
    }

    /// Splits into the first `at` layers and the rest.
    pub fn split_at(&self, at: usize) -> Result<(Network, Network)> {
        if at == 0 || at >= self.layers.len() {
            return Err(Error::Dimension(format!(
                "cannot split a {}-layer network at {at}",
                self.layers.len()
            )));
        }
        let head = Network::from_layers(self.layers[..at].to_vec())?;
        let tail = Network::from_layers(self.layers[at..].to_vec())?;
        Ok((head, tail))
    }

    fn check_input_width(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {width} values, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input_width(input.len())?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.dot(&ndarray::ArrayView1::from(&x[..]));
            z += &layer.biases;
            z.mapv_inplace(|v| layer.activation.apply(v));
            x = z.to_vec();
        }
        Ok(x)
    }

    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input_width(inputs.ncols())?;
        let mut x = inputs.to_owned();
        for layer in &self.layers {
            x = layer_forward(layer, x.view());
        }
        Ok(x)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let row = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let (out, cache) = self.forward_batch(row)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input_width(inputs.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.to_owned());
        for layer in &self.layers {
            let next = layer_forward(layer, activations.last().expect("non-empty").view());
            activations.push(next);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((
            out,
            ForwardCache {
                stamp: self.stamp,
                activations,
            },
        ))
    }

    pub fn backward(&self, cache: &ForwardCache, loss_grad: &[f64]) -> Result<Gradients> {
        let g = ArrayView2::from_shape((1, loss_grad.len()), loss_grad)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        self.backward_batch(cache, g)
    }

    /// Exact gradients of the loss given `dL/d(output)` for every row.
    pub fn backward_batch(&self, cache: &ForwardCache, loss_grad: ArrayView2<f64>) -> Result<Gradients> {
        self.check_cache(cache)?;
        let rows = cache.activations[0].nrows();
        if loss_grad.dim() != (rows, self.output_dim()) {
            return Err(Error::Dimension(format!(
                "loss gradient is {:?}, expected ({rows}, {})",
                loss_grad.dim(),
                self.output_dim()
            )));
        }
        let mut grads: Vec<LayerGradient> = Vec::with_capacity(self.layers.len());
        let mut delta = loss_grad.to_owned();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            delta.zip_mut_with(&cache.activations[k + 1], |d, &a| *d *= act.derivative_from_output(a));
            let weights = delta.t().dot(&cache.activations[k]);
            let biases = delta.sum_axis(Axis(0));
            if k > 0 {
                delta = delta.dot(&layer.weights);
            }
            grads.push(LayerGradient { weights, biases });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache(format!(
                "cache holds {} activations for a {}-layer network",
                cache.activations.len(),
                self.layers.len()
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if cache.activations[k].ncols() != layer.in_dim()
                || cache.activations[k + 1].ncols() != layer.out_dim()
            {
                return Err(Error::StaleCache(format!("layer {k} shape differs from cache")));
            }
        }
        if cache.stamp != self.stamp {
            return Err(Error::StaleCache(
                "parameters changed since the forward pass".into(),
            ));
        }
        Ok(())
    }
}

fn layer_forward(layer: &DenseLayer, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.biases;
    let act = layer.activation;
    if act != Activation::Linear {
        z.mapv_inplace(|v| act.apply(v));
    }
    z
}

/// Per-layer inputs and outputs recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// `activations()[0]` is the input; `activations()[k + 1]` is layer `k`'s output.
    pub fn activations(&self) -> &[Array2<f64>] {
        &self.activations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// All gradient entries in layer order, weights (row-major) before biases.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.raw_dim() == l.weights.raw_dim() && g.biases.len() == l.biases.len()
            })
    }
}

pub fn init_network<R: Rng + ?Sized>(spec: &[LayerSpec], rng: &mut R) -> Result<Network> {
    Network::init(spec, rng)
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("prediction has {a} values, target {b}")));
    }
    Ok(())
}

/// Mean over components of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_same_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::Empty("mse of empty vectors"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`mse_loss`] with respect to `pred`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_same_len(pred.len(), target.len())?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect())
}

/// Row-mean of per-row MSE, and its gradient with respect to `pred`.
pub fn batch_mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "prediction is {:?}, target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let (rows, cols) = pred.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("mse of empty batch"));
    }
    let diff = &pred - &target;
    let scale = (rows * cols) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / scale;
    let grad = diff.mapv(|d| 2.0 * d / scale);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_identity() -> Network {
        Network::from_layers(vec![DenseLayer {
            weights: Array2::eye(2),
            biases: Array1::zeros(2),
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    fn zero_layer(act: Activation) -> Network {
        Network::from_layers(vec![DenseLayer {
            weights: Array2::zeros((3, 2)),
            biases: Array1::zeros(3),
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn init_shapes_and_zero_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::init(&[LayerSpec::new(2, 3, Activation::Tanh)], &mut rng).unwrap();
        assert_eq!(net.layers()[0].weights.dim(), (3, 2));
        assert!(net.layers()[0].biases.iter().all(|&b| b == 0.0));
        let bound = (6.0f64 / 5.0).sqrt();
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = [
            LayerSpec::new(2, 5, Activation::Tanh),
            LayerSpec::new(5, 1, Activation::Linear),
        ];
        let a = Network::init(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Network::init(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = Network::init(&spec, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_broken_chain() {
        let spec = [
            LayerSpec::new(2, 3, Activation::Tanh),
            LayerSpec::new(4, 1, Activation::Linear),
        ];
        let err = Network::init(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn forward_identity_and_constant_activations() {
        assert_eq!(linear_identity().predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(zero_layer(Activation::Tanh).predict(&[3.0, -7.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(zero_layer(Activation::Sigmoid).predict(&[3.0, -7.0]).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        assert!(linear_identity().forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_matches_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::init(
            &[
                LayerSpec::new(3, 4, Activation::Relu),
                LayerSpec::new(4, 2, Activation::Sigmoid),
            ],
            &mut rng,
        )
        .unwrap();
        let (out, _) = net.forward(&[0.1, -0.4, 0.9]).unwrap();
        let direct = net.predict(&[0.1, -0.4, 0.9]).unwrap();
        for (a, b) in out.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[3.0], &[0.0]).unwrap(), 9.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::init(
            &[
                LayerSpec::new(2, 4, Activation::Tanh),
                LayerSpec::new(4, 3, Activation::Tanh),
            ],
            &mut rng,
        )
        .unwrap();
        let (_, cache) = net.forward(&[0.2, 0.3]).unwrap();
        let g = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn linear_gradient_matches_closed_form() {
        let net = Network::from_layers(vec![DenseLayer {
            weights: array![[0.5, -1.0], [2.0, 0.25]],
            biases: array![0.1, -0.2],
            activation: Activation::Linear,
        }])
        .unwrap();
        let x = [0.3, -0.7];
        let t = [1.0, 0.5];
        let (y, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &mse_grad(&y, &t).unwrap()).unwrap();
        // 2 (Wx + b - t) x^T / out_dim
        for i in 0..2 {
            let r = 2.0 * (y[i] - t[i]) / 2.0;
            for j in 0..2 {
                assert!((g.layers[0].weights[[i, j]] - r * x[j]).abs() < 1e-15);
            }
            assert!((g.layers[0].biases[i] - r).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let mut net = linear_identity();
        let (_, cache) = net.forward(&[1.0, 1.0]).unwrap();
        net.layers_mut()[0].weights[[0, 0]] = 2.0;
        assert!(matches!(
            net.backward(&cache, &[0.0, 0.0]),
            Err(Error::StaleCache(_))
        ));
        let other = zero_layer(Activation::Tanh);
        let (_, cache) = other.forward(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            linear_identity().backward(&cache, &[0.0, 0.0]),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn concat_split_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Network::init(&[LayerSpec::new(3, 2, Activation::Relu)], &mut rng).unwrap();
        let b = Network::init(&[LayerSpec::new(2, 3, Activation::Sigmoid)], &mut rng).unwrap();
        let joined = a.concat(&b).unwrap();
        let (a2, b2) = joined.split_at(1).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert!(b.concat(&b).is_err());
    }

    proptest::proptest! {
        #[test]
        fn activation_ranges(z in -50.0f64..50.0) {
            let t = Activation::Tanh.apply(z);
            proptest::prop_assert!(t >= -1.0 && t <= 1.0);
            if z.abs() < 15.0 {
                proptest::prop_assert!(t > -1.0 && t < 1.0);
                let s = Activation::Sigmoid.apply(z);
                proptest::prop_assert!(s > 0.0 && s < 1.0);
            }
        }
    }
}
