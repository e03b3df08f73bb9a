//! Online forward (motor -> latent) and inverse (latent -> motor) models.
//!
//! Motor commands enter and leave the networks through the affine map
//! `[0, 1] <-> [-1, 1]`; latent codes are the standardized encoder codes.

use ndarray::Array2;
use rand::Rng;

use crate::encoder::LatentCode;
use crate::error::{Error, Result};
use crate::nn::{
    fit_epoch, gradcheck, mse_loss, Activation, LayerSpec, Network, OptimizerKind, OptimizerState,
    TrainingBatch,
};
use crate::world::MotorCommand;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub decay: f64,
    pub epochs_per_fit: usize,
    pub minibatch: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0014,
            momentum: 0.8,
            decay: 0.0,
            epochs_per_fit: 1,
            minibatch: 16,
        }
    }
}

impl ModelConfig {
    fn optimizer(&self) -> OptimizerKind {
        OptimizerKind::SgdMomentum {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            decay: self.decay,
        }
    }
}

/// `2 -> 32 -> 320 -> 320 -> latent`, tanh throughout.
pub fn forward_model_spec(latent_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(2, 32, Activation::Tanh),
        LayerSpec::new(32, 320, Activation::Tanh),
        LayerSpec::new(320, 320, Activation::Tanh),
        LayerSpec::new(320, latent_dim, Activation::Tanh),
    ]
}

/// `latent -> latent -> 320 -> 320 -> 2`, tanh throughout.
pub fn inverse_model_spec(latent_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(latent_dim, latent_dim, Activation::Tanh),
        LayerSpec::new(latent_dim, 320, Activation::Tanh),
        LayerSpec::new(320, 320, Activation::Tanh),
        LayerSpec::new(320, 2, Activation::Tanh),
    ]
}

/// A motor command paired with the (standardized) code of what the camera saw there.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorimotorSample {
    /// Observation sequence number within a run.
    pub id: u64,
    pub motor: MotorCommand,
    pub code: LatentCode,
}

fn union_rows<'a>(
    buffer: &'a [SensorimotorSample],
    memory: &'a [SensorimotorSample],
) -> Result<Vec<&'a SensorimotorSample>> {
    if buffer.is_empty() && memory.is_empty() {
        return Err(Error::Empty("no samples to fit"));
    }
    Ok(buffer.iter().chain(memory).collect())
}

fn matrix(rows: usize, cols: usize, flat: Vec<f64>) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::Dimension(e.to_string()))
}

fn check_code(code: &LatentCode, latent_dim: usize) -> Result<()> {
    if code.len() != latent_dim {
        return Err(Error::Dimension(format!(
            "code has {} values, model expects {latent_dim}",
            code.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ForwardModel {
    net: Network,
    opt: OptimizerState,
    cfg: ModelConfig,
}

impl ForwardModel {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        let net = Network::init(&forward_model_spec(latent_dim), rng)?;
        Ok(Self::from_network(net, cfg))
    }

    pub fn from_network(net: Network, cfg: ModelConfig) -> Self {
        let opt = OptimizerState::new(cfg.optimizer(), &net);
        Self { net, opt, cfg }
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn latent_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Predicted code for the camera at `motor`.
    pub fn predict(&self, motor: MotorCommand) -> LatentCode {
        LatentCode(self.net.predict(&motor.to_signed()).expect("2-d input"))
    }

    /// Trains motor -> code on `buffer` followed by `memory`; mean loss of the last epoch.
    pub fn online_fit<R: Rng + ?Sized>(
        &mut self,
        buffer: &[SensorimotorSample],
        memory: &[SensorimotorSample],
        rng: &mut R,
    ) -> Result<f64> {
        let rows = union_rows(buffer, memory)?;
        let l = self.latent_dim();
        let mut inputs = Vec::with_capacity(rows.len() * 2);
        let mut targets = Vec::with_capacity(rows.len() * l);
        for s in &rows {
            check_code(&s.code, l)?;
            inputs.extend(s.motor.to_signed());
            targets.extend_from_slice(s.code.as_slice());
        }
        let batch = TrainingBatch::new(matrix(rows.len(), 2, inputs)?, matrix(rows.len(), l, targets)?)?;
        let mut loss = 0.0;
        for _ in 0..self.cfg.epochs_per_fit {
            loss = fit_epoch(&mut self.net, &batch, &mut self.opt, self.cfg.minibatch, rng)?;
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct InverseModel {
    net: Network,
    opt: OptimizerState,
    cfg: ModelConfig,
}

impl InverseModel {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        let net = Network::init(&inverse_model_spec(latent_dim), rng)?;
        Ok(Self::from_network(net, cfg))
    }

    pub fn from_network(net: Network, cfg: ModelConfig) -> Self {
        let opt = OptimizerState::new(cfg.optimizer(), &net);
        Self { net, opt, cfg }
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Motor command expected to bring the camera to a view encoded as `goal`.
    pub fn predict(&self, goal: &LatentCode) -> Result<MotorCommand> {
        check_code(goal, self.latent_dim())?;
        let out = self.net.predict(goal.as_slice())?;
        Ok(MotorCommand::from_signed([out[0], out[1]]))
    }

    /// Trains code -> motor on `buffer` followed by `memory`; mean loss of the last epoch.
    pub fn online_fit<R: Rng + ?Sized>(
        &mut self,
        buffer: &[SensorimotorSample],
        memory: &[SensorimotorSample],
        rng: &mut R,
    ) -> Result<f64> {
        let rows = union_rows(buffer, memory)?;
        let l = self.latent_dim();
        let mut inputs = Vec::with_capacity(rows.len() * l);
        let mut targets = Vec::with_capacity(rows.len() * 2);
        for s in &rows {
            check_code(&s.code, l)?;
            inputs.extend_from_slice(s.code.as_slice());
            targets.extend(s.motor.to_signed());
        }
        let batch = TrainingBatch::new(matrix(rows.len(), l, inputs)?, matrix(rows.len(), 2, targets)?)?;
        let mut loss = 0.0;
        for _ in 0..self.cfg.epochs_per_fit {
            loss = fit_epoch(&mut self.net, &batch, &mut self.opt, self.cfg.minibatch, rng)?;
        }
        Ok(loss)
    }
}

/// Held-out pair: ground-truth motor position and the code of its image.
pub type TestPair = (MotorCommand, LatentCode);

/// `(forward MSE in code space, inverse MSE in [0, 1] motor space)`, each
/// averaged over the test pairs.
pub fn evaluate_mse(fm: &ForwardModel, im: &InverseModel, testset: &[TestPair]) -> Result<(f64, f64)> {
    if testset.is_empty() {
        return Err(Error::Empty("empty test set"));
    }
    let mut fwd = 0.0;
    let mut inv = 0.0;
    for (motor, code) in testset {
        fwd += mse_loss(fm.predict(*motor).as_slice(), code.as_slice())?;
        let p = im.predict(code)?;
        inv += mse_loss(&[p.x, p.y], &[motor.x, motor.y])?;
    }
    let n = testset.len() as f64;
    Ok((fwd / n, inv / n))
}

/// Gradient check of freshly initialised forward and inverse models on one
/// random sample; returns `(forward error, inverse error)`.
pub fn gradcheck_models<R: Rng + ?Sized>(latent_dim: usize, h: f64, rng: &mut R) -> Result<(f64, f64)> {
    let fwd = Network::init(&forward_model_spec(latent_dim), rng)?;
    let inv = Network::init(&inverse_model_spec(latent_dim), rng)?;
    let motor = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let code: Vec<f64> = (0..latent_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    Ok((gradcheck(&fwd, &motor, &code, h)?, gradcheck(&inv, &code, &motor, h)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(id: u64, x: f64, y: f64, l: usize) -> SensorimotorSample {
        SensorimotorSample {
            id,
            motor: MotorCommand::new(x, y),
            code: LatentCode((0..l).map(|k| ((k as f64) * x - y).sin() * 0.5).collect()),
        }
    }

    fn buffer(l: usize) -> Vec<SensorimotorSample> {
        (0..16)
            .map(|i| sample(i, (i as f64 * 0.13) % 1.0, (i as f64 * 0.29) % 1.0, l))
            .collect()
    }

    #[test]
    fn forward_prediction_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fm = ForwardModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        let m = MotorCommand::new(0.3, 0.9);
        assert_eq!(fm.predict(m), fm.predict(m));
        assert!(fm.predict(m).0.iter().all(|v| v.abs() < 1.0));
        assert_eq!(
            fm.predict(MotorCommand::new(0.5, 0.5)).0,
            fm.net().predict(&[0.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn inverse_prediction_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let im = InverseModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        for s in buffer(8) {
            let p = im.predict(&s.code).unwrap();
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
            assert_eq!(p, im.predict(&s.code).unwrap());
        }
        assert!(im.predict(&LatentCode(vec![0.0; 3])).is_err());
    }

    #[test]
    fn online_fit_row_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut fm = ForwardModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        let mut im = InverseModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        fm.online_fit(&buffer(8), &[], &mut rng).unwrap();
        assert_eq!(fm.optimizer().steps(), 1);
        let memory: Vec<SensorimotorSample> = (0..320).map(|i| sample(100 + i, 0.5, 0.25, 8)).collect();
        im.online_fit(&buffer(8), &memory, &mut rng).unwrap();
        // 336 rows in minibatches of 16
        assert_eq!(im.optimizer().steps(), 21);
        assert!(fm.online_fit(&[], &[], &mut rng).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let cfg = ModelConfig {
            learning_rate: 0.0,
            ..ModelConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fm = ForwardModel::new(8, cfg, &mut rng).unwrap();
        let mut im = InverseModel::new(8, cfg, &mut rng).unwrap();
        let (f0, i0) = (fm.net().clone(), im.net().clone());
        fm.online_fit(&buffer(8), &buffer(8), &mut rng).unwrap();
        im.online_fit(&buffer(8), &buffer(8), &mut rng).unwrap();
        assert_eq!(fm.net(), &f0);
        assert_eq!(im.net(), &i0);
    }

    #[test]
    fn perfectly_fit_batch_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fm = ForwardModel::new(4, ModelConfig::default(), &mut rng).unwrap();
        // targets are the model's own predictions
        let batch: Vec<SensorimotorSample> = (0..16)
            .map(|i| {
                let motor = MotorCommand::new(i as f64 / 15.0, 1.0 - i as f64 / 15.0);
                SensorimotorSample {
                    id: i,
                    motor,
                    code: fm.predict(motor),
                }
            })
            .collect();
        let mut trained = fm.clone();
        let loss = trained.online_fit(&batch, &[], &mut rng).unwrap();
        // single-row and batched products round differently
        assert!(loss < 1e-28, "{loss}");
        for (a, b) in trained.net().layers().iter().zip(fm.net().layers()) {
            let dw = (&a.weights - &b.weights).mapv(f64::abs).fold(0.0, |m: f64, &x| m.max(x));
            assert!(dw < 1e-12, "{dw}");
        }
    }

    #[test]
    fn evaluation_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fm = ForwardModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        let im = InverseModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        let test: Vec<TestPair> = buffer(8).into_iter().map(|s| (s.motor, s.code)).collect();
        let a = evaluate_mse(&fm, &im, &test).unwrap();
        let b = evaluate_mse(&fm, &im, &test).unwrap();
        assert_eq!(a, b);
        assert!(a.0 > 0.0 && a.1 > 0.0);
        let single = vec![test[3].clone()];
        let repeated = vec![test[3].clone(); 50];
        let s = evaluate_mse(&fm, &im, &single).unwrap();
        let r = evaluate_mse(&fm, &im, &repeated).unwrap();
        assert!((s.0 - r.0).abs() < 1e-15 && (s.1 - r.1).abs() < 1e-15);
        assert!(evaluate_mse(&fm, &im, &[]).is_err());
    }

    #[test]
    fn exact_architectures_pass_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fm = ForwardModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        let s = sample(0, 0.2, 0.7, 8);
        assert!(gradcheck(fm.net(), &s.motor.to_signed(), s.code.as_slice(), 1e-5).unwrap() < 1e-4);
        let im = InverseModel::new(8, ModelConfig::default(), &mut rng).unwrap();
        assert!(gradcheck(im.net(), s.code.as_slice(), &s.motor.to_signed(), 1e-5).unwrap() < 1e-4);
    }
}
