//! Dense autoencoder that compresses camera images into latent codes.
//!
//! Pretrained offline and frozen afterwards. Alongside the weights it keeps
//! per-dimension mean and standard deviation of the training codes, so
//! downstream models can work on standardized codes.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::nn::{
    fit_epoch, load_weights, save_weights, Activation, LayerSpec, Network, OptimizerKind,
    OptimizerState, TrainingBatch,
};
use crate::world::{Image, WorldDataset};

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &LatentCode) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population statistics; near-constant dimensions get unit scale.
    pub fn fit(codes: &[LatentCode]) -> Result<Self> {
        let first = codes.first().ok_or(Error::Empty("no codes to standardize"))?;
        let dim = first.len();
        let n = codes.len() as f64;
        let mut mean = vec![0.0; dim];
        for c in codes {
            for (m, v) in mean.iter_mut().zip(&c.0) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for c in codes {
            for ((s, v), m) in var.iter_mut().zip(&c.0).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, code: &LatentCode) -> LatentCode {
        LatentCode(
            code.0
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            minibatch: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: Network,
    decoder: Network,
    img_w: usize,
    img_h: usize,
    latent_dim: usize,
    standardizer: Standardizer,
}

/// Encoder `pixels -> hidden... -> latent` (relu, linear latent) and the
/// mirrored decoder with a sigmoid output layer.
pub fn build_autoencoder<R: Rng + ?Sized>(
    img_w: usize,
    img_h: usize,
    latent_dim: usize,
    hidden: &[usize],
    rng: &mut R,
) -> Result<Autoencoder> {
    if img_w == 0 || img_h == 0 || latent_dim == 0 || hidden.contains(&0) {
        return Err(Error::Config("autoencoder dimensions must be positive".into()));
    }
    let pixels = img_w * img_h;
    let mut widths = vec![pixels];
    widths.extend_from_slice(hidden);
    widths.push(latent_dim);

    let enc_spec: Vec<LayerSpec> = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == widths.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect();
    let rev: Vec<usize> = widths.iter().rev().copied().collect();
    let dec_spec: Vec<LayerSpec> = rev
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == rev.len() {
                Activation::Sigmoid
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect();
    Ok(Autoencoder {
        encoder: Network::init(&enc_spec, rng)?,
        decoder: Network::init(&dec_spec, rng)?,
        img_w,
        img_h,
        latent_dim,
        standardizer: Standardizer::identity(latent_dim),
    })
}

fn image_matrix(images: &[&Image]) -> Result<Array2<f64>> {
    let width = images.first().map_or(0, |im| im.pixels().len());
    let flat: Vec<f64> = images.iter().flat_map(|im| im.to_f64()).collect();
    Array2::from_shape_vec((images.len(), width), flat).map_err(|e| Error::Dimension(e.to_string()))
}

impl Autoencoder {
    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn img_dims(&self) -> (usize, usize) {
        (self.img_w, self.img_h)
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.width() != self.img_w || img.height() != self.img_h {
            return Err(Error::Dimension(format!(
                "image is {}x{}, autoencoder expects {}x{}",
                img.width(),
                img.height(),
                self.img_w,
                self.img_h
            )));
        }
        Ok(())
    }

    /// End-to-end reconstruction training with Adam; returns per-epoch mean loss.
    /// Also refits the code standardizer on `images`.
    pub fn pretrain<R: Rng + ?Sized>(
        &mut self,
        images: &[&Image],
        cfg: &PretrainConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if images.is_empty() {
            return Err(Error::Empty("no images to pretrain on"));
        }
        for img in images {
            self.check_image(img)?;
        }
        let x = image_matrix(images)?;
        let batch = TrainingBatch::new(x.clone(), x)?;
        let mut history = Vec::with_capacity(cfg.epochs);
        if cfg.epochs > 0 {
            let mut net = self.encoder.concat(&self.decoder)?;
            let mut opt = OptimizerState::new(OptimizerKind::adam(cfg.learning_rate), &net);
            for epoch in 0..cfg.epochs {
                let loss = fit_epoch(&mut net, &batch, &mut opt, cfg.minibatch, rng)?;
                log::debug!("autoencoder epoch {epoch}: loss {loss:.6}");
                history.push(loss);
            }
            let (enc, dec) = net.split_at(self.encoder.layers().len())?;
            self.encoder = enc;
            self.decoder = dec;
        }
        let codes = self.encode_many(images)?;
        self.standardizer = Standardizer::fit(&codes)?;
        Ok(history)
    }

    pub fn encode(&self, img: &Image) -> Result<LatentCode> {
        self.check_image(img)?;
        Ok(LatentCode(self.encoder.predict(&img.to_f64())?))
    }

    pub fn encode_many(&self, images: &[&Image]) -> Result<Vec<LatentCode>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        for img in images {
            self.check_image(img)?;
        }
        let codes = self.encoder.predict_batch(image_matrix(images)?.view())?;
        Ok(codes.rows().into_iter().map(|r| LatentCode(r.to_vec())).collect())
    }

    pub fn encode_standardized(&self, img: &Image) -> Result<LatentCode> {
        Ok(self.standardizer.apply(&self.encode(img)?))
    }

    pub fn decode(&self, code: &LatentCode) -> Result<Image> {
        if code.len() != self.latent_dim {
            return Err(Error::Dimension(format!(
                "code has {} values, latent size is {}",
                code.len(),
                self.latent_dim
            )));
        }
        let out = self.decoder.predict(&code.0)?;
        Image::new(
            self.img_w,
            self.img_h,
            out.into_iter().map(|v| v as f32).collect(),
        )
    }

    pub fn reconstruct(&self, img: &Image) -> Result<Image> {
        self.decode(&self.encode(img)?)
    }

    /// Mean per-pixel squared reconstruction error.
    pub fn reconstruction_mse(&self, images: &[&Image]) -> Result<f64> {
        self.reconstruction_error(images, |d| d * d)
    }

    /// Mean per-pixel absolute reconstruction error.
    pub fn reconstruction_mae(&self, images: &[&Image]) -> Result<f64> {
        self.reconstruction_error(images, f64::abs)
    }

    fn reconstruction_error(&self, images: &[&Image], f: impl Fn(f64) -> f64) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::Empty("no images to evaluate"));
        }
        for img in images {
            self.check_image(img)?;
        }
        let x = image_matrix(images)?;
        let y = self.decoder.predict_batch(self.encoder.predict_batch(x.view())?.view())?;
        Ok((&y - &x).iter().map(|&d| f(d)).sum::<f64>() / x.len() as f64)
    }

    /// Writes `encoder.nn`, `decoder.nn` and the `autoencoder.txt` header into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        save_weights(&self.encoder, dir.join("encoder.nn"))?;
        save_weights(&self.decoder, dir.join("decoder.nn"))?;
        let mut kv = KvFile::new();
        kv.set("img_w", self.img_w);
        kv.set("img_h", self.img_h);
        kv.set("latent_dim", self.latent_dim);
        kv.set_list("code_mean", &self.standardizer.mean);
        kv.set_list("code_std", &self.standardizer.std);
        kv.save(dir.join("autoencoder.txt"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header_path = dir.join("autoencoder.txt");
        let kv = KvFile::load(&header_path)?;
        let bad = |reason: String| Error::format(&header_path, reason);
        let img_w: usize = kv.require("img_w")?;
        let img_h: usize = kv.require("img_h")?;
        let latent_dim: usize = kv.require("latent_dim")?;
        let mean: Vec<f64> = kv.get_list("code_mean")?.unwrap_or_else(|| vec![0.0; latent_dim]);
        let std: Vec<f64> = kv.get_list("code_std")?.unwrap_or_else(|| vec![1.0; latent_dim]);
        if mean.len() != latent_dim || std.len() != latent_dim || std.iter().any(|s| !(*s > 0.0)) {
            return Err(bad("standardization vectors do not match latent_dim".into()));
        }
        let encoder = load_weights(dir.join("encoder.nn"))?;
        let decoder = load_weights(dir.join("decoder.nn"))?;
        if encoder.input_dim() != img_w * img_h
            || encoder.output_dim() != latent_dim
            || decoder.input_dim() != latent_dim
            || decoder.output_dim() != img_w * img_h
        {
            return Err(bad("weight shapes disagree with header".into()));
        }
        Ok(Self {
            encoder,
            decoder,
            img_w,
            img_h,
            latent_dim,
            standardizer: Standardizer { mean, std },
        })
    }
}

/// Shuffled split of `n` indices into (train, holdout) with
/// `round(n * holdout_fraction)` held out.
pub fn holdout_split<R: Rng + ?Sized>(n: usize, holdout_fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let held = ((n as f64) * holdout_fraction.clamp(0.0, 1.0)).round() as usize;
    let holdout = idx.split_off(n - held);
    (idx, holdout)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub history: Vec<f64>,
    pub untrained_train_mse: f64,
    pub train_mse: f64,
    pub holdout_mse: f64,
}

/// Builds and pretrains an autoencoder on 90% of the world's cells,
/// reporting reconstruction MSE on both splits.
pub fn pretrain_on_world<R: Rng + ?Sized>(
    world: &WorldDataset,
    latent_dim: usize,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<(Autoencoder, PretrainReport)> {
    if world.cell_count() == 0 {
        return Err(Error::Empty("world has no cells"));
    }
    let mut ae = build_autoencoder(world.img_w(), world.img_h(), latent_dim, &DEFAULT_HIDDEN, rng)?;
    let (train_idx, holdout_idx) = holdout_split(world.cell_count(), 0.1, rng);
    let images = world.images();
    let train: Vec<&Image> = train_idx.iter().map(|&i| &images[i]).collect();
    let holdout: Vec<&Image> = holdout_idx.iter().map(|&i| &images[i]).collect();
    let untrained_train_mse = ae.reconstruction_mse(&train)?;
    let history = ae.pretrain(&train, cfg, rng)?;
    let train_mse = ae.reconstruction_mse(&train)?;
    let holdout_mse = if holdout.is_empty() {
        train_mse
    } else {
        ae.reconstruction_mse(&holdout)?
    };
    Ok((
        ae,
        PretrainReport {
            history,
            untrained_train_mse,
            train_mse,
            holdout_mse,
        },
    ))
}
