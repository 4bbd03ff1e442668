//! Denoiser losses, initialization, and mini-batch SGD with momentum.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::{ConvLayer, DenoiserWeights, Gradients, LayerSpec};
use crate::error::{shape_err, Error, Result};
use crate::field::{GradientField, Image, RealField};
use crate::rng;

/// `(1/n)·(‖pred_h − true_h‖₁ + ‖pred_w − true_w‖₁)` for one sample.
pub fn l1_loss(
    pred_h: &GradientField,
    pred_w: &GradientField,
    true_h: &GradientField,
    true_w: &GradientField,
    n: usize,
) -> Result<f64> {
    pred_h.check_dims(true_h, "l1_loss horizontal")?;
    pred_w.check_dims(true_w, "l1_loss vertical")?;
    if n == 0 {
        return Err(Error::Param("loss normalizer must be at least 1".into()));
    }
    let sum = |a: &RealField, b: &RealField| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Ok((sum(pred_h, true_h) + sum(pred_w, true_w)) / n as f64)
}

/// `sign(pred − target)/n` per pixel, zero where the residual is exactly zero.
pub fn l1_subgradient(pred: &RealField, target: &RealField, n: usize) -> Result<RealField> {
    let inv = 1.0 / n.max(1) as f64;
    pred.zip_map(target, |p, t| {
        let r = p - t;
        if r > 0.0 {
            inv
        } else if r < 0.0 {
            -inv
        } else {
            0.0
        }
    })
}

/// `(1/n)·‖pred − target‖₂²`, the squared-error alternative.
pub fn l2_loss(pred: &RealField, target: &RealField, n: usize) -> Result<f64> {
    pred.check_dims(target, "l2_loss")?;
    Ok(pred.data().iter().zip(target.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n.max(1) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

impl LossKind {
    fn value_and_grad(self, pred: &RealField, target: &RealField, n: usize) -> Result<(f64, RealField)> {
        match self {
            LossKind::L1 => {
                let v = pred.data().iter().zip(target.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
                Ok((v, l1_subgradient(pred, target, n)?))
            }
            LossKind::L2 => {
                let inv = 2.0 / n as f64;
                Ok((l2_loss(pred, target, n)?, pred.zip_map(target, |p, t| inv * (p - t))?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Train on random `crop × crop` windows instead of whole fields.
    pub crop: Option<usize>,
    /// Bias learning rate as a multiple of `learning_rate`.
    pub bias_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.95, batch_size: 16, iterations: 1000, seed: 0, loss: LossKind::L1, crop: None, bias_lr_scale: 1.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Param(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Param(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        if !(self.bias_lr_scale >= 0.0) || !self.bias_lr_scale.is_finite() {
            return Err(Error::Param(format!("bias learning-rate scale {} must be non-negative", self.bias_lr_scale)));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be at least 1".into()));
        }
        if let Some(c) = self.crop {
            if c < super::MIN_INPUT {
                return Err(Error::Param(format!("crop {c} below the denoiser minimum")));
            }
        }
        Ok(())
    }
}

/// `v ← μ·v − lr·g; w ← w + v`, with `lr · bias_lr_scale` for biases.
pub fn sgd_step(weights: &mut DenoiserWeights, grads: &Gradients, velocity: &mut Gradients, cfg: &TrainConfig) {
    let (mu, lr) = (cfg.momentum, cfg.learning_rate);
    let lr_b = lr * cfg.bias_lr_scale;
    for ((layer, g), v) in weights.layers.iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        for ((w, g), v) in layer.weights.iter_mut().zip(&g.weights).zip(&mut v.weights) {
            *v = mu * *v - lr * g;
            *w += *v;
        }
        for ((b, g), v) in layer.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
            *v = mu * *v - lr_b * g;
            *b += *v;
        }
    }
}

/// Uniform weights on `±sqrt(6/(fan_in + fan_out))` with
/// `fan_in = in·kh·kw` and `fan_out = out·kh·kw`; zero biases.
pub fn xavier_init(spec: &LayerSpec, seed: u64) -> ConvLayer {
    let mut layer = ConvLayer::zeros(spec);
    let area = spec.kernel * spec.kernel;
    let bound = (6.0 / ((spec.in_channels + spec.out_channels) * area) as f64).sqrt();
    let mut r = rng::seeded(seed);
    layer.weights.iter_mut().for_each(|w| *w = r.random_range(-bound..bound));
    layer
}

/// One supervised example. Gradient pairs feed the vertical orientation
/// through the transpose, so a pair contributes two fields to the loss.
#[derive(Clone, Debug)]
pub enum TrainingPair {
    Gradient { input: (GradientField, GradientField), target: (GradientField, GradientField) },
    Intensity { input: Image, target: Image },
}

impl TrainingPair {
    /// `(input, target)` fields in the orientation the network sees.
    pub fn oriented(&self) -> Vec<(RealField, RealField)> {
        match self {
            TrainingPair::Gradient { input, target } => vec![
                (input.0.clone(), target.0.clone()),
                (input.1.transpose(), target.1.transpose()),
            ],
            TrainingPair::Intensity { input, target } => vec![(input.clone(), target.clone())],
        }
    }

    fn check(&self) -> Result<()> {
        for (a, b) in self.oriented() {
            a.check_dims(&b, "training pair")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: DenoiserWeights,
    /// Mini-batch loss before each update.
    pub loss_log: Vec<f64>,
}

/// Loss of `weights` against the whole set (batch normalizer = set size).
pub fn dataset_loss(weights: &DenoiserWeights, pairs: &[TrainingPair], loss: LossKind) -> Result<f64> {
    let n = pairs.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let parts: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|p| {
            let mut total = 0.0;
            for (x, t) in p.oriented() {
                total += loss.value_and_grad(&weights.forward(&x)?, &t, n)?.0;
            }
            Ok(total)
        })
        .collect();
    parts.into_iter().sum()
}

fn random_window(
    x: &RealField,
    t: &RealField,
    crop: Option<usize>,
    r: &mut rng::Rng,
) -> Result<(RealField, RealField)> {
    match crop {
        Some(c) if c < x.height() || c < x.width() => {
            let (ch, cw) = (c.min(x.height()), c.min(x.width()));
            let top = r.random_range(0..=x.height() - ch);
            let left = r.random_range(0..=x.width() - cw);
            Ok((x.crop(top, left, ch, cw)?, t.crop(top, left, ch, cw)?))
        }
        _ => Ok((x.clone(), t.clone())),
    }
}

/// Mini-batch SGD on the chosen loss, starting from `init` (Xavier from the
/// stage-derived seed when `None`).
///
/// Batches are drawn by reshuffling the set each epoch. Per-example
/// gradients may be computed in parallel; they are summed in batch order so
/// the result does not depend on the thread count.
pub fn train_denoiser(
    stage: usize,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    init: Option<DenoiserWeights>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for p in pairs {
        p.check()?;
    }
    let mut weights = init.unwrap_or_else(|| DenoiserWeights::xavier(rng::derive_seed(cfg.seed, stage as u64)));
    let mut velocity = Gradients::zeros_like(&weights);
    let mut order_rng = rng::substream(cfg.seed, stage as u64);
    let mut order: Vec<usize> = Vec::new();
    let mut loss_log = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..pairs.len()).collect();
                order.shuffle(&mut order_rng);
            }
            batch.push(order.pop().expect("refilled above"));
        }
        let n = batch.len();
        let crop_seed = rng::derive_seed(cfg.seed, ((stage as u64) << 32) | it as u64);
        let w = &weights;
        let parts: Vec<Result<(Gradients, f64)>> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &idx)| {
                let mut r = rng::substream(crop_seed, slot as u64);
                let mut grads = Gradients::zeros_like(w);
                let mut loss = 0.0;
                for (x, t) in pairs[idx].oriented() {
                    let (x, t) = random_window(&x, &t, cfg.crop, &mut r)?;
                    let tape = w.forward_tape(&x)?;
                    let (v, up) = cfg.loss.value_and_grad(tape.output(), &t, n)?;
                    loss += v;
                    w.accumulate_backward(&tape, &up, false, &mut grads)?;
                }
                Ok((grads, loss))
            })
            .collect();
        let mut total = Gradients::zeros_like(&weights);
        let mut loss = 0.0;
        for part in parts {
            let (g, l) = part?;
            total.add_assign(&g);
            loss += l;
        }
        if !loss.is_finite() || !total.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("denoiser training diverged"));
        }
        loss_log.push(loss);
        sgd_step(&mut weights, &total, &mut velocity, cfg);
        log::debug!("stage {stage} iter {it} loss {loss:.6}");
    }
    Ok(TrainOutcome { weights, loss_log })
}

/// Shape helper for callers assembling pairs from whole-image lists.
pub fn gradient_pairs(inputs: &[Image], targets: &[Image]) -> Result<Vec<TrainingPair>> {
    if inputs.len() != targets.len() {
        return shape_err(format!("{} inputs for {} targets", inputs.len(), targets.len()));
    }
    Ok(inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| TrainingPair::Gradient {
            input: crate::deconv::grad_extract(x),
            target: crate::deconv::grad_extract(t),
        })
        .collect())
}
