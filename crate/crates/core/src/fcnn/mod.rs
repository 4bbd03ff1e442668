//! The gradient-domain denoiser: six same-size convolutions with ReLU after
//! the first five.
//!
//! | layer | kernel | in → out | pad |
//! |-------|--------|----------|-----|
//! | conv1 | 5×5    | 1 → 64   | 2   |
//! | conv2–conv5 | 3×3 | 64 → 64 | 1 |
//! | conv6 | 3×3    | 64 → 1   | 1   |
//!
//! Stride is 1 everywhere. Each pipeline stage owns its own weights; one
//! weight set serves both gradient orientations by transposing the vertical
//! field.

mod conv;
pub mod train;

use rand::Rng as _;

use crate::error::{shape_err, Error, Result};
use crate::field::{GradientField, RealField};
use crate::rng;

use conv::ConvShape;

pub use train::{
    l1_loss, l1_subgradient, l2_loss, sgd_step, train_denoiser, xavier_init, LossKind, TrainConfig, TrainOutcome,
    TrainingPair,
};

/// Static description of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub pad: usize,
}

/// Width of the hidden layers.
pub const FEATURES: usize = 64;

pub const ARCHITECTURE: [LayerSpec; 6] = [
    LayerSpec { name: "conv1", out_channels: FEATURES, in_channels: 1, kernel: 5, pad: 2 },
    LayerSpec { name: "conv2", out_channels: FEATURES, in_channels: FEATURES, kernel: 3, pad: 1 },
    LayerSpec { name: "conv3", out_channels: FEATURES, in_channels: FEATURES, kernel: 3, pad: 1 },
    LayerSpec { name: "conv4", out_channels: FEATURES, in_channels: FEATURES, kernel: 3, pad: 1 },
    LayerSpec { name: "conv5", out_channels: FEATURES, in_channels: FEATURES, kernel: 3, pad: 1 },
    LayerSpec { name: "conv6", out_channels: 1, in_channels: FEATURES, kernel: 3, pad: 1 },
];

/// Smallest field side the denoiser accepts.
pub const MIN_INPUT: usize = 5;

/// A convolution with `[out][in][kh][kw]` weights and stride 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub pad: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            name: spec.name.to_string(),
            out_channels: spec.out_channels,
            in_channels: spec.in_channels,
            kernel_h: spec.kernel,
            kernel_w: spec.kernel,
            pad: spec.pad,
            weights: vec![0.0; spec.out_channels * spec.in_channels * spec.kernel * spec.kernel],
            bias: vec![0.0; spec.out_channels],
        }
    }

    pub fn taps(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    #[inline]
    pub fn weight_index(&self, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_h + i) * self.kernel_w + j
    }

    fn shape(&self, h: usize, w: usize) -> ConvShape {
        ConvShape {
            in_ch: self.in_channels,
            out_ch: self.out_channels,
            kh: self.kernel_h,
            kw: self.kernel_w,
            pad_h: self.pad,
            pad_w: self.pad,
            h,
            w,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kernel_h % 2 == 0 || self.kernel_w % 2 == 0 || self.kernel_h != self.kernel_w {
            return Err(Error::Architecture(format!("{}: kernel must be square and odd", self.name)));
        }
        if 2 * self.pad + 1 != self.kernel_h {
            return Err(Error::Architecture(format!(
                "{}: pad {} does not preserve size for a {}x{} kernel",
                self.name, self.pad, self.kernel_h, self.kernel_w
            )));
        }
        if self.weights.len() != self.out_channels * self.taps() || self.bias.len() != self.out_channels {
            return Err(Error::Length(format!("{}: parameter count does not match shape", self.name)));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(())
    }

    fn matches(&self, spec: &LayerSpec) -> bool {
        self.name == spec.name
            && self.out_channels == spec.out_channels
            && self.in_channels == spec.in_channels
            && self.kernel_h == spec.kernel
            && self.kernel_w == spec.kernel
            && self.pad == spec.pad
    }
}

/// An ordered chain of convolutions, ReLU after every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserWeights {
    layers: Vec<ConvLayer>,
}

impl DenoiserWeights {
    /// Any single-channel-in, single-channel-out chain of size-preserving
    /// layers. Use [`check_architecture`](Self::check_architecture) to
    /// insist on the full six-layer network.
    pub fn from_layers(layers: Vec<ConvLayer>) -> Result<Self> {
        let (first, last) = match (layers.first(), layers.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Architecture("no layers".into())),
        };
        if first.in_channels != 1 || last.out_channels != 1 {
            return Err(Error::Architecture("network must map one channel to one channel".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Architecture(format!(
                    "{} emits {} channels but {} expects {}",
                    pair[0].name, pair[0].out_channels, pair[1].name, pair[1].in_channels
                )));
            }
        }
        Ok(Self { layers })
    }

    /// The full network with every parameter zero.
    pub fn zeros() -> Self {
        Self { layers: ARCHITECTURE.iter().map(ConvLayer::zeros).collect() }
    }

    /// Xavier-uniform weights and zero biases; layer `l` draws from
    /// substream `l` of `seed`.
    pub fn xavier(seed: u64) -> Self {
        Self { layers: ARCHITECTURE.iter().enumerate().map(|(l, s)| xavier_init(s, rng::derive_seed(seed, l as u64))).collect() }
    }

    /// Weights that reproduce the input exactly.
    ///
    /// conv1 splits the input into `+g` and `−g` channels so both signs
    /// survive the ReLUs; the middle layers pass those two channels through;
    /// conv6 recombines them as `(+g) − (−g)`.
    pub fn identity_probe() -> Self {
        let mut w = Self::zeros();
        let l0 = &mut w.layers[0];
        let (c0, c1) = (l0.weight_index(0, 0, 2, 2), l0.weight_index(1, 0, 2, 2));
        l0.weights[c0] = 1.0;
        l0.weights[c1] = -1.0;
        for l in &mut w.layers[1..5] {
            for ch in 0..2 {
                let idx = l.weight_index(ch, ch, 1, 1);
                l.weights[idx] = 1.0;
            }
        }
        let l5 = &mut w.layers[5];
        let (p, n) = (l5.weight_index(0, 0, 1, 1), l5.weight_index(0, 1, 1, 1));
        l5.weights[p] = 1.0;
        l5.weights[n] = -1.0;
        w
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Fails unless the layers are exactly the six-layer table above.
    pub fn check_architecture(&self) -> Result<()> {
        if self.layers.len() != ARCHITECTURE.len() {
            return Err(Error::Architecture(format!(
                "expected {} layers, found {}",
                ARCHITECTURE.len(),
                self.layers.len()
            )));
        }
        for (l, spec) in self.layers.iter().zip(&ARCHITECTURE) {
            if !l.matches(spec) {
                return Err(Error::Architecture(format!(
                    "layer {} is {}x{}x{}x{} pad {}, expected {} {}x{}x{}x{} pad {}",
                    l.name,
                    l.kernel_h,
                    l.kernel_w,
                    l.in_channels,
                    l.out_channels,
                    l.pad,
                    spec.name,
                    spec.kernel,
                    spec.kernel,
                    spec.in_channels,
                    spec.out_channels,
                    spec.pad
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, g: &RealField) -> Result<()> {
        if g.height() < MIN_INPUT || g.width() < MIN_INPUT {
            return shape_err(format!(
                "denoiser input {}x{} smaller than {MIN_INPUT}x{MIN_INPUT}",
                g.height(),
                g.width()
            ));
        }
        Ok(())
    }

    /// Applies the network.
    pub fn forward(&self, g: &GradientField) -> Result<GradientField> {
        Ok(self.forward_tape(g)?.output)
    }

    /// Applies the network and keeps the activations needed by
    /// [`backward`](Self::backward).
    pub fn forward_tape(&self, g: &GradientField) -> Result<Tape> {
        self.check_input(g)?;
        let (h, w) = g.dims();
        let mut col = Vec::new();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut act = g.data().to_vec();
        let last = self.layers.len() - 1;
        for (n, layer) in self.layers.iter().enumerate() {
            let mut out = conv::forward(&layer.shape(h, w), &layer.weights, &layer.bias, &act, &mut col);
            if n < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut act, out));
        }
        let output = RealField::new(h, w, act)?;
        Ok(Tape { height: h, width: w, inputs, output })
    }

    /// Reverse-mode gradients of `⟨upstream, forward(g)⟩` with respect to every
    /// parameter and, when `want_input` is set, the input field.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: &GradientField,
        want_input: bool,
    ) -> Result<(Gradients, Option<GradientField>)> {
        let mut grads = Gradients::zeros_like(self);
        let input = self.accumulate_backward(tape, upstream, want_input, &mut grads)?;
        Ok((grads, input))
    }

    /// As [`backward`](Self::backward), accumulating into `grads`.
    pub fn accumulate_backward(
        &self,
        tape: &Tape,
        upstream: &GradientField,
        want_input: bool,
        grads: &mut Gradients,
    ) -> Result<Option<GradientField>> {
        let (h, w) = (tape.height, tape.width);
        if upstream.dims() != (h, w) {
            return shape_err(format!(
                "upstream {}x{} does not match output {h}x{w}",
                upstream.height(),
                upstream.width()
            ));
        }
        let mut col = Vec::new();
        let mut delta = upstream.data().to_vec();
        for n in (0..self.layers.len()).rev() {
            let layer = &self.layers[n];
            let input = &tape.inputs[n];
            let need = n > 0 || want_input;
            let g = &mut grads.layers[n];
            let grad_in = conv::backward(
                &layer.shape(h, w),
                &layer.weights,
                input,
                &delta,
                &mut g.weights,
                &mut g.bias,
                need,
                &mut col,
            );
            match grad_in {
                Some(mut d) if n > 0 => {
                    // The layer input is a ReLU output, so its sign is the mask.
                    for (v, a) in d.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    delta = d;
                }
                Some(d) => return Ok(Some(RealField::new(h, w, d)?)),
                None => return Ok(None),
            }
        }
        unreachable!("loop returns at layer 0")
    }

    /// Gradient of `⟨upstream, forward(g)⟩` with respect to `g` alone.
    pub fn input_gradient(&self, tape: &Tape, upstream: &GradientField) -> Result<GradientField> {
        let (h, w) = (tape.height, tape.width);
        if upstream.dims() != (h, w) {
            return shape_err(format!(
                "upstream {}x{} does not match output {h}x{w}",
                upstream.height(),
                upstream.width()
            ));
        }
        let mut col = Vec::new();
        let mut delta = upstream.data().to_vec();
        for n in (0..self.layers.len()).rev() {
            let layer = &self.layers[n];
            delta = conv::input_backward(&layer.shape(h, w), &layer.weights, &delta, &mut col);
            if n > 0 {
                for (v, a) in delta.iter_mut().zip(&tape.inputs[n]) {
                    if *a <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        RealField::new(h, w, delta)
    }

    /// Denoises both orientations with one weight set: `f(gh)` and
    /// `transpose(f(transpose(gw)))`.
    pub fn denoise_gradients(&self, gh: &GradientField, gw: &GradientField) -> Result<(GradientField, GradientField)> {
        let zh = self.forward(gh)?;
        let zw = self.forward(&gw.transpose())?.transpose();
        Ok((zh, zw))
    }
}

/// Activations recorded by [`DenoiserWeights::forward_tape`].
#[derive(Clone, Debug)]
pub struct Tape {
    height: usize,
    width: usize,
    inputs: Vec<Vec<f64>>,
    output: GradientField,
}

impl Tape {
    pub fn output(&self) -> &GradientField {
        &self.output
    }

    pub fn into_output(self) -> GradientField {
        self.output
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-parameter values shaped like a [`DenoiserWeights`]; used for
/// gradients and momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(w: &DenoiserWeights) -> Self {
        Self {
            layers: w
                .layers
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `f(g)` for the given weights.
pub fn fcnn_forward(w: &DenoiserWeights, g: &GradientField) -> Result<GradientField> {
    w.forward(g)
}

/// Gradients of `⟨upstream, f(g)⟩` with respect to the parameters and `g`.
pub fn fcnn_backward(
    w: &DenoiserWeights,
    g: &GradientField,
    upstream: &GradientField,
) -> Result<(Gradients, GradientField)> {
    let tape = w.forward_tape(g)?;
    let (grads, input) = w.backward(&tape, upstream, true)?;
    Ok((grads, input.expect("input gradient requested")))
}

pub fn denoise_gradients(
    w: &DenoiserWeights,
    gh: &GradientField,
    gw: &GradientField,
) -> Result<(GradientField, GradientField)> {
    w.denoise_gradients(gh, gw)
}

/// A small random chain for tests and gradient checks: `channels` hidden
/// features, `depth` layers, first layer 5×5 and the rest 3×3.
pub fn random_chain(channels: usize, depth: usize, scale: f64, seed: u64) -> DenoiserWeights {
    assert!(depth >= 1);
    let mut r = rng::seeded(seed);
    let mut layers = Vec::with_capacity(depth);
    for n in 0..depth {
        let in_ch = if n == 0 { 1 } else { channels };
        let out_ch = if n + 1 == depth { 1 } else { channels };
        let (kernel, pad) = if n == 0 { (5, 2) } else { (3, 1) };
        let spec = LayerSpec { name: "probe", out_channels: out_ch, in_channels: in_ch, kernel, pad };
        let mut layer = ConvLayer::zeros(&spec);
        layer.name = format!("conv{}", n + 1);
        layer.weights.iter_mut().for_each(|v| *v = scale * r.random_range(-1.0..1.0));
        layer.bias.iter_mut().for_each(|v| *v = 0.1 * scale * r.random_range(-1.0..1.0));
        layers.push(layer);
    }
    DenoiserWeights::from_layers(layers).expect("valid chain")
}
