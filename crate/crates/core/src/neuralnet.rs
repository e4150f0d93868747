//! Dense autoencoder trained from scratch.
//!
//! The encoder `f` maps an observation of width N to a latent vector of
//! width Q; the decoder `g` maps it back to width N. Training minimises the
//! batch mean of the per-observation mean absolute error plus
//! `lambda * sum(w^2)` over every weight (biases are not penalised), using
//! plain mini-batch gradient descent. The subgradient of `|e|` at `e = 0`
//! is taken as 0, as is the ReLU derivative at 0.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "fuelguard-autoencoder/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }
}

/// Encoder and decoder layer stacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl LayerPlan {
    /// Mirror-image stack: `n -> hidden[0] -> ... -> hidden[last]` and back.
    /// The last entry of `hidden` is the latent width. Hidden layers use
    /// ReLU, the latent code is linear (a ReLU bottleneck this narrow tends
    /// to lose units for good) and the reconstruction is a sigmoid.
    pub fn symmetric(n_features: usize, hidden: &[usize]) -> Self {
        let mut widths = vec![n_features];
        widths.extend_from_slice(hidden);
        let encoder = widths
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
        let back: Vec<usize> = widths.iter().rev().copied().collect();
        let decoder = back
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == back.len() {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                };
                LayerSpec::new(w[0], w[1], act)
            })
            .collect();
        Self { encoder, decoder }
    }

    /// `n -> 8 -> 4 -> 8 -> n`.
    pub fn default_for(n_features: usize) -> Self {
        Self::symmetric(n_features, &[8, 4])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return bad("encoder and decoder need at least one layer each".into());
        }
        let all: Vec<&LayerSpec> = self.encoder.iter().chain(&self.decoder).collect();
        if let Some(l) = all.iter().find(|l| l.input_width == 0 || l.output_width == 0) {
            return bad(format!("layer widths must be positive, got {}->{}", l.input_width, l.output_width));
        }
        for pair in all.windows(2) {
            if pair[0].output_width != pair[1].input_width {
                return bad(format!(
                    "layer output width {} does not feed next input width {}",
                    pair[0].output_width, pair[1].input_width
                ));
            }
        }
        let n = self.encoder[0].input_width;
        let out = self.decoder[self.decoder.len() - 1].output_width;
        if out != n {
            return bad(format!("decoder output width {out} differs from input width {n}"));
        }
        Ok(())
    }
}

/// Fully connected layer; `weights` is row-major `output_width x input_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            weights: vec![0.0; spec.input_width * spec.output_width],
            biases: vec![0.0; spec.output_width],
        }
    }

    /// Writes pre-activations into `z` and activations into `a`.
    fn forward_into(&self, x: &[f64], z: &mut [f64], a: &mut [f64]) {
        let n_in = self.spec.input_width;
        for (o, row) in self.weights.chunks_exact(n_in).enumerate() {
            let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            z[o] = s + self.biases[o];
            a[o] = self.spec.activation.apply(z[o]);
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.spec.output_width];
        let mut a = vec![0.0; self.spec.output_width];
        self.forward_into(x, &mut z, &mut a);
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    encoder: Vec<DenseLayer>,
    decoder: Vec<DenseLayer>,
}

impl AutoencoderModel {
    pub fn from_layers(encoder: Vec<DenseLayer>, decoder: Vec<DenseLayer>) -> Result<Self> {
        let plan = LayerPlan {
            encoder: encoder.iter().map(|l| l.spec).collect(),
            decoder: decoder.iter().map(|l| l.spec).collect(),
        };
        plan.validate()?;
        for l in encoder.iter().chain(&decoder) {
            if l.weights.len() != l.spec.input_width * l.spec.output_width || l.biases.len() != l.spec.output_width {
                return Err(Error::InvalidArgument("layer parameter shape does not match its spec".into()));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("model parameters must be finite".into()));
            }
        }
        Ok(Self { encoder, decoder })
    }

    pub fn plan(&self) -> LayerPlan {
        LayerPlan {
            encoder: self.encoder.iter().map(|l| l.spec).collect(),
            decoder: self.decoder.iter().map(|l| l.spec).collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.encoder[0].spec.input_width
    }

    pub fn latent_width(&self) -> usize {
        self.encoder[self.encoder.len() - 1].spec.output_width
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    /// Encoder layers followed by decoder layers.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    fn n_layers(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    /// Sum of squared weights, the quantity the L2 penalty scales.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers().flat_map(|l| &l.weights).map(|w| w * w).sum()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_width(), x.len())?;
        Ok(self.encoder.iter().fold(x.to_vec(), |h, l| l.forward(&h)))
    }

    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len(self.latent_width(), h.len())?;
        Ok(self.decoder.iter().fold(h.to_vec(), |v, l| l.forward(&v)))
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    pub fn to_json(&self, meta: &ModelMetadata) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            encoder: self.encoder.iter().map(LayerFile::from).collect(),
            decoder: self.decoder.iter().map(LayerFile::from).collect(),
            scaler: meta.scaler.clone(),
            train_config: meta.train_config,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<(Self, ModelMetadata)> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format `{}`, expected `{MODEL_FORMAT}`",
                file.format
            )));
        }
        let encoder = file.encoder.into_iter().map(DenseLayer::try_from).collect::<Result<_>>()?;
        let decoder = file.decoder.into_iter().map(DenseLayer::try_from).collect::<Result<_>>()?;
        let model = Self::from_layers(encoder, decoder)?;
        Ok((
            model,
            ModelMetadata {
                scaler: file.scaler,
                train_config: file.train_config,
            },
        ))
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Extra fields stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMetadata {
    /// Path of the scaler file fitted with this model.
    pub scaler: Option<String>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    encoder: Vec<LayerFile>,
    decoder: Vec<LayerFile>,
    #[serde(default)]
    scaler: Option<String>,
    #[serde(default)]
    train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    input_width: usize,
    output_width: usize,
    activation: Activation,
    /// One row per output unit.
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl From<&DenseLayer> for LayerFile {
    fn from(l: &DenseLayer) -> Self {
        Self {
            input_width: l.spec.input_width,
            output_width: l.spec.output_width,
            activation: l.spec.activation,
            weights: l.weights.chunks(l.spec.input_width).map(<[f64]>::to_vec).collect(),
            biases: l.biases.clone(),
        }
    }
}

impl TryFrom<LayerFile> for DenseLayer {
    type Error = Error;

    fn try_from(f: LayerFile) -> Result<Self> {
        if f.weights.len() != f.output_width || f.weights.iter().any(|r| r.len() != f.input_width) {
            return Err(Error::InvalidArgument(format!(
                "weight array is not {}x{}",
                f.output_width, f.input_width
            )));
        }
        Ok(DenseLayer {
            spec: LayerSpec::new(f.input_width, f.output_width, f.activation),
            weights: f.weights.concat(),
            biases: f.biases,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    #[default]
    GlorotUniform,
}

/// Glorot-uniform weights from the seeded generator, zero biases.
pub fn init_model(plan: &LayerPlan, seed: u64) -> Result<AutoencoderModel> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |spec: &LayerSpec| {
        let limit = glorot_limit(spec.input_width, spec.output_width);
        let dist = Uniform::new_inclusive(-limit, limit);
        DenseLayer {
            spec: *spec,
            weights: (0..spec.input_width * spec.output_width)
                .map(|_| dist.sample(&mut rng))
                .collect(),
            biases: vec![0.0; spec.output_width],
        }
    };
    let encoder = plan.encoder.iter().map(&mut make).collect();
    let decoder = plan.decoder.iter().map(&mut make).collect();
    AutoencoderModel::from_layers(encoder, decoder)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Per-feature absolute errors and their mean.
pub fn mae_loss(x: &[f64], x_hat: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_len(x.len(), x_hat.len())?;
    if x.is_empty() {
        return Err(Error::Empty("observation vector"));
    }
    let per_feature: Vec<f64> = x.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).collect();
    let mean = per_feature.iter().sum::<f64>() / per_feature.len() as f64;
    Ok((per_feature, mean))
}

/// Batch-mean reconstruction MAE without the penalty term.
pub fn reconstruction_loss(model: &AutoencoderModel, batch: &FeatureMatrix) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    check_len(model.input_width(), batch.n_features())?;
    let mut total = 0.0;
    for x in batch.observations() {
        total += mae_loss(x, &model.reconstruct(x)?)?.1;
    }
    Ok(total / batch.n_obs() as f64)
}

/// Reconstruction MAE plus `lambda * sum(w^2)`.
pub fn objective(model: &AutoencoderModel, batch: &FeatureMatrix, lambda: f64) -> Result<f64> {
    Ok(reconstruction_loss(model, batch)? + lambda * model.weight_norm_sq())
}

/// Gradient of one layer's parameters, same layout as [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients for every layer, encoder first.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    fn zeros_like(model: &AutoencoderModel) -> Self {
        Self {
            layers: model
                .layers()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    fn reset(&mut self) {
        for g in &mut self.layers {
            g.weights.fill(0.0);
            g.biases.fill(0.0);
        }
    }
}

/// Reusable forward/backward buffers.
struct Workspace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &AutoencoderModel) -> Self {
        let mut a = vec![vec![0.0; model.input_width()]];
        let mut z = Vec::new();
        let mut delta = Vec::new();
        for l in model.layers() {
            z.push(vec![0.0; l.spec.output_width]);
            a.push(vec![0.0; l.spec.output_width]);
            delta.push(vec![0.0; l.spec.output_width]);
        }
        Self { z, a, delta }
    }

    fn forward(&mut self, model: &AutoencoderModel, x: &[f64]) {
        self.a[0].copy_from_slice(x);
        for (i, layer) in model.layers().enumerate() {
            let (prev, next) = self.a.split_at_mut(i + 1);
            layer.forward_into(&prev[i], &mut self.z[i], &mut next[0]);
        }
    }

    /// Accumulates `scale * d(mean |x - x_hat|)/d(params)` into `grads` and
    /// returns the observation's mean absolute error.
    fn accumulate(&mut self, model: &AutoencoderModel, x: &[f64], scale: f64, grads: &mut Gradients) -> f64 {
        self.forward(model, x);
        let layers: Vec<&DenseLayer> = model.layers().collect();
        let last = layers.len() - 1;
        let n = x.len() as f64;
        let mut loss = 0.0;
        {
            let out = &self.a[last + 1];
            let act = layers[last].spec.activation;
            for j in 0..out.len() {
                let e = x[j] - out[j];
                loss += e.abs();
                let sign = if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                // d|x - y|/dy = -sign(x - y)
                self.delta[last][j] = -sign * scale / n * act.derivative(self.z[last][j], out[j]);
            }
        }
        for l in (0..=last).rev() {
            let layer = layers[l];
            let n_in = layer.spec.input_width;
            let g = &mut grads.layers[l];
            let input = &self.a[l];
            for (o, d) in self.delta[l].iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                for (gw, v) in g.weights[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *gw += d * v;
                }
            }
            if l > 0 {
                let act = layers[l - 1].spec.activation;
                let (lower, upper) = self.delta.split_at_mut(l);
                let below = &mut lower[l - 1];
                for (k, b) in below.iter_mut().enumerate() {
                    let back: f64 = upper[0]
                        .iter()
                        .enumerate()
                        .map(|(o, d)| d * layer.weights[o * n_in + k])
                        .sum();
                    *b = back * act.derivative(self.z[l - 1][k], self.a[l][k]);
                }
            }
        }
        loss / n
    }
}

fn add_penalty(model: &AutoencoderModel, lambda: f64, grads: &mut Gradients) {
    if lambda == 0.0 {
        return;
    }
    for (layer, g) in model.layers().zip(&mut grads.layers) {
        for (gw, w) in g.weights.iter_mut().zip(&layer.weights) {
            *gw += 2.0 * lambda * w;
        }
    }
}

/// Analytic gradient of [`objective`] over `batch`.
pub fn gradients(model: &AutoencoderModel, batch: &FeatureMatrix, lambda: f64) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    check_len(model.input_width(), batch.n_features())?;
    let mut grads = Gradients::zeros_like(model);
    let mut ws = Workspace::new(model);
    let scale = 1.0 / batch.n_obs() as f64;
    for x in batch.observations() {
        ws.accumulate(model, x, scale, &mut grads);
    }
    add_penalty(model, lambda, &mut grads);
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 weight on the squared weights.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub init_scheme: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 32,
            seed: 0,
            init_scheme: InitScheme::GlorotUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch reconstruction MAE (penalty excluded) on the training set and
/// on the validation set. `validation_loss` stays empty when no validation
/// observations were supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "validation_loss"])?;
        for (i, t) in self.train_loss.iter().enumerate() {
            let v = self.validation_loss.get(i).map(f64::to_string).unwrap_or_default();
            w.write_record([(i + 1).to_string(), t.to_string(), v])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mini-batch gradient descent for `cfg.epochs` epochs, reshuffling the
/// training observations each epoch from a generator seeded by `cfg.seed`.
pub fn train(
    model: &AutoencoderModel,
    normal_train: &FeatureMatrix,
    validation: &FeatureMatrix,
    cfg: &TrainConfig,
) -> Result<(AutoencoderModel, TrainTrace)> {
    cfg.validate()?;
    check_len(model.input_width(), normal_train.n_features())?;
    check_len(model.input_width(), validation.n_features())?;
    let mut model = model.clone();
    let mut trace = TrainTrace::default();
    if cfg.epochs == 0 {
        return Ok((model, trace));
    }
    if normal_train.is_empty() {
        return Err(Error::Empty("training matrix"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..normal_train.n_obs()).collect();
    let mut grads = Gradients::zeros_like(&model);
    let mut ws = Workspace::new(&model);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.reset();
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += ws.accumulate(&model, normal_train.observation(i), scale, &mut grads);
            }
            add_penalty(&model, cfg.lambda, &mut grads);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            for (layer, g) in model.layers_mut().zip(&grads.layers) {
                for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= cfg.learning_rate * d;
                }
                for (v, d) in layer.biases.iter_mut().zip(&g.biases) {
                    *v -= cfg.learning_rate * d;
                }
            }
        }
        let train_loss = reconstruction_loss(&model, normal_train)?;
        if !train_loss.is_finite() || model.layers().flat_map(|l| &l.weights).any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        trace.train_loss.push(train_loss);
        if !validation.is_empty() {
            trace.validation_loss.push(reconstruction_loss(&model, validation)?);
        }
    }
    debug_assert_eq!(model.n_layers(), grads.layers.len());
    Ok((model, trace))
}

/// Smallest distance of any ReLU pre-activation from 0, or of any
/// reconstruction error from 0, for observation `x`. Finite differences
/// are only meaningful when this margin exceeds the step size.
pub fn kink_margin(model: &AutoencoderModel, x: &[f64]) -> Result<f64> {
    check_len(model.input_width(), x.len())?;
    let mut ws = Workspace::new(model);
    ws.forward(model, x);
    let mut margin = f64::INFINITY;
    for (layer, z) in model.layers().zip(&ws.z) {
        if layer.spec.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
    }
    let out = &ws.a[ws.a.len() - 1];
    Ok(x.iter().zip(out).fold(margin, |m, (a, b)| m.min((a - b).abs())))
}

/// Largest relative disagreement between the analytic gradient of
/// [`objective`] at the single observation `x` and central differences with
/// step `epsilon`, over every weight and bias.
///
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|)`;
/// parameters where both are below 1e-10 count as exact.
pub fn gradient_check(model: &AutoencoderModel, x: &[f64], lambda: f64, epsilon: f64) -> Result<f64> {
    let batch = FeatureMatrix::from_observations(
        (0..x.len()).map(|i| format!("x{i}")).collect(),
        [x],
    )?;
    let analytic = gradients(model, &batch, lambda)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let n_layers = model.n_layers();
    for l in 0..n_layers {
        for is_bias in [false, true] {
            let len = {
                let layer = probe.layers().nth(l).expect("layer index");
                if is_bias {
                    layer.biases.len()
                } else {
                    layer.weights.len()
                }
            };
            for p in 0..len {
                let numeric = {
                    let mut eval = |delta: f64| -> Result<f64> {
                        let layer = probe.layers_mut().nth(l).expect("layer index");
                        let slot = if is_bias { &mut layer.biases[p] } else { &mut layer.weights[p] };
                        let orig = *slot;
                        *slot = orig + delta;
                        let f = objective(&probe, &batch, lambda);
                        let layer = probe.layers_mut().nth(l).expect("layer index");
                        let slot = if is_bias { &mut layer.biases[p] } else { &mut layer.weights[p] };
                        *slot = orig;
                        f
                    };
                    (eval(epsilon)? - eval(-epsilon)?) / (2.0 * epsilon)
                };
                let g = &analytic.layers[l];
                let a = if is_bias { g.biases[p] } else { g.weights[p] };
                let scale = a.abs().max(numeric.abs());
                if scale > 1e-10 {
                    worst = worst.max((a - numeric).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}
