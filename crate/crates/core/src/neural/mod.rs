//! Multilayer perceptron and 1-D CNN trained with manual backpropagation
//! and Adam.

mod checkpoint;
mod gradcheck;
pub mod layers;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kinematics::Stroke;
use crate::numeric::mix_seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{BatchNorm, Conv1d, Dense, Layer, MaxPool, Mode, Relu, Tensor};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("empty sample set")]
    EmptySet,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input has {got} values, model expects {expected}")]
    InputShape { got: usize, expected: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Sequential stack of layers ending in a single logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// Input shape `(channels, length)`.
    pub input: (usize, usize),
    pub layers: Vec<Layer>,
}

const INFER_CHUNK: usize = 256;

impl Network {
    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        self.layers
            .iter_mut()
            .fold(x, |t, layer| layer.forward(t, mode))
    }

    pub fn backward(&mut self, grad: Tensor) {
        let mut g = grad;
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            for (_, g) in layer.params_mut() {
                g.fill(0.0);
            }
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .map(|(p, _)| p.len())
            .sum()
    }

    /// Layer names with their output shapes `(channels, length)`.
    pub fn shapes(&self) -> Vec<(&'static str, (usize, usize))> {
        let mut shape = self.input;
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(shape);
                (l.name(), shape)
            })
            .collect()
    }

    fn input_size(&self) -> usize {
        self.input.0 * self.input.1
    }

    fn batch(&self, inputs: &[&[f64]]) -> Tensor {
        Tensor::from_samples(inputs, self.input.0, self.input.1)
    }

    /// Inference-mode logits.
    pub fn logits(&mut self, inputs: &[&[f64]]) -> Vec<f64> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFER_CHUNK) {
            let t = self.batch(chunk);
            out.extend(self.forward(t, Mode::Infer).data);
        }
        out
    }

    /// Hex SHA-256 over every parameter and running statistic.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for layer in &self.layers {
            let vecs: Vec<&Vec<f64>> = match layer {
                Layer::Dense(d) => vec![&d.w, &d.b],
                Layer::Conv1d(c) => vec![&c.w, &c.b],
                Layer::BatchNorm(b) => vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var],
                Layer::MaxPool(_) | Layer::Relu(_) => vec![],
            };
            for v in vecs {
                for x in v {
                    h.update(x.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on logits and its gradient per logit.
pub fn bce_with_logits(z: &[f64], y: &[u8]) -> (f64, Vec<f64>) {
    let n = z.len() as f64;
    let mut loss = 0.0;
    let grad = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| {
            let t = y as f64;
            loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            (sigmoid(z) - t) / n
        })
        .collect();
    (loss / n, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub train: TrainOptions,
}

impl MlpConfig {
    pub fn new(input_dim: usize, seed: u64) -> MlpConfig {
        MlpConfig {
            input_dim,
            hidden: vec![12, 12],
            train: TrainOptions {
                learning_rate: 1e-3,
                batch_size: 32,
                max_epochs: 100,
                patience: 10,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub channels: usize,
    pub length: usize,
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub dense: Vec<usize>,
    pub train: TrainOptions,
}

impl CnnConfig {
    pub fn new(seed: u64) -> CnnConfig {
        CnnConfig {
            channels: 3,
            length: STROKE_LENGTH,
            filters: vec![128, 64, 32],
            kernel: 3,
            dense: vec![20, 20],
            train: TrainOptions {
                learning_rate: 1e-5,
                batch_size: 32,
                max_epochs: 99,
                patience: 10,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(MlpConfig),
    Cnn(CnnConfig),
}

impl Architecture {
    pub fn train_options(&self) -> &TrainOptions {
        match self {
            Architecture::Mlp(c) => &c.train,
            Architecture::Cnn(c) => &c.train,
        }
    }

    pub fn train_options_mut(&mut self) -> &mut TrainOptions {
        match self {
            Architecture::Mlp(c) => &mut c.train,
            Architecture::Cnn(c) => &mut c.train,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.train_options();
        if !(t.learning_rate > 0.0) || t.batch_size == 0 {
            return Err(NeuralError::InvalidConfig(
                "learning rate and batch size must be positive".into(),
            ));
        }
        match self {
            Architecture::Mlp(c) => {
                if c.input_dim == 0 {
                    return Err(NeuralError::InvalidConfig(
                        "input_dim must be positive".into(),
                    ));
                }
                if c.hidden.len() != 2 || c.hidden.iter().any(|h| !(6..=18).contains(h)) {
                    return Err(NeuralError::InvalidConfig(
                        "mlp needs two hidden layers of 6 to 18 units".into(),
                    ));
                }
            }
            Architecture::Cnn(c) => {
                let mut l = c.length;
                for _ in &c.filters {
                    if l < c.kernel + 1 {
                        return Err(NeuralError::InvalidConfig(
                            "input too short for the conv stack".into(),
                        ));
                    }
                    l = (l + 1 - c.kernel) / 2;
                }
                if c.kernel == 0 || c.filters.is_empty() || l == 0 {
                    return Err(NeuralError::InvalidConfig("empty conv stack".into()));
                }
            }
        }
        Ok(())
    }

    /// Freshly initialized network; weights depend only on the seed.
    pub fn build(&self) -> Result<Network> {
        self.validate()?;
        let seed = self.train_options().seed;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0]));
        let mut layers = Vec::new();
        let input;
        let mut width;
        match self {
            Architecture::Mlp(c) => {
                input = (c.input_dim, 1);
                width = c.input_dim;
                for &h in &c.hidden {
                    layers.push(Layer::Dense(Dense::new(width, h, &mut rng)));
                    layers.push(Layer::Relu(Relu::default()));
                    width = h;
                }
            }
            Architecture::Cnn(c) => {
                input = (c.channels, c.length);
                let (mut ch, mut l) = input;
                for &f in &c.filters {
                    layers.push(Layer::Conv1d(Conv1d::new(ch, f, c.kernel, &mut rng)));
                    layers.push(Layer::Relu(Relu::default()));
                    layers.push(Layer::MaxPool(MaxPool::default()));
                    layers.push(Layer::BatchNorm(BatchNorm::new(f)));
                    ch = f;
                    l = (l + 1 - c.kernel) / 2;
                }
                width = ch * l;
                for &d in &c.dense {
                    layers.push(Layer::Dense(Dense::new(width, d, &mut rng)));
                    layers.push(Layer::Relu(Relu::default()));
                    width = d;
                }
            }
        }
        layers.push(Layer::Dense(Dense::new(width, 1, &mut rng)));
        Ok(Network { input, layers })
    }
}

/// Inputs (each flattened `(channels, length)`, channel-major) with labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Samples {
        Samples {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn refs(&self) -> Vec<&[f64]> {
        self.inputs.iter().map(Vec::as_slice).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Epoch (1-based) whose weights were restored; 0 means the initial weights.
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation accuracy (%) of the returned weights.
    pub final_accuracy: f64,
    pub initial_weights_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: Architecture,
    pub network: Network,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &mut Network, lr: f64) -> Adam {
        let sizes: Vec<usize> = net
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .map(|(p, _)| p.len())
            .collect();
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, net: &mut Network) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let params = net.layers.iter_mut().flat_map(|l| l.params_mut());
        for ((p, g), (m, v)) in params.zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn check_samples(s: &Samples, width: usize) -> Result<()> {
    if s.is_empty() {
        return Err(NeuralError::EmptySet);
    }
    if let Some(bad) = s.inputs.iter().find(|x| x.len() != width) {
        return Err(NeuralError::InputShape {
            got: bad.len(),
            expected: width,
        });
    }
    if s.labels.iter().all(|&l| l == s.labels[0]) {
        return Err(NeuralError::SingleClassLabels);
    }
    Ok(())
}

fn mean_loss(net: &mut Network, s: &Samples) -> f64 {
    let z = net.logits(&s.refs());
    bce_with_logits(&z, &s.labels).0
}

/// Percentage of correct predictions at threshold 0.5 (0.5 itself is class 1).
pub fn accuracy_from_probabilities(p: &[f64], labels: &[u8]) -> Result<f64> {
    if p.is_empty() {
        return Err(NeuralError::EmptySet);
    }
    let hits = p
        .iter()
        .zip(labels)
        .filter(|(p, l)| ((**p >= 0.5) as u8) == **l)
        .count();
    Ok(hits as f64 / p.len() as f64 * 100.0)
}

impl Model {
    pub fn new(arch: Architecture) -> Result<Model> {
        Ok(Model {
            network: arch.build()?,
            arch,
        })
    }

    pub fn predict_proba(&mut self, inputs: &[Vec<f64>]) -> Vec<f64> {
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        self.network
            .logits(&refs)
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    pub fn accuracy(&mut self, samples: &Samples) -> Result<f64> {
        let p = self.predict_proba(&samples.inputs);
        accuracy_from_probabilities(&p, &samples.labels)
    }

    /// Mini-batch Adam with early stopping on validation loss; the weights
    /// of the best validation epoch are restored before returning.
    pub fn fit(&mut self, train: &Samples, val: &Samples) -> Result<TrainReport> {
        let width = self.network.input_size();
        check_samples(train, width)?;
        check_samples(val, width)?;
        let opts = *self.arch.train_options();
        let initial_weights_digest = self.network.digest();
        let mut adam = Adam::new(&mut self.network, opts.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, &[1]));
        let mut order: Vec<usize> = (0..train.len()).collect();

        let mut best_loss = mean_loss(&mut self.network, val);
        let mut best = self.network.clone();
        let mut best_epoch = 0;
        let mut wait = 0;
        let mut train_loss = Vec::new();
        let mut val_loss = Vec::new();

        for epoch in 1..=opts.max_epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(opts.batch_size) {
                let inputs: Vec<&[f64]> =
                    batch.iter().map(|&i| train.inputs[i].as_slice()).collect();
                let labels: Vec<u8> = batch.iter().map(|&i| train.labels[i]).collect();
                let x = self.network.batch(&inputs);
                self.network.zero_grads();
                let z = self.network.forward(x, Mode::Train);
                let (loss, grad) = bce_with_logits(&z.data, &labels);
                if !loss.is_finite() {
                    return Err(NeuralError::DivergedLoss { epoch });
                }
                total += loss * batch.len() as f64;
                self.network.backward(Tensor {
                    n: batch.len(),
                    c: 1,
                    l: 1,
                    data: grad,
                });
                adam.step(&mut self.network);
            }
            train_loss.push(total / train.len() as f64);
            let vl = mean_loss(&mut self.network, val);
            if !vl.is_finite() {
                return Err(NeuralError::DivergedLoss { epoch });
            }
            val_loss.push(vl);
            if vl < best_loss {
                best_loss = vl;
                best = self.network.clone();
                best_epoch = epoch;
                wait = 0;
            } else {
                wait += 1;
                if wait >= opts.patience {
                    break;
                }
            }
        }
        self.network = best;
        Ok(TrainReport {
            epochs_run: train_loss.len(),
            best_epoch,
            train_loss,
            val_loss,
            final_accuracy: self.accuracy(val)?,
            initial_weights_digest,
        })
    }
}

pub fn mlp_train(
    train: &Samples,
    val: &Samples,
    config: &MlpConfig,
) -> Result<(Model, TrainReport)> {
    let mut model = Model::new(Architecture::Mlp(config.clone()))?;
    let report = model.fit(train, val)?;
    Ok((model, report))
}

pub fn cnn_train(
    train: &Samples,
    val: &Samples,
    config: &CnnConfig,
) -> Result<(Model, TrainReport)> {
    let mut model = Model::new(Architecture::Cnn(config.clone()))?;
    let report = model.fit(train, val)?;
    Ok((model, report))
}

pub const STROKE_LENGTH: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStroke {
    /// Channel-major `(x, y, t)` rows of `length` values each.
    pub data: Vec<f64>,
    /// The stroke was longer than `length` and was center-cropped.
    pub cropped: bool,
}

/// Re-references x, y and t to the stroke start and zero-pads to `length`
/// (half the padding before, the remainder after).
pub fn cnn_prepare_stroke(stroke: &Stroke, length: usize) -> PreparedStroke {
    let s = &stroke.samples;
    let (keep, cropped) = if s.len() > length {
        let skip = (s.len() - length) / 2;
        (&s[skip..skip + length], true)
    } else {
        (&s[..], false)
    };
    let origin = keep[0];
    let before = (length - keep.len()) / 2;
    let mut data = vec![0.0; 3 * length];
    for (i, p) in keep.iter().enumerate() {
        data[before + i] = p.x - origin.x;
        data[length + before + i] = p.y - origin.y;
        data[2 * length + before + i] = p.t - origin.t;
    }
    PreparedStroke { data, cropped }
}
