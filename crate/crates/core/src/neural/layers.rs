//! Layers with hand-written forward and backward passes over `(n, c, l)`
//! tensors.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major tensor of shape `(n, c, l)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, l: usize) -> Tensor {
        Tensor {
            n,
            c,
            l,
            data: vec![0.0; n * c * l],
        }
    }

    pub fn from_samples(samples: &[&[f64]], c: usize, l: usize) -> Tensor {
        let mut data = Vec::with_capacity(samples.len() * c * l);
        for s in samples {
            assert_eq!(s.len(), c * l, "sample size does not match ({c}, {l})");
            data.extend_from_slice(s);
        }
        Tensor {
            n: samples.len(),
            c,
            l,
            data,
        }
    }

    fn sample(&self, i: usize) -> &[f64] {
        let s = self.c * self.l;
        &self.data[i * s..(i + 1) * s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, running averages updated.
    Train,
    /// Running averages in batch norm.
    Infer,
}

fn he_uniform(rng: &mut impl Rng, fan_in: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..count)
        .map(|_| rng.random_range(-limit..limit))
        .collect()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(skip)]
    pub gw: Vec<f64>,
    #[serde(skip)]
    pub gb: Vec<f64>,
    #[serde(skip)]
    cache: Tensor,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Dense {
        Dense {
            inputs,
            outputs,
            w: he_uniform(rng, inputs, inputs * outputs),
            b: vec![0.0; outputs],
            gw: vec![0.0; inputs * outputs],
            gb: vec![0.0; outputs],
            cache: Tensor::default(),
        }
    }

    fn forward(&mut self, x: Tensor) -> Tensor {
        assert_eq!(x.c * x.l, self.inputs, "dense input width");
        let mut y = Tensor::zeros(x.n, self.outputs, 1);
        for i in 0..x.n {
            let xi = x.sample(i);
            for o in 0..self.outputs {
                y.data[i * self.outputs + o] =
                    self.b[o] + dot(&self.w[o * self.inputs..(o + 1) * self.inputs], xi);
            }
        }
        self.cache = x;
        y
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let x = &self.cache;
        let mut gx = Tensor::zeros(x.n, x.c, x.l);
        for i in 0..x.n {
            let xi = x.sample(i);
            for o in 0..self.outputs {
                let g = gy.data[i * self.outputs + o];
                self.gb[o] += g;
                let row = o * self.inputs..(o + 1) * self.inputs;
                axpy(g, xi, &mut self.gw[row.clone()]);
                axpy(
                    g,
                    &self.w[row],
                    &mut gx.data[i * self.inputs..(i + 1) * self.inputs],
                );
            }
        }
        gx
    }
}

/// Valid (unpadded) 1-D convolution, stride 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Layout `[out][in][k]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(skip)]
    pub gw: Vec<f64>,
    #[serde(skip)]
    pub gb: Vec<f64>,
    #[serde(skip)]
    cache: Tensor,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Conv1d {
        let count = out_channels * in_channels * kernel;
        Conv1d {
            in_channels,
            out_channels,
            kernel,
            w: he_uniform(rng, in_channels * kernel, count),
            b: vec![0.0; out_channels],
            gw: vec![0.0; count],
            gb: vec![0.0; out_channels],
            cache: Tensor::default(),
        }
    }

    pub fn output_len(&self, l: usize) -> usize {
        l + 1 - self.kernel
    }

    fn forward(&mut self, x: Tensor) -> Tensor {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let lo = self.output_len(x.l);
        let mut y = Tensor::zeros(x.n, self.out_channels, lo);
        for i in 0..x.n {
            let xi = x.sample(i);
            for o in 0..self.out_channels {
                let out = &mut y.data[(i * self.out_channels + o) * lo..][..lo];
                out.fill(self.b[o]);
                for c in 0..self.in_channels {
                    let xc = &xi[c * x.l..(c + 1) * x.l];
                    for k in 0..self.kernel {
                        let wk = self.w[(o * self.in_channels + c) * self.kernel + k];
                        axpy(wk, &xc[k..k + lo], out);
                    }
                }
            }
        }
        self.cache = x;
        y
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let x = &self.cache;
        let lo = gy.l;
        let mut gx = Tensor::zeros(x.n, x.c, x.l);
        for i in 0..x.n {
            let xi = x.sample(i);
            for o in 0..self.out_channels {
                let g = &gy.data[(i * self.out_channels + o) * lo..][..lo];
                self.gb[o] += g.iter().sum::<f64>();
                for c in 0..self.in_channels {
                    let xc = &xi[c * x.l..(c + 1) * x.l];
                    let gxc = &mut gx.data[(i * x.c + c) * x.l..][..x.l];
                    for k in 0..self.kernel {
                        let wi = (o * self.in_channels + c) * self.kernel + k;
                        self.gw[wi] += dot(g, &xc[k..k + lo]);
                        axpy(self.w[wi], g, &mut gxc[k..k + lo]);
                    }
                }
            }
        }
        gx
    }
}

/// Max pooling with window 2 and stride 2; a trailing odd sample is dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaxPool {
    #[serde(skip)]
    argmax: Vec<usize>,
    #[serde(skip)]
    input_shape: (usize, usize, usize),
}

impl MaxPool {
    fn forward(&mut self, x: Tensor) -> Tensor {
        let lo = x.l / 2;
        let mut y = Tensor::zeros(x.n, x.c, lo);
        self.argmax.clear();
        for row in 0..x.n * x.c {
            let src = &x.data[row * x.l..(row + 1) * x.l];
            for t in 0..lo {
                let (a, b) = (src[2 * t], src[2 * t + 1]);
                let pick = if b > a { 2 * t + 1 } else { 2 * t };
                y.data[row * lo + t] = src[pick];
                self.argmax.push(row * x.l + pick);
            }
        }
        self.input_shape = (x.n, x.c, x.l);
        y
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let (n, c, l) = self.input_shape;
        let mut gx = Tensor::zeros(n, c, l);
        for (g, &src) in gy.data.iter().zip(&self.argmax) {
            gx.data[src] += g;
        }
        gx
    }
}

/// Per-channel batch normalization over the batch and length axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    pub ggamma: Vec<f64>,
    #[serde(skip)]
    pub gbeta: Vec<f64>,
    #[serde(skip)]
    xhat: Tensor,
    #[serde(skip)]
    inv_std: Vec<f64>,
    #[serde(skip)]
    mode: Option<Mode>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> BatchNorm {
        BatchNorm {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.9,
            eps: 1e-5,
            ggamma: vec![0.0; channels],
            gbeta: vec![0.0; channels],
            xhat: Tensor::default(),
            inv_std: vec![0.0; channels],
            mode: None,
        }
    }

    fn rows(x: &Tensor, c: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..x.n).map(move |i| (i * x.c + c) * x.l..(i * x.c + c + 1) * x.l)
    }

    fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        assert_eq!(x.c, self.channels, "batch norm channels");
        let m = (x.n * x.l) as f64;
        for c in 0..self.channels {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = Self::rows(&x, c)
                        .map(|r| x.data[r].iter().sum::<f64>())
                        .sum::<f64>()
                        / m;
                    let var = Self::rows(&x, c)
                        .map(|r| {
                            x.data[r]
                                .iter()
                                .map(|v| (v - mean) * (v - mean))
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                        / m;
                    self.running_mean[c] =
                        self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean;
                    self.running_var[c] =
                        self.momentum * self.running_var[c] + (1.0 - self.momentum) * var;
                    (mean, var)
                }
                Mode::Infer => (self.running_mean[c], self.running_var[c]),
            };
            let inv = 1.0 / (var + self.eps).sqrt();
            self.inv_std[c] = inv;
            let rows: Vec<_> = Self::rows(&x, c).collect();
            for r in rows {
                for v in &mut x.data[r] {
                    *v = (*v - mean) * inv;
                }
            }
        }
        self.xhat = x.clone();
        for c in 0..self.channels {
            let rows: Vec<_> = Self::rows(&x, c).collect();
            for r in rows {
                for v in &mut x.data[r] {
                    *v = self.gamma[c] * *v + self.beta[c];
                }
            }
        }
        self.mode = Some(mode);
        x
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let xh = &self.xhat;
        let m = (xh.n * xh.l) as f64;
        let mut gx = Tensor::zeros(xh.n, xh.c, xh.l);
        for c in 0..self.channels {
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for r in Self::rows(xh, c) {
                sum_g += gy.data[r.clone()].iter().sum::<f64>();
                sum_gx += dot(&gy.data[r.clone()], &xh.data[r]);
            }
            self.gbeta[c] += sum_g;
            self.ggamma[c] += sum_gx;
            let scale = self.gamma[c] * self.inv_std[c];
            for r in Self::rows(xh, c) {
                for ((d, g), h) in gx.data[r.clone()]
                    .iter_mut()
                    .zip(&gy.data[r.clone()])
                    .zip(&xh.data[r])
                {
                    *d = match self.mode {
                        Some(Mode::Train) => scale * (g - sum_g / m - h * sum_gx / m),
                        _ => scale * g,
                    };
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Relu {
    #[serde(skip)]
    mask: Vec<bool>,
}

impl Relu {
    fn forward(&mut self, mut x: Tensor) -> Tensor {
        self.mask.clear();
        for v in &mut x.data {
            let on = *v > 0.0;
            self.mask.push(on);
            if !on {
                *v = 0.0;
            }
        }
        x
    }

    fn backward(&mut self, gy: &Tensor) -> Tensor {
        let mut g = gy.clone();
        for (v, &on) in g.data.iter_mut().zip(&self.mask) {
            if !on {
                *v = 0.0;
            }
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    MaxPool(MaxPool),
    BatchNorm(BatchNorm),
    Relu(Relu),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool(_) => "max_pool",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu(_) => "relu",
        }
    }

    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv1d(c) => c.forward(x),
            Layer::MaxPool(p) => p.forward(x),
            Layer::BatchNorm(b) => b.forward(x, mode),
            Layer::Relu(r) => r.forward(x),
        }
    }

    pub fn backward(&mut self, gy: &Tensor) -> Tensor {
        match self {
            Layer::Dense(d) => d.backward(gy),
            Layer::Conv1d(c) => c.backward(gy),
            Layer::MaxPool(p) => p.backward(gy),
            Layer::BatchNorm(b) => b.backward(gy),
            Layer::Relu(r) => r.backward(gy),
        }
    }

    /// Output shape `(c, l)` for an input of shape `(c, l)`.
    pub fn output_shape(&self, (c, l): (usize, usize)) -> (usize, usize) {
        match self {
            Layer::Dense(d) => (d.outputs, 1),
            Layer::Conv1d(conv) => (conv.out_channels, conv.output_len(l)),
            Layer::MaxPool(_) => (c, l / 2),
            Layer::BatchNorm(_) | Layer::Relu(_) => (c, l),
        }
    }

    /// (parameter, gradient) pairs.
    pub fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Dense(d) => vec![(&mut d.w, &mut d.gw), (&mut d.b, &mut d.gb)],
            Layer::Conv1d(c) => vec![(&mut c.w, &mut c.gw), (&mut c.b, &mut c.gb)],
            Layer::BatchNorm(b) => vec![(&mut b.gamma, &mut b.ggamma), (&mut b.beta, &mut b.gbeta)],
            Layer::MaxPool(_) | Layer::Relu(_) => Vec::new(),
        }
    }

    /// Allocates gradient buffers after deserialization.
    pub fn reset_grads(&mut self) {
        for (p, g) in self.params_mut() {
            g.clear();
            g.resize(p.len(), 0.0);
        }
    }

    /// Discrete state that decides which branch of a piecewise-linear
    /// function was taken in the last forward pass.
    pub fn pattern(&self) -> Vec<usize> {
        match self {
            Layer::Relu(r) => r.mask.iter().map(|&b| b as usize).collect(),
            Layer::MaxPool(p) => p.argmax.clone(),
            _ => Vec::new(),
        }
    }
}
