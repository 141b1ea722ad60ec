//! Central finite-difference check of the backpropagated gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Mode, Tensor};
use super::{bce_with_logits, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Parameters skipped because a ReLU or max-pool branch flipped under
    /// the perturbation.
    pub skipped: usize,
}

struct Probe {
    loss: f64,
    pattern: Vec<Vec<usize>>,
}

fn probe(net: &mut Network, x: &Tensor, labels: &[u8]) -> Probe {
    let z = net.forward(x.clone(), Mode::Infer);
    let loss = bce_with_logits(&z.data, labels).0;
    Probe {
        loss,
        pattern: net.layers.iter().map(|l| l.pattern()).collect(),
    }
}

/// Compares backprop gradients with central differences on `samples`
/// randomly drawn parameters. Batch norm runs in inference mode.
///
/// The relative error of one parameter is `|a - n| / max(|a|, |n|, 1e-6)`;
/// the floor keeps round-off on vanishing gradients from dominating.
pub fn gradient_check(
    net: &mut Network,
    inputs: &[&[f64]],
    labels: &[u8],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> GradCheckReport {
    let x = Tensor::from_samples(inputs, net.input.0, net.input.1);
    net.zero_grads();
    let z = net.forward(x.clone(), Mode::Infer);
    let grad = bce_with_logits(&z.data, labels).1;
    net.backward(Tensor {
        n: labels.len(),
        c: 1,
        l: 1,
        data: grad,
    });
    let base = probe(net, &x, labels).pattern;

    let mut positions: Vec<(usize, usize)> = Vec::new();
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    for (p, g) in net.layers.iter_mut().flat_map(|l| l.params_mut()) {
        let t = analytic.len();
        positions.extend((0..p.len()).map(|i| (t, i)));
        analytic.push(g.clone());
    }
    positions.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (t, i) in positions {
        if report.checked >= samples {
            break;
        }
        let set = |net: &mut Network, delta: Option<f64>, orig: f64| {
            let mut params = net.layers.iter_mut().flat_map(|l| l.params_mut());
            let (p, _) = params.nth(t).unwrap();
            p[i] = delta.map_or(orig, |d| orig + d);
        };
        let orig = {
            let mut params = net.layers.iter_mut().flat_map(|l| l.params_mut());
            params.nth(t).unwrap().0[i]
        };
        set(net, Some(epsilon), orig);
        let plus = probe(net, &x, labels);
        set(net, Some(-epsilon), orig);
        let minus = probe(net, &x, labels);
        set(net, None, orig);
        if plus.pattern != base || minus.pattern != base {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * epsilon);
        let a = analytic[t][i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::{BatchNorm, Dense, Layer};
    use crate::neural::{Architecture, CnnConfig, MlpConfig};
    use rand::Rng;

    fn random_inputs(n: usize, width: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n)
            .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = (0..n).map(|i| (i % 2) as u8).collect();
        (x, y)
    }

    #[test]
    fn linear_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network {
            input: (4, 1),
            layers: vec![Layer::Dense(Dense::new(4, 1, &mut rng))],
        };
        let (x, y) = random_inputs(8, 4, 2);
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let r = gradient_check(&mut net, &refs, &y, 1e-5, 5, 3);
        assert_eq!(r.checked, 5);
        assert!(r.max_relative_error < 1e-8, "{r:?}");
    }

    #[test]
    fn mlp_gradients() {
        let mut net = Architecture::Mlp(MlpConfig::new(6, 4)).build().unwrap();
        let (x, y) = random_inputs(16, 6, 5);
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let r = gradient_check(&mut net, &refs, &y, 1e-5, 60, 6);
        assert!(r.checked >= 50, "{r:?}");
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn small_cnn_gradients() {
        let mut cfg = CnnConfig::new(7);
        cfg.length = 30;
        cfg.filters = vec![4, 3];
        cfg.dense = vec![5, 5];
        let mut net = Architecture::Cnn(cfg).build().unwrap();
        let (x, y) = random_inputs(4, 90, 8);
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let r = gradient_check(&mut net, &refs, &y, 1e-5, 80, 9);
        assert!(r.checked >= 50, "{r:?}");
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    /// Training-mode batch norm backward checked against differences of the
    /// batch-statistics forward pass.
    #[test]
    fn batch_norm_training_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut bn = Layer::BatchNorm(BatchNorm::new(2));
        let x = Tensor {
            n: 3,
            c: 2,
            l: 4,
            data: (0..24).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let w: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |bn: &mut Layer, x: &Tensor| -> f64 {
            let y = bn.forward(x.clone(), Mode::Train);
            y.data.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        objective(&mut bn, &x);
        let gx = bn.backward(&Tensor {
            n: 3,
            c: 2,
            l: 4,
            data: w.clone(),
        });
        let eps = 1e-6;
        for i in 0..24 {
            let mut xp = x.clone();
            xp.data[i] += eps;
            let mut xm = x.clone();
            xm.data[i] -= eps;
            let numeric = (objective(&mut bn, &xp) - objective(&mut bn, &xm)) / (2.0 * eps);
            assert!(
                (numeric - gx.data[i]).abs() < 1e-6,
                "{i}: {numeric} vs {}",
                gx.data[i]
            );
        }
    }
}
