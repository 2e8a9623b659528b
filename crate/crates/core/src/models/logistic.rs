use serde::{Deserialize, Serialize};

use super::{Dataset, LogisticConfig};

/// Softmax regression on standardized inputs `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `classes x features`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogisticParams {
    /// Raw-input model: identity standardization.
    pub fn unscaled(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Self {
        let p = weights.first().map_or(0, Vec::len);
        Self {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
            weights,
            bias,
        }
    }

    pub(super) fn shape_ok(&self, k: usize, p: usize) -> bool {
        self.weights.len() == k
            && self.bias.len() == k
            && self.weights.iter().all(|w| w.len() == p)
            && self.mean.len() == p
            && self.scale.len() == p
            && self.scale.iter().all(|&s| s > 0.0)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub(super) fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&logits(&self.weights, &self.bias, &self.standardize(x)))
    }
}

fn logits(weights: &[Vec<f64>], bias: &[f64], z: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(bias)
        .map(|(w, b)| b + w.iter().zip(z).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.iter().map(|e| e / total).collect()
}

/// Mean softmax cross-entropy plus `(l2 / 2) * ||W||^2` (bias not
/// penalized), and its gradient with respect to weights and bias.
/// `y` holds class indices into the rows of `weights`.
pub fn logistic_loss_and_grad(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &[Vec<f64>],
    y: &[usize],
    l2: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let k = weights.len();
    let p = weights.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![vec![0.0; p]; k];
    let mut gb = vec![0.0; k];
    for (row, &label) in x.iter().zip(y) {
        let probs = softmax(&logits(weights, bias, row));
        loss -= probs[label].max(f64::MIN_POSITIVE).ln();
        for c in 0..k {
            let err = probs[c] - if c == label { 1.0 } else { 0.0 };
            gb[c] += err;
            for (g, v) in gw[c].iter_mut().zip(row) {
                *g += err * v;
            }
        }
    }
    loss /= n;
    let mut penalty = 0.0;
    for c in 0..k {
        gb[c] /= n;
        for j in 0..p {
            gw[c][j] = gw[c][j] / n + l2 * weights[c][j];
            penalty += weights[c][j] * weights[c][j];
        }
    }
    (loss + 0.5 * l2 * penalty, gw, gb)
}

/// Full-batch gradient descent from zero weights.
pub(super) fn fit(data: &Dataset, class_domain: &[u8], cfg: &LogisticConfig) -> LogisticParams {
    let p = data.dimension();
    let n = data.len() as f64;
    let mut mean = vec![0.0; p];
    for row in &data.x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; p];
    for row in &data.x {
        for j in 0..p {
            scale[j] += (row[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let mut params = LogisticParams {
        mean,
        scale,
        weights: vec![vec![0.0; p]; class_domain.len()],
        bias: vec![0.0; class_domain.len()],
    };
    let z: Vec<Vec<f64>> = data.x.iter().map(|row| params.standardize(row)).collect();
    let y: Vec<usize> = data
        .y
        .iter()
        .map(|l| class_domain.binary_search(l).expect("label in domain"))
        .collect();
    for _ in 0..cfg.epochs {
        let (_, gw, gb) = logistic_loss_and_grad(&params.weights, &params.bias, &z, &y, cfg.l2_penalty);
        for (w, g) in params.weights.iter_mut().zip(&gw) {
            for (a, b) in w.iter_mut().zip(g) {
                *a -= cfg.learning_rate * b;
            }
        }
        for (b, g) in params.bias.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
    }
    params
}
