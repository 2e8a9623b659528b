use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Dataset;

/// Gaussian class-conditionals with independent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub priors: Vec<f64>,
    /// `classes x features`.
    pub means: Vec<Vec<f64>>,
    /// `classes x features`, each at least the variance floor.
    pub variances: Vec<Vec<f64>>,
}

impl NaiveBayesParams {
    pub(super) fn shape_ok(&self, k: usize, p: usize) -> bool {
        self.priors.len() == k
            && self.means.len() == k
            && self.variances.len() == k
            && self.means.iter().all(|m| m.len() == p)
            && self.variances.iter().all(|v| v.len() == p && v.iter().all(|&s| s > 0.0))
            && self.priors.iter().all(|&p| p > 0.0)
    }

    pub(super) fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let log_post: Vec<f64> = (0..self.priors.len())
            .map(|c| {
                let ll: f64 = x
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((v, m), var)| -0.5 * ((2.0 * PI * var).ln() + (v - m).powi(2) / var))
                    .sum();
                self.priors[c].ln() + ll
            })
            .collect();
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.iter().map(|e| e / total).collect()
    }
}

pub(super) fn fit(data: &Dataset, class_domain: &[u8], variance_floor: f64) -> NaiveBayesParams {
    let p = data.dimension();
    let k = class_domain.len();
    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; p]; k];
    for (row, label) in data.x.iter().zip(&data.y) {
        let c = class_domain.binary_search(label).expect("label in domain");
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= n as f64;
        }
    }
    let mut variances = vec![vec![0.0; p]; k];
    for (row, label) in data.x.iter().zip(&data.y) {
        let c = class_domain.binary_search(label).expect("label in domain");
        for j in 0..p {
            variances[c][j] += (row[j] - means[c][j]).powi(2);
        }
    }
    for (var, &n) in variances.iter_mut().zip(&counts) {
        for v in var.iter_mut() {
            *v = (*v / n as f64).max(variance_floor);
        }
    }
    NaiveBayesParams {
        priors: counts.iter().map(|&n| n as f64 / data.len() as f64).collect(),
        means,
        variances,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ClassifierModel, ModelParams};
    use super::*;

    #[test]
    fn identical_conditionals_equal_priors_are_even() {
        let params = NaiveBayesParams {
            priors: vec![0.5, 0.5],
            means: vec![vec![1.0, 2.0]; 2],
            variances: vec![vec![0.5, 3.0]; 2],
        };
        let m = ClassifierModel::from_params(
            vec!["a".into(), "b".into()],
            vec![2, 4],
            ModelParams::NaiveBayes(params),
        )
        .unwrap();
        let pred = m.predict(&[7.0, -1.0]).unwrap();
        assert_eq!(pred.probabilities, vec![0.5, 0.5]);
        assert_eq!(pred.label, 2);
    }

    #[test]
    fn constant_feature_uses_floor() {
        let d = Dataset::new(
            vec!["c".into(), "s".into()],
            vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![1.0, 5.0], vec![1.0, 5.1]],
            vec![1, 1, 2, 2],
        )
        .unwrap();
        let p = fit(&d, &[1, 2], 1e-9);
        assert_eq!(p.variances[0][0], 1e-9);
        assert!(p.probabilities(&[1.0, 5.05])[1] > 0.99);
    }
}
