use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ForestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        class: u8,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A decision tree stored as a flat node list, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(class: u8) -> Self {
        Self {
            nodes: vec![Node::Leaf { class }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn shape_ok(&self, class_domain: &[u8], p: usize) -> bool {
        // Children point forward, so traversal always terminates.
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, node)| match *node {
                Node::Leaf { class } => class_domain.contains(&class),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    feature < p
                        && threshold.is_finite()
                        && left > i
                        && right > i
                        && left < self.nodes.len()
                        && right < self.nodes.len()
                }
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: Vec<Tree>,
    /// Normalized mean Gini decrease per feature, computed at training.
    pub importances: Vec<f64>,
}

impl ForestParams {
    pub(super) fn shape_ok(&self, class_domain: &[u8], p: usize) -> bool {
        !self.trees.is_empty()
            && self.importances.len() == p
            && self.trees.iter().all(|t| t.shape_ok(class_domain, p))
    }

    /// Fraction of trees voting for each class.
    pub(super) fn probabilities(&self, x: &[f64], class_domain: &[u8]) -> Vec<f64> {
        let mut votes = vec![0usize; class_domain.len()];
        for tree in &self.trees {
            let c = tree.predict(x);
            votes[class_domain.binary_search(&c).expect("leaf class in domain")] += 1;
        }
        votes
            .iter()
            .map(|&v| v as f64 / self.trees.len() as f64)
            .collect()
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    /// Class index per row.
    y: &'a [usize],
    k: usize,
    cfg: &'a ForestConfig,
    n_root: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    rng: ChaCha8Rng,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        counts
    }

    fn best_split(&mut self, rows: &[usize], parent_gini: f64) -> Option<BestSplit> {
        let p = self.x[0].len();
        let m = self.cfg.features_per_split.count(p);
        let mut features = sample(&mut self.rng, p, m).into_vec();
        features.sort_unstable();
        let n = rows.len();
        let min_leaf = self.cfg.min_leaf;
        let mut best: Option<BestSplit> = None;
        for feature in features {
            let mut sorted: Vec<(f64, usize)> =
                rows.iter().map(|&r| (self.x[r][feature], self.y[r])).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = vec![0usize; self.k];
            let mut right = self.counts(rows);
            for i in 0..n - 1 {
                left[sorted[i].1] += 1;
                right[sorted[i].1] -= 1;
                let (nl, nr) = (i + 1, n - i - 1);
                if sorted[i].0 == sorted[i + 1].0 || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let weighted = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let decrease = parent_gini - weighted;
                if decrease > best.as_ref().map_or(1e-12, |b| b.decrease) {
                    let (a, b) = (sorted[i].0, sorted[i + 1].0);
                    let mid = a + (b - a) / 2.0;
                    best = Some(BestSplit {
                        feature,
                        threshold: if mid < b { mid } else { a },
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn leaf_class(counts: &[usize]) -> usize {
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }

    /// Returns the index of the node built for `rows`.
    fn build(&mut self, rows: &[usize], depth: usize, class_domain: &[u8]) -> usize {
        let counts = self.counts(rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: class_domain[Self::leaf_class(&counts)],
        });
        let node_gini = gini(&counts, rows.len());
        if depth >= self.cfg.max_depth || node_gini == 0.0 || rows.len() < 2 * self.cfg.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(rows, node_gini) else {
            return id;
        };
        self.importance[split.feature] += rows.len() as f64 / self.n_root as f64 * split.decrease;
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.x[row][split.feature] <= split.threshold);
        let left = self.build(&l, depth + 1, class_domain);
        let right = self.build(&r, depth + 1, class_domain);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
}

/// Bootstrap-aggregated Gini trees. Tree `t` draws its bootstrap sample and
/// split candidates from a stream seeded by the `t`-th output of the master
/// generator.
pub(super) fn fit(data: &Dataset, class_domain: &[u8], cfg: &ForestConfig, seed: u64) -> ForestParams {
    let n = data.len();
    let p = data.dimension();
    let y: Vec<usize> = data
        .y
        .iter()
        .map(|l| class_domain.binary_search(l).expect("label in domain"))
        .collect();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut importances = vec![0.0; p];
    for _ in 0..cfg.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = Builder {
            x: &data.x,
            y: &y,
            k: class_domain.len(),
            cfg,
            n_root: n,
            nodes: Vec::new(),
            importance: vec![0.0; p],
            rng,
        };
        builder.build(&rows, 0, class_domain);
        normalize(&mut builder.importance);
        for (acc, v) in importances.iter_mut().zip(&builder.importance) {
            *acc += v;
        }
        trees.push(Tree { nodes: builder.nodes });
    }
    normalize(&mut importances);
    ForestParams { trees, importances }
}

#[cfg(test)]
mod tests {
    use super::super::{ClassifierModel, ModelParams};
    use super::*;

    #[test]
    fn majority_vote() {
        let params = ForestParams {
            trees: vec![Tree::leaf(4), Tree::leaf(4), Tree::leaf(2)],
            importances: vec![0.0],
        };
        let m = ClassifierModel::from_params(
            vec!["a".into()],
            vec![2, 4],
            ModelParams::RandomForest(params),
        )
        .unwrap();
        let pred = m.predict(&[0.0]).unwrap();
        assert_eq!(pred.label, 4);
        assert!((pred.probabilities[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_routes_by_threshold() {
        let t = Tree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { class: 1 },
                Node::Leaf { class: 3 },
            ],
        };
        assert_eq!(t.predict(&[9.0, 0.5]), 1);
        assert_eq!(t.predict(&[9.0, 0.6]), 3);
        assert!(t.shape_ok(&[1, 3], 2));
        assert!(!t.shape_ok(&[1, 3], 1));
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[4, 0], 4), 0.0);
        assert_eq!(gini(&[2, 2], 4), 0.5);
    }
}
