//! Independent oracles and fixtures shared by the integration tests. The
//! oracles deliberately avoid the library's own code paths.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dialeval::annotation::FeatureSpan;
use dialeval::featurize::{macro_vector_of, micro_vector, Normalization};
use dialeval::models::{train, ClassifierModel, Dataset, ModelKind, TrainConfig};
use dialeval::synthetic::LabeledCorpus;
use dialeval::{Aspect, Taxonomy};

/// Krippendorff's alpha (nominal) from an explicit coincidence matrix.
/// `None` when expected disagreement is zero.
pub fn alpha_oracle(u1: &[u32], u2: &[u32]) -> Option<f64> {
    let values: Vec<u32> = u1.iter().chain(u2).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let k = values.len();
    let pos = |v: u32| values.iter().position(|&x| x == v).unwrap();
    let mut o = vec![vec![0.0f64; k]; k];
    for (&a, &b) in u1.iter().zip(u2) {
        // two values per unit: each ordered pair weighs 1 / (m_u - 1) = 1
        o[pos(a)][pos(b)] += 1.0;
        o[pos(b)][pos(a)] += 1.0;
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..k {
        for kk in 0..k {
            if c != kk {
                d_o += o[c][kk];
                d_e += n_c[c] * n_c[kk] / (n - 1.0);
            }
        }
    }
    (d_e != 0.0).then(|| 1.0 - d_o / d_e)
}

/// Pearson r from raw sums.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    (den > 0.0).then(|| (n * sxy - sx * sy) / den)
}

/// Agreement wins; otherwise the most frequent pool score, ties to the
/// score nearest the pool mean, then the lower score. Run-length based.
pub fn mode_oracle(segment: [u8; 2], pool: &[u8]) -> u8 {
    if segment[0] == segment[1] {
        return segment[0];
    }
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for v in sorted {
        match runs.last_mut() {
            Some((last, len)) if *last == v => *len += 1,
            _ => runs.push((v, 1)),
        }
    }
    let top = runs.iter().map(|r| r.1).max().unwrap();
    let n = pool.len() as i64;
    let sum: i64 = pool.iter().map(|&v| v as i64).sum();
    let mut best: Option<(i64, u8)> = None;
    for (v, len) in runs {
        if len != top {
            continue;
        }
        let distance = (v as i64 * n - sum).abs();
        if best.map_or(true, |(d, _)| distance < d) {
            best = Some((distance, v));
        }
    }
    best.unwrap().1
}

pub struct ClassOracle {
    pub label: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

pub struct MetricsOracle {
    pub per_class: Vec<ClassOracle>,
    pub macro_f1: f64,
    pub accuracy: f64,
}

/// Per-class counts by direct scan over every label 1..=5 that occurs.
pub fn metrics_oracle(gold: &[u8], pred: &[u8]) -> MetricsOracle {
    let mut per_class = Vec::new();
    let mut f1s = Vec::new();
    for label in 1..=5u8 {
        let occurs = gold.contains(&label) || pred.contains(&label);
        if !occurs {
            continue;
        }
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&g, &p) in gold.iter().zip(pred) {
            match (g == label, p == label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if tp + fn_ > 0 {
            f1s.push(f1);
        }
        per_class.push(ClassOracle {
            label,
            precision,
            recall,
            f1,
            support: tp + fn_,
        });
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    MetricsOracle {
        per_class,
        macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
        accuracy: correct as f64 / gold.len() as f64,
    }
}

/// 1-based rank of each feature: one plus the number of features with a
/// higher weight, or an equal weight and a smaller id.
pub fn ranks(weights: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    weights
        .iter()
        .map(|(f, &w)| {
            let better = weights
                .iter()
                .filter(|(g, &v)| v > w || (v == w && *g < f))
                .count();
            (f.clone(), better + 1)
        })
        .collect()
}

/// Common features and aspect residuals by set arithmetic.
pub fn set_oracle(
    per_aspect: &BTreeMap<Aspect, BTreeMap<String, f64>>,
    top: usize,
    common_size: usize,
) -> (Vec<String>, BTreeMap<Aspect, BTreeSet<String>>) {
    let rank_maps: BTreeMap<Aspect, BTreeMap<String, usize>> =
        per_aspect.iter().map(|(a, w)| (*a, ranks(w))).collect();
    let tops: BTreeMap<Aspect, BTreeSet<String>> = rank_maps
        .iter()
        .map(|(a, r)| (*a, r.iter().filter(|(_, &k)| k <= top).map(|(f, _)| f.clone()).collect()))
        .collect();
    let mut shared: Vec<(usize, String)> = tops[&Aspect::Topic]
        .iter()
        .filter(|f| tops.values().all(|s| s.contains(*f)))
        .map(|f| (rank_maps.values().map(|r| r[f]).sum(), f.clone()))
        .collect();
    shared.sort();
    let common: Vec<String> = shared.into_iter().take(common_size).map(|(_, f)| f).collect();
    let specific = tops
        .into_iter()
        .map(|(a, s)| (a, s.into_iter().filter(|f| !common.contains(f)).collect()))
        .collect();
    (common, specific)
}

/// Four step-2 models (micro vector to aspect label) and one step-3 model
/// (macro vector to overall score), trained on the gold labels.
pub fn train_classical(
    data: &LabeledCorpus,
    taxonomy: &Taxonomy,
    kind: ModelKind,
    seed: u64,
) -> ([ClassifierModel; 4], ClassifierModel) {
    let mut spans: BTreeMap<&str, Vec<FeatureSpan>> = BTreeMap::new();
    for s in &data.spans {
        spans.entry(&s.dialogue_id).or_default().push(s.clone());
    }
    let micro: Vec<Vec<f64>> = data
        .corpus
        .dialogues()
        .iter()
        .map(|d| {
            let own = spans.get(d.dialogue_id.as_str()).cloned().unwrap_or_default();
            micro_vector(d, &own, taxonomy, Normalization::PerTurn).unwrap().values
        })
        .collect();
    let cfg = TrainConfig::new(kind, seed);
    let step2: Vec<ClassifierModel> = Aspect::ALL
        .iter()
        .map(|&a| {
            let y = data.macro_labels.iter().map(|m| m.scores.get(a).get()).collect();
            train(&Dataset::new(taxonomy.feature_ids(), micro.clone(), y).unwrap(), &cfg).unwrap()
        })
        .collect();
    let macro_x = data
        .macro_labels
        .iter()
        .map(|m| macro_vector_of(&m.dialogue_id, &m.scores).values.to_vec())
        .collect();
    let y = data.overall.iter().map(|o| o.score.get()).collect();
    let names = Aspect::ALL.iter().map(|a| a.id().to_string()).collect();
    let step3 = train(&Dataset::new(names, macro_x, y).unwrap(), &cfg).unwrap();
    (step2.try_into().unwrap(), step3)
}
