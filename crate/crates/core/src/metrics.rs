//! Classification metrics shared by model training, permutation importance
//! and pipeline evaluation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: usize,
}

/// Metrics over one (gold, predicted) label sequence.
///
/// `labels` is the sorted union of gold and predicted labels; `confusion`
/// is indexed `[gold][predicted]` in that order. Zero denominators give 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub labels: Vec<u8>,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean F1 over labels present in gold.
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_metrics(gold: &[u8], predicted: &[u8]) -> Result<Metrics> {
    if gold.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Domain("no labels to evaluate".into()));
    }
    let labels: Vec<u8> = gold
        .iter()
        .chain(predicted)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pos = |l: u8| labels.binary_search(&l).expect("label in union");
    let k = labels.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&g, &p) in gold.iter().zip(predicted) {
        confusion[pos(g)][pos(p)] += 1;
    }
    let mut per_class = Vec::with_capacity(k);
    let (mut f1_sum, mut gold_classes) = (0.0, 0usize);
    for (i, &label) in labels.iter().enumerate() {
        let tp = confusion[i][i];
        let support: usize = confusion[i].iter().sum();
        let predicted_count: usize = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted_count);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if support > 0 {
            f1_sum += f1;
            gold_classes += 1;
        }
        per_class.push(ClassMetrics {
            label,
            precision,
            recall,
            f1,
            support,
        });
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(Metrics {
        labels,
        per_class,
        macro_f1: f1_sum / gold_classes as f64,
        accuracy: ratio(correct, gold.len()),
        confusion,
        n: gold.len(),
    })
}
