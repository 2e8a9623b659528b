//! Common and aspect-specific high-impact micro features across the four
//! macro aspects, and the report grids built from them.
//!
//! With `top_k` returning the `k` highest-weight features:
//!
//! ```text
//! common          = first 5 of (top_10(topic) ∩ top_10(tone) ∩ top_10(opening) ∩ top_10(closing)),
//!                   ordered by ascending sum of per-aspect ranks
//! specific(a)     = top_10(a) - common
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl::to_canonical_string;
use crate::models::{ImportanceTable, ModelKind};
use crate::table::Grid;
use crate::taxonomy::{Aspect, Taxonomy};

pub const TOP_PER_ASPECT: usize = 10;
pub const COMMON_SIZE: usize = 5;

/// Per-aspect micro-feature importances of one classifier kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectWeightTable {
    pub model_kind: ModelKind,
    pub per_aspect: BTreeMap<Aspect, BTreeMap<String, f64>>,
}

impl AspectWeightTable {
    /// Every aspect must score exactly the taxonomy's features with finite,
    /// non-negative values.
    pub fn new(
        model_kind: ModelKind,
        per_aspect: BTreeMap<Aspect, BTreeMap<String, f64>>,
        taxonomy: &Taxonomy,
    ) -> Result<Self> {
        let expected: BTreeSet<String> = taxonomy.feature_ids().into_iter().collect();
        for aspect in Aspect::ALL {
            let weights = per_aspect
                .get(&aspect)
                .ok_or_else(|| Error::Domain(format!("weight table lacks aspect `{aspect}`")))?;
            let keys: BTreeSet<String> = weights.keys().cloned().collect();
            if keys != expected {
                let unknown: Vec<&String> = keys.difference(&expected).collect();
                let missing: Vec<&String> = expected.difference(&keys).collect();
                return Err(Error::Domain(format!(
                    "aspect `{aspect}`: unknown features {unknown:?}, missing features {missing:?}"
                )));
            }
            if let Some((f, v)) = weights.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "aspect `{aspect}`: feature `{f}` has invalid weight {v}"
                )));
            }
        }
        Ok(Self {
            model_kind,
            per_aspect,
        })
    }

    /// Builds the table from four per-aspect importance tables.
    pub fn from_importances(
        model_kind: ModelKind,
        tables: &BTreeMap<Aspect, ImportanceTable>,
        taxonomy: &Taxonomy,
    ) -> Result<Self> {
        let per_aspect = tables
            .iter()
            .map(|(&a, t)| (a, t.scores.clone()))
            .collect();
        Self::new(model_kind, per_aspect, taxonomy)
    }

    pub fn weights(&self, aspect: Aspect) -> &BTreeMap<String, f64> {
        &self.per_aspect[&aspect]
    }

    /// Identifies the table contents exactly (weights hashed by bit pattern).
    pub fn fingerprint(&self) -> String {
        let bits: BTreeMap<&str, BTreeMap<&str, u64>> = self
            .per_aspect
            .iter()
            .map(|(a, w)| (a.id(), w.iter().map(|(f, v)| (f.as_str(), v.to_bits())).collect()))
            .collect();
        let text = to_canonical_string(&(self.model_kind, bits)).expect("serializable");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonFeatureSet {
    /// At most five features, best first.
    pub features: Vec<String>,
    /// Fingerprint of the table the set was computed from.
    pub table_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSpecificSet {
    pub aspect: Aspect,
    /// Descending weight order.
    pub features: Vec<String>,
}

/// The `k` highest-weight features, descending, ties by feature id.
pub fn topk(weights: &BTreeMap<String, f64>, k: usize) -> Result<Vec<String>> {
    if weights.is_empty() {
        return Err(Error::Domain("top-k of an empty weight map".into()));
    }
    if k == 0 {
        return Err(Error::Domain("top-k needs k >= 1".into()));
    }
    let mut ranked: Vec<(&String, f64)> = weights.iter().map(|(f, &w)| (f, w)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(f, _)| f.clone()).collect())
}

pub fn common_features(table: &AspectWeightTable) -> Result<CommonFeatureSet> {
    let tops = Aspect::ALL
        .iter()
        .map(|&a| topk(table.weights(a), TOP_PER_ASPECT))
        .collect::<Result<Vec<_>>>()?;
    Ok(CommonFeatureSet {
        features: intersect_ranked(&tops),
        table_fingerprint: table.fingerprint(),
    })
}

/// Features present in every ranked list, by ascending rank sum (rank 1 =
/// list head), ties by id, at most [`COMMON_SIZE`].
fn intersect_ranked(tops: &[Vec<String>]) -> Vec<String> {
    let mut rank_sums: BTreeMap<&String, (usize, usize)> = BTreeMap::new();
    for top in tops {
        for (rank, f) in top.iter().enumerate() {
            let e = rank_sums.entry(f).or_default();
            e.0 += rank + 1;
            e.1 += 1;
        }
    }
    let mut shared: Vec<(usize, &String)> = rank_sums
        .into_iter()
        .filter(|(_, (_, seen))| *seen == tops.len())
        .map(|(f, (sum, _))| (sum, f))
        .collect();
    shared.sort();
    shared.into_iter().take(COMMON_SIZE).map(|(_, f)| f.clone()).collect()
}

pub fn aspect_specific(
    table: &AspectWeightTable,
    aspect: Aspect,
    common: &CommonFeatureSet,
) -> Result<AspectSpecificSet> {
    if common.table_fingerprint != table.fingerprint() {
        return Err(Error::Integrity(
            "common feature set was computed from a different weight table".into(),
        ));
    }
    let features = topk(table.weights(aspect), TOP_PER_ASPECT)?
        .into_iter()
        .filter(|f| !common.features.contains(f))
        .collect();
    Ok(AspectSpecificSet { aspect, features })
}

/// Display name for a feature id; unknown ids pass through unchanged.
fn display(taxonomy: &Taxonomy, feature_id: &str) -> String {
    taxonomy
        .resolve(feature_id)
        .map(|f| f.name.clone())
        .unwrap_or_else(|_| feature_id.to_string())
}

/// Bold for a feature shared by two columns, bold with a trailing asterisk
/// for three or more.
fn mark(name: &str, shared_by: usize) -> String {
    match shared_by {
        0 | 1 => name.to_string(),
        2 => format!("**{name}**"),
        _ => format!("**{name}***"),
    }
}

/// One column of common features per classifier, overlap-marked.
pub fn common_features_grid(
    columns: &[(ModelKind, CommonFeatureSet)],
    taxonomy: &Taxonomy,
) -> Grid {
    let mut grid = Grid::new(
        "High-impact common micro-level features per classifier",
        columns.iter().map(|(k, _)| k.short().to_string()).collect(),
    );
    let count = |f: &String| columns.iter().filter(|(_, c)| c.features.contains(f)).count();
    let depth = columns.iter().map(|(_, c)| c.features.len()).max().unwrap_or(0);
    for i in 0..depth {
        grid.push(
            columns
                .iter()
                .map(|(_, c)| {
                    c.features
                        .get(i)
                        .map(|f| mark(&display(taxonomy, f), count(f)))
                        .unwrap_or_default()
                })
                .collect(),
        );
    }
    grid
}

/// Aspect-specific features, one block per classifier and one column per
/// aspect. Markers count classifiers sharing a feature within an aspect.
pub fn aspect_specific_grid(
    blocks: &[(ModelKind, BTreeMap<Aspect, AspectSpecificSet>)],
    taxonomy: &Taxonomy,
    rows_per_block: usize,
) -> Grid {
    let mut grid = Grid::new(
        "High-impact aspect-specific micro-level features",
        Aspect::ALL.iter().map(|a| a.column().to_string()).collect(),
    );
    let count = |aspect: Aspect, f: &String| {
        blocks
            .iter()
            .filter(|(_, sets)| sets.get(&aspect).is_some_and(|s| s.features.contains(f)))
            .count()
    };
    for (kind, sets) in blocks {
        grid.section(kind_name(*kind));
        for i in 0..rows_per_block {
            grid.push(
                Aspect::ALL
                    .iter()
                    .map(|&a| {
                        sets.get(&a)
                            .and_then(|s| s.features.get(i))
                            .map(|f| mark(&display(taxonomy, f), count(a, f)))
                            .unwrap_or_default()
                    })
                    .collect(),
            );
        }
    }
    grid
}

pub fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Logistic => "Logistic Regression",
        ModelKind::NaiveBayes => "Naive Bayes",
        ModelKind::RandomForest => "Random Forest",
    }
}

/// Importance of each macro aspect for predicting the overall score, one
/// row per classifier, three decimals. Tables are keyed by aspect id.
pub fn macro_importance_grid(rows: &[(ModelKind, ImportanceTable)]) -> Result<Grid> {
    let mut header = vec!["Models".to_string()];
    header.extend(Aspect::ALL.iter().map(|a| a.column().to_string()));
    let mut grid = Grid::new("Feature importance of the four interactivity aspects", header);
    for (kind, table) in rows {
        let mut cells = vec![kind.short().to_string()];
        for aspect in Aspect::ALL {
            let v = table.scores.get(aspect.id()).ok_or_else(|| {
                Error::Domain(format!("importance table lacks aspect `{aspect}`"))
            })?;
            cells.push(format!("{v:.3}"));
        }
        grid.push(cells);
    }
    Ok(grid)
}
