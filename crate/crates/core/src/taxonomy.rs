//! Registry of micro-level features, macro-level interactivity aspects and
//! the overall-score rubric.
//!
//! The feature inventory (including each feature's tier) is configuration
//! data: the default ships in `data/features.tsv` and a corrected table can
//! be loaded with [`Taxonomy::from_path`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::read_text;

/// Number of micro-level features in the framework.
pub const FEATURE_COUNT: usize = 17;

const DEFAULT_REGISTRY: &str = include_str!("../data/features.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    TokenLevel,
    UtteranceLevel,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::TokenLevel => "token_level",
            Tier::UtteranceLevel => "utterance_level",
        })
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "token_level" => Ok(Tier::TokenLevel),
            "utterance_level" => Ok(Tier::UtteranceLevel),
            other => Err(Error::Domain(format!("unknown tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroFeature {
    pub feature_id: String,
    pub name: String,
    pub tier: Tier,
    pub description: String,
    pub example: String,
}

/// The closed feature registry. Features are kept sorted by `feature_id`,
/// which is also the index order of every micro-level feature vector.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    features: Vec<MicroFeature>,
    index: HashMap<String, usize>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Taxonomy {
    pub fn builtin() -> Self {
        Self::from_tsv_str(DEFAULT_REGISTRY).expect("bundled feature registry is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_tsv_str(&read_text(path)?)
    }

    /// Parses a tab-separated registry with header
    /// `feature_id, name, tier, description, example`.
    pub fn from_tsv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .has_headers(true)
            .from_reader(text.as_bytes());
        let mut features = Vec::new();
        for (idx, row) in reader.deserialize::<RegistryRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                line: idx + 2,
                message: e.to_string(),
            })?;
            features.push(MicroFeature {
                feature_id: row.feature_id.trim().to_string(),
                name: row.name.trim().to_string(),
                tier: row.tier.parse()?,
                description: row.description.trim().to_string(),
                example: row.example.trim().to_string(),
            });
        }
        Self::new(features)
    }

    pub fn new(mut features: Vec<MicroFeature>) -> Result<Self> {
        if features.len() != FEATURE_COUNT {
            return Err(Error::Integrity(format!(
                "feature registry must hold exactly {FEATURE_COUNT} features, found {}",
                features.len()
            )));
        }
        features.sort_by(|a, b| a.feature_id.cmp(&b.feature_id));
        let mut index = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            if f.feature_id.is_empty() {
                return Err(Error::Integrity("empty feature_id in registry".into()));
            }
            if index.insert(f.feature_id.clone(), i).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate feature_id `{}` in registry",
                    f.feature_id
                )));
            }
        }
        Ok(Self { features, index })
    }

    /// Features in `feature_id` order, optionally restricted to one tier.
    pub fn list_features(&self, tier: Option<Tier>) -> Vec<&MicroFeature> {
        self.features
            .iter()
            .filter(|f| tier.is_none_or(|t| f.tier == t))
            .collect()
    }

    pub fn features(&self) -> &[MicroFeature] {
        &self.features
    }

    pub fn feature_ids(&self) -> Vec<String> {
        self.features.iter().map(|f| f.feature_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn resolve(&self, feature_id: &str) -> Result<&MicroFeature> {
        self.index
            .get(feature_id)
            .map(|&i| &self.features[i])
            .ok_or_else(|| Error::UnknownFeature(feature_id.to_string()))
    }

    pub fn index_of(&self, feature_id: &str) -> Result<usize> {
        self.index
            .get(feature_id)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(feature_id.to_string()))
    }

    pub fn tier(&self, feature_id: &str) -> Result<Tier> {
        self.resolve(feature_id).map(|f| f.tier)
    }
}

#[derive(Deserialize)]
struct RegistryRow {
    feature_id: String,
    name: String,
    tier: String,
    description: String,
    example: String,
}

/// A macro-level interactivity aspect. Declaration order is the canonical
/// vector order: topic, tone, opening, closing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Topic,
    Tone,
    Opening,
    Closing,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [Aspect::Topic, Aspect::Tone, Aspect::Opening, Aspect::Closing];

    pub fn id(self) -> &'static str {
        match self {
            Aspect::Topic => "topic",
            Aspect::Tone => "tone",
            Aspect::Opening => "opening",
            Aspect::Closing => "closing",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Aspect::Topic => "Topic Management",
            Aspect::Tone => "Tone Choice Appropriateness",
            Aspect::Opening => "Conversation Opening",
            Aspect::Closing => "Conversation Closing",
        }
    }

    /// Short column header used in report tables.
    pub fn column(self) -> &'static str {
        match self {
            Aspect::Topic => "Topic",
            Aspect::Tone => "Tone",
            Aspect::Opening => "Opening",
            Aspect::Closing => "Closing",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            Aspect::Topic => {
                "the strategies and techniques used to control and navigate the flow of topics"
            }
            Aspect::Tone => {
                "the suitability of the tone used in communication, ensuring it aligns with the \
                 context, audience, and purpose to convey the intended message"
            }
            Aspect::Opening => {
                "the initial interaction or exchange that begins a dialogue, often setting the \
                 tone and context for the dialogue"
            }
            Aspect::Closing => {
                "the process of ending a dialogue or interaction, which involves signaling the \
                 conclusion of the discussion, summarizing key points, and often expressing a \
                 farewell"
            }
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "topic" => Ok(Aspect::Topic),
            "tone" => Ok(Aspect::Tone),
            "opening" => Ok(Aspect::Opening),
            "closing" => Ok(Aspect::Closing),
            other => Err(Error::Domain(format!("unknown aspect `{other}`"))),
        }
    }
}

/// A categorical 1..=5 score, used for macro labels and the overall score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Score(u8);

impl Score {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(value: i64) -> Result<Self> {
        if (Self::MIN as i64..=Self::MAX as i64).contains(&value) {
            Ok(Score(value as u8))
        } else {
            Err(Error::Domain(format!("score {value} outside 1..5")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Score> {
        (Self::MIN..=Self::MAX).map(Score)
    }
}

impl TryFrom<i64> for Score {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        Score::new(value)
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One score per aspect. Serialized as a map keyed by aspect id; all four
/// keys are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<Aspect, Score>",
    into = "BTreeMap<Aspect, Score>"
)]
pub struct MacroScores([Score; 4]);

impl MacroScores {
    pub fn new(topic: Score, tone: Score, opening: Score, closing: Score) -> Self {
        MacroScores([topic, tone, opening, closing])
    }

    pub fn from_values(values: [i64; 4]) -> Result<Self> {
        Ok(MacroScores([
            Score::new(values[0])?,
            Score::new(values[1])?,
            Score::new(values[2])?,
            Score::new(values[3])?,
        ]))
    }

    pub fn from_map(map: &BTreeMap<Aspect, Score>) -> Result<Self> {
        let mut out = [Score(1); 4];
        for aspect in Aspect::ALL {
            out[aspect.index()] = *map
                .get(&aspect)
                .ok_or_else(|| Error::Domain(format!("missing score for aspect `{aspect}`")))?;
        }
        Ok(MacroScores(out))
    }

    pub fn get(&self, aspect: Aspect) -> Score {
        self.0[aspect.index()]
    }

    pub fn set(&mut self, aspect: Aspect, score: Score) {
        self.0[aspect.index()] = score;
    }

    /// Scores in aspect order.
    pub fn values(&self) -> [Score; 4] {
        self.0
    }

    pub fn to_map(&self) -> BTreeMap<Aspect, Score> {
        Aspect::ALL.iter().map(|&a| (a, self.get(a))).collect()
    }
}

impl TryFrom<BTreeMap<Aspect, Score>> for MacroScores {
    type Error = Error;

    fn try_from(map: BTreeMap<Aspect, Score>) -> Result<Self> {
        MacroScores::from_map(&map)
    }
}

impl From<MacroScores> for BTreeMap<Aspect, Score> {
    fn from(s: MacroScores) -> Self {
        s.to_map()
    }
}

pub const RUBRIC: [&str; 5] = [
    "Unable to accurately achieve the communication purpose, awkward conversation, and failed to talk throughout the conversation.",
    "Overall communication is not fluent and mostly awkward, but some parts can be mutually understood",
    "Slightly awkward communication in some places, such as not being able to understand the other person\u{2019}s question",
    "Somewhat less fluent communication, but the communication purpose is achieved",
    "Smooth and fluent daily communication, easy and pleasant through the whole chat",
];

/// Rubric description for an overall score.
pub fn rubric_text(score: i64) -> Result<&'static str> {
    let score = Score::new(score)?;
    Ok(RUBRIC[(score.get() - 1) as usize])
}

/// `(score, description)` for all five scores, highest first.
pub fn rubric() -> Vec<(u8, &'static str)> {
    (1..=5u8).rev().map(|s| (s, RUBRIC[(s - 1) as usize])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_has_seventeen_features() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.list_features(None).len(), 17);
    }

    #[test]
    fn tier_filters_partition_the_registry() {
        let tax = Taxonomy::builtin();
        let mut ids: Vec<_> = tax
            .list_features(Some(Tier::TokenLevel))
            .into_iter()
            .chain(tax.list_features(Some(Tier::UtteranceLevel)))
            .map(|f| f.feature_id.clone())
            .collect();
        ids.sort();
        assert_eq!(ids, tax.feature_ids());
        assert_eq!(tax.list_features(Some(Tier::TokenLevel)).len(), 8);
        assert_eq!(tax.list_features(Some(Tier::UtteranceLevel)).len(), 9);
    }

    #[test]
    fn listing_is_sorted_and_stable() {
        let tax = Taxonomy::builtin();
        let a = tax.feature_ids();
        let b = tax.feature_ids();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(a, sorted);
    }

    #[test]
    fn default_tier_assignment() {
        let tax = Taxonomy::builtin();
        assert_eq!(tax.tier("reference_word").unwrap(), Tier::TokenLevel);
        assert_eq!(tax.tier("backchannel").unwrap(), Tier::TokenLevel);
        assert_eq!(tax.tier("formulaic_response").unwrap(), Tier::UtteranceLevel);
        assert_eq!(tax.tier("subordinate_clause").unwrap(), Tier::UtteranceLevel);
    }

    #[test]
    fn unknown_feature_is_rejected() {
        let tax = Taxonomy::builtin();
        assert!(matches!(
            tax.resolve("filler_word"),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn registry_with_wrong_count_is_rejected() {
        let text = "feature_id\tname\ttier\tdescription\texample\na\tA\ttoken_level\td\te\n";
        assert!(matches!(
            Taxonomy::from_tsv_str(text),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn corrected_registry_can_move_a_feature_between_tiers() {
        let edited = DEFAULT_REGISTRY.replace(
            "backchannel\tBackchannels\ttoken_level",
            "backchannel\tBackchannels\tutterance_level",
        );
        let tax = Taxonomy::from_tsv_str(&edited).unwrap();
        assert_eq!(tax.tier("backchannel").unwrap(), Tier::UtteranceLevel);
    }

    #[test]
    fn rubric_lines() {
        assert_eq!(
            rubric_text(5).unwrap(),
            "Smooth and fluent daily communication, easy and pleasant through the whole chat"
        );
        assert!(rubric_text(1)
            .unwrap()
            .starts_with("Unable to accurately achieve the communication purpose"));
        assert!(matches!(rubric_text(0), Err(Error::Domain(_))));
        assert!(matches!(rubric_text(6), Err(Error::Domain(_))));
        assert_eq!(rubric().len(), 5);
    }

    #[test]
    fn score_serde_rejects_out_of_domain() {
        assert_eq!(serde_json::from_str::<Score>("4").unwrap().get(), 4);
        assert!(serde_json::from_str::<Score>("6").is_err());
        assert!(serde_json::from_str::<Score>("0").is_err());
    }

    #[test]
    fn aspects_round_trip_through_ids() {
        for a in Aspect::ALL {
            assert_eq!(a.id().parse::<Aspect>().unwrap(), a);
            assert!(!a.definition().is_empty());
        }
    }
}
