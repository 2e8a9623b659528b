//! Dialogue data model, corpus ingestion and seeded train/dev/test splits.
//!
//! Corpus files hold one dialogue record per line:
//!
//! ```text
//! {"conversation_id":"c1","dialogue_id":"d1","proficiency":"beginner","topic":null,
//!  "turns":[{"index":0,"speaker_id":"A","text":"..."}, ...]}
//! ```
//!
//! Character offsets anywhere in the toolkit count Unicode scalar values.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker_id: String,
    pub index: usize,
    pub text: String,
}

impl Turn {
    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proficiency {
    Beginner,
    Lower,
    Intermediate,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub conversation_id: String,
    pub proficiency: Option<Proficiency>,
    pub topic: Option<String>,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn validate(&self) -> Result<()> {
        let id = &self.dialogue_id;
        if id.trim().is_empty() {
            return Err(Error::Integrity("dialogue with empty dialogue_id".into()));
        }
        if self.conversation_id.trim().is_empty() {
            return Err(Error::Integrity(format!(
                "dialogue `{id}` has no conversation_id"
            )));
        }
        if self.turns.len() < 2 {
            return Err(Error::Integrity(format!(
                "dialogue `{id}` has {} turn(s); at least 2 are required",
                self.turns.len()
            )));
        }
        for (pos, turn) in self.turns.iter().enumerate() {
            if turn.index != pos {
                return Err(Error::Integrity(format!(
                    "dialogue `{id}`: turn at position {pos} has index {}",
                    turn.index
                )));
            }
            if turn.text.trim().is_empty() {
                return Err(Error::Integrity(format!(
                    "dialogue `{id}`: turn {pos} has empty text"
                )));
            }
        }
        Ok(())
    }

    pub fn turn(&self, index: usize) -> Option<&Turn> {
        self.turns.get(index)
    }

    /// Plain-text rendering, one `speaker: text` line per turn.
    pub fn transcript(&self) -> String {
        self.turns
            .iter()
            .map(|t| format!("[{}] {}: {}", t.index, t.speaker_id, t.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A validated, immutable collection of dialogues.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    schema_version: u32,
    dialogues: Vec<Dialogue>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Result<Self> {
        let mut index = HashMap::with_capacity(dialogues.len());
        for (i, d) in dialogues.iter().enumerate() {
            d.validate()?;
            if index.insert(d.dialogue_id.clone(), i).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate dialogue_id `{}`",
                    d.dialogue_id
                )));
            }
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            dialogues,
            index,
        })
    }

    pub fn empty() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dialogues: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn get(&self, dialogue_id: &str) -> Option<&Dialogue> {
        self.index.get(dialogue_id).map(|&i| &self.dialogues[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.dialogues.iter().map(|d| d.dialogue_id.as_str())
    }

    /// Canonical serialization: one record per line, sorted keys.
    pub fn to_jsonl(&self) -> Result<String> {
        jsonl::encode_lines(&self.dialogues)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let dialogues: Vec<Dialogue> = jsonl::decode_lines(text)?;
        if dialogues.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Self::new(dialogues)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Dialogue;
    type IntoIter = std::slice::Iter<'a, Dialogue>;

    fn into_iter(self) -> Self::IntoIter {
        self.dialogues.iter()
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::from_jsonl(&jsonl::read_text(path)?)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    jsonl::write_text(path, &corpus.to_jsonl()?)
}

/// Train/dev/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Ratio<u64>,
    pub dev: Ratio<u64>,
    pub test: Ratio<u64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: Ratio<u64>, dev: Ratio<u64>, test: Ratio<u64>, seed: u64) -> Result<Self> {
        let zero = Ratio::from_integer(0);
        if train <= zero || dev <= zero || test <= zero {
            return Err(Error::Config(
                "split fractions must be strictly positive".into(),
            ));
        }
        if train + dev + test != Ratio::from_integer(1) {
            return Err(Error::Config(format!(
                "split fractions {train} + {dev} + {test} do not sum to 1"
            )));
        }
        Ok(Self {
            train,
            dev,
            test,
            seed,
        })
    }

    /// Builds fractions from integer weights, e.g. `7:1:2`.
    pub fn from_weights(train: u64, dev: u64, test: u64, seed: u64) -> Result<Self> {
        let total = train + dev + test;
        if total == 0 {
            return Err(Error::Config("split weights sum to zero".into()));
        }
        if train == 0 || dev == 0 || test == 0 {
            return Err(Error::Config(
                "split fractions must be strictly positive".into(),
            ));
        }
        Self::new(
            Ratio::new(train, total),
            Ratio::new(dev, total),
            Ratio::new(test, total),
            seed,
        )
    }

    /// Parses `a:b:c` weights.
    pub fn parse_weights(text: &str, seed: u64) -> Result<Self> {
        let parts: Vec<_> = text.split(':').map(str::trim).collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(Error::Config(format!(
                "split ratio `{text}` must have the form train:dev:test"
            )));
        };
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Config(format!("bad split weight `{s}`")))
        };
        Self::from_weights(parse(a)?, parse(b)?, parse(c)?, seed)
    }

    /// Target `(train, dev, test)` sizes: dev and test are floored, the
    /// remainder goes to train.
    pub fn target_sizes(&self, n: usize) -> (usize, usize, usize) {
        let n = n as u64;
        let floor = |r: Ratio<u64>| (n * r.numer() / r.denom()) as usize;
        let dev = floor(self.dev);
        let test = floor(self.test);
        (n as usize - dev - test, dev, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Every conversation lands wholly inside one partition.
    #[default]
    ByConversation,
    /// Shuffle dialogues individually.
    PerDialogue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub warnings: Vec<String>,
}

pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec, grouping: Grouping) -> Result<Split> {
    let n = corpus.len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let (train_target, dev_target, test_target) = spec.target_sizes(n);
    if n >= 10 && test_target == 0 {
        return Err(Error::Config(format!(
            "test fraction {} yields an empty test set for {n} dialogues",
            spec.test
        )));
    }

    // Units of assignment: conversation groups, or singleton dialogues.
    let mut units: Vec<Vec<usize>> = match grouping {
        Grouping::ByConversation => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, d) in corpus.dialogues().iter().enumerate() {
                groups.entry(d.conversation_id.as_str()).or_default().push(i);
            }
            groups.into_values().collect()
        }
        Grouping::PerDialogue => (0..n).map(|i| vec![i]).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    units.shuffle(&mut rng);

    let mut assignment = vec![Partition::Train; n];
    let (mut dev_count, mut test_count) = (0usize, 0usize);
    for unit in &units {
        let size = unit.len();
        let part = if test_count + size <= test_target {
            test_count += size;
            Partition::Test
        } else if dev_count + size <= dev_target {
            dev_count += size;
            Partition::Dev
        } else {
            Partition::Train
        };
        for &i in unit {
            assignment[i] = part;
        }
    }

    let mut warnings = Vec::new();
    let train_count = n - dev_count - test_count;
    if (train_count, dev_count, test_count) != (train_target, dev_target, test_target) {
        let msg = format!(
            "conversation grouping forced split sizes ({train_count}, {dev_count}, {test_count}) \
             instead of target ({train_target}, {dev_target}, {test_target})"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let pick = |p: Partition| -> Result<Corpus> {
        Corpus::new(
            corpus
                .dialogues()
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == p)
                .map(|(d, _)| d.clone())
                .collect(),
        )
    };
    Ok(Split {
        train: pick(Partition::Train)?,
        dev: pick(Partition::Dev)?,
        test: pick(Partition::Test)?,
        warnings,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn dialogue(id: &str, conv: &str, texts: &[&str]) -> Dialogue {
        Dialogue {
            dialogue_id: id.into(),
            conversation_id: conv.into(),
            proficiency: Some(Proficiency::Intermediate),
            topic: None,
            turns: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Turn {
                    speaker_id: if i % 2 == 0 { "A".into() } else { "B".into() },
                    index: i,
                    text: (*t).into(),
                })
                .collect(),
        }
    }

    #[test]
    fn rejects_single_turn_dialogue() {
        let d = dialogue("d1", "c1", &["hello"]);
        assert!(matches!(Corpus::new(vec![d]), Err(Error::Integrity(_))));
    }

    #[test]
    fn rejects_empty_turns_naming_the_dialogue() {
        let line = r#"{"dialogue_id":"broken-7","conversation_id":"c","proficiency":null,"topic":null,"turns":[]}"#;
        match Corpus::from_jsonl(line) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("broken-7")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_blank_turn_text_and_bad_indices() {
        let mut d = dialogue("d1", "c1", &["hi", "   "]);
        assert!(d.validate().is_err());
        d.turns[1].text = "ok".into();
        d.turns[1].index = 5;
        assert!(d.validate().is_err());
    }

    #[test]
    fn rejects_missing_conversation_id() {
        let d = dialogue("d1", " ", &["a", "b"]);
        assert!(matches!(d.validate(), Err(Error::Integrity(_))));
    }

    #[test]
    fn rejects_duplicates() {
        let a = dialogue("d1", "c1", &["a", "b"]);
        assert!(matches!(
            Corpus::new(vec![a.clone(), a]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(Corpus::from_jsonl("\n"), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let good = Corpus::new(vec![dialogue("d1", "c1", &["a", "b"])])
            .unwrap()
            .to_jsonl()
            .unwrap();
        let text = format!("{good}{{oops\n");
        assert!(matches!(
            Corpus::from_jsonl(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec::from_weights(7, 1, 2, 0).is_ok());
        assert!(SplitSpec::from_weights(7, 0, 3, 0).is_err());
        assert!(SplitSpec::new(
            Ratio::new(1, 2),
            Ratio::new(1, 4),
            Ratio::new(1, 8),
            0
        )
        .is_err());
        assert!(SplitSpec::parse_weights("7:1", 0).is_err());
        let spec = SplitSpec::parse_weights("7:1:2", 3).unwrap();
        assert_eq!(spec.test, Ratio::new(1, 5));
        assert_eq!(spec.target_sizes(10), (7, 1, 2));
        assert_eq!(spec.target_sizes(13), (10, 1, 2));
    }

    #[test]
    fn empty_test_fraction_is_config_error() {
        let dialogues = (0..10)
            .map(|i| dialogue(&format!("d{i}"), &format!("c{i}"), &["a", "b"]))
            .collect();
        let corpus = Corpus::new(dialogues).unwrap();
        let spec = SplitSpec::from_weights(90, 9, 1, 0).unwrap();
        assert!(matches!(
            split_corpus(&corpus, &spec, Grouping::ByConversation),
            Err(Error::Config(_))
        ));
    }
}
