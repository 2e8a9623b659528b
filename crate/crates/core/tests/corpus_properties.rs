use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dialeval::corpus::{split_corpus, Corpus, Grouping, SplitSpec};
use dialeval::synthetic::labeled_corpus;

fn corpus(n: usize, seed: u64) -> Corpus {
    labeled_corpus(n, seed).corpus
}

fn ids(c: &Corpus) -> BTreeSet<String> {
    c.ids().map(str::to_string).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jsonl_round_trip_is_lossless(n in 1usize..25, seed in any::<u64>()) {
        let c = corpus(n, seed);
        let text = c.to_jsonl().unwrap();
        let back = Corpus::from_jsonl(&text).unwrap();
        prop_assert_eq!(back.to_jsonl().unwrap(), text);
        prop_assert_eq!(back, c);
    }

    #[test]
    fn split_is_a_seeded_partition(
        n in 1usize..60,
        data_seed in any::<u64>(),
        split_seed in any::<u64>(),
        weights in (1u64..10, 1u64..4, 1u64..4),
        by_conversation in any::<bool>(),
    ) {
        let c = corpus(n, data_seed);
        let spec = SplitSpec::from_weights(weights.0, weights.1, weights.2, split_seed).unwrap();
        let grouping = if by_conversation { Grouping::ByConversation } else { Grouping::PerDialogue };
        let split = match split_corpus(&c, &spec, grouping) {
            Ok(s) => s,
            Err(_) => {
                // only a test target of zero on ten or more dialogues is refused
                prop_assert!(n >= 10 && spec.target_sizes(n).2 == 0);
                return Ok(());
            }
        };
        let again = split_corpus(&c, &spec, grouping).unwrap();
        prop_assert_eq!(&split.train, &again.train);
        prop_assert_eq!(&split.dev, &again.dev);
        prop_assert_eq!(&split.test, &again.test);

        let parts = [ids(&split.train), ids(&split.dev), ids(&split.test)];
        let union: BTreeSet<String> = parts.iter().flatten().cloned().collect();
        prop_assert_eq!(union, ids(&c));
        prop_assert_eq!(parts.iter().map(BTreeSet::len).sum::<usize>(), n);

        let (_, dev_target, test_target) = spec.target_sizes(n);
        prop_assert!(split.dev.len() <= dev_target && split.test.len() <= test_target);
        if grouping == Grouping::PerDialogue {
            prop_assert_eq!((split.dev.len(), split.test.len()), (dev_target, test_target));
            prop_assert!(split.warnings.is_empty());
        } else {
            let mut home: BTreeMap<String, usize> = BTreeMap::new();
            for (p, part) in [&split.train, &split.dev, &split.test].into_iter().enumerate() {
                for d in part.dialogues() {
                    let first = *home.entry(d.conversation_id.clone()).or_insert(p);
                    prop_assert_eq!(first, p, "conversation {} spans partitions", d.conversation_id);
                }
            }
        }
    }
}
