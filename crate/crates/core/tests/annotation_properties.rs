mod common;

use proptest::prelude::*;

use dialeval::annotation::{aggregate_spans, krippendorff_alpha, pearson_r, resolve_macro_label, FeatureSpan, MERGED};
use dialeval::{Score, Taxonomy};

use common::mode_oracle;

const FEATURES: [&str; 5] = [
    "backchannel",
    "code_switching",
    "reference_word",
    "negotiation_of_meaning",
    "subordinate_clause",
];

fn spans(annotator: &'static str) -> impl Strategy<Value = Vec<FeatureSpan>> {
    prop::collection::vec((0usize..3, 0usize..FEATURES.len(), 0usize..25, 1usize..9), 0..10).prop_map(
        move |raw| {
            raw.into_iter()
                .map(|(turn, f, start, len)| FeatureSpan {
                    dialogue_id: "p1".into(),
                    turn_index: turn,
                    feature_id: FEATURES[f].into(),
                    start,
                    end: start + len,
                    annotator_id: annotator.into(),
                })
                .collect()
        },
    )
}

fn score() -> impl Strategy<Value = Score> {
    (1i64..=5).prop_map(|v| Score::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn aggregation_is_symmetric_idempotent_and_overlap_free(a in spans("ann_a"), b in spans("ann_b")) {
        let tax = Taxonomy::builtin();
        let ab = aggregate_spans(&a, &b, &tax).unwrap();
        prop_assert_eq!(&ab, &aggregate_spans(&b, &a, &tax).unwrap());
        prop_assert_eq!(&ab, &aggregate_spans(&ab, &ab, &tax).unwrap());
        for (i, s) in ab.iter().enumerate() {
            prop_assert_eq!(s.annotator_id.as_str(), MERGED);
            prop_assert!(s.start < s.end);
            for t in &ab[i + 1..] {
                prop_assert!(!(s.feature_id == t.feature_id && s.overlaps(t)), "{:?} overlaps {:?}", s, t);
            }
        }
    }

    #[test]
    fn aggregation_with_nothing_keeps_merged_own_spans(a in spans("ann_a")) {
        let tax = Taxonomy::builtin();
        let alone = aggregate_spans(&a, &[], &tax).unwrap();
        // every input character of a feature stays covered by that feature
        for s in &a {
            for pos in s.start..s.end {
                prop_assert!(alone.iter().any(|m| m.turn_index == s.turn_index
                    && m.feature_id == s.feature_id && m.start <= pos && pos < m.end));
            }
        }
    }

    #[test]
    fn alpha_is_symmetric_and_at_most_one(
        pairs in prop::collection::vec((0u32..4, 0u32..4), 2..80),
    ) {
        let (u1, u2): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
        match (krippendorff_alpha(&u1, &u2), krippendorff_alpha(&u2, &u1)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!(a <= 1.0 + 1e-12);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "asymmetric outcome {:?} / {:?}", a, b),
        }
    }

    #[test]
    fn pearson_is_scale_invariant(
        pairs in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 3..60),
        scale in 0.5f64..4.0,
        shift in -3.0f64..3.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let moved: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
        if let (Ok(r), Ok(r2)) = (pearson_r(&x, &y), pearson_r(&moved, &y)) {
            prop_assert!((r - r2).abs() < 1e-9);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn resolved_label_follows_agreement_or_pool(
        s1 in score(),
        s2 in score(),
        pool in prop::collection::vec(score(), 1..12),
    ) {
        let got = resolve_macro_label([s1, s2], &pool).unwrap();
        if s1 == s2 {
            prop_assert_eq!(got, s1);
        } else {
            prop_assert!(pool.contains(&got));
        }
        let raw: Vec<u8> = pool.iter().map(|s| s.get()).collect();
        prop_assert_eq!(got.get(), mode_oracle([s1.get(), s2.get()], &raw));
    }
}
