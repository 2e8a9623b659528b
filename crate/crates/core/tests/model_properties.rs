use proptest::prelude::*;

use dialeval::models::{
    importances, model_from_str, model_to_string, permutation_importance, train, training_fingerprint, ModelKind,
    TrainConfig,
};
use dialeval::synthetic::separable_dataset;

fn kind() -> impl Strategy<Value = ModelKind> {
    prop::sample::select(ModelKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn training_is_a_function_of_data_and_config(kind in kind(), seed in any::<u64>(), data_seed in 0u64..1000) {
        let data = separable_dataset(40, 6, data_seed);
        let cfg = TrainConfig::new(kind, seed);
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a.fingerprint, &training_fingerprint(&data, &cfg).unwrap());
        let other = TrainConfig::new(kind, seed.wrapping_add(1));
        prop_assert_ne!(&a.fingerprint, &training_fingerprint(&data, &other).unwrap());
    }

    #[test]
    fn persisted_models_predict_identically(kind in kind(), seed in any::<u64>()) {
        let data = separable_dataset(40, 6, 5);
        let model = train(&data, &TrainConfig::new(kind, seed)).unwrap();
        let back = model_from_str(&model_to_string(&model).unwrap(), Some(kind)).unwrap();
        prop_assert_eq!(&back, &model);
        for row in &data.x {
            let (p, q) = (model.predict(row).unwrap(), back.predict(row).unwrap());
            prop_assert!(model.class_domain.contains(&p.label));
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn importances_are_finite_and_non_negative(kind in kind(), seed in any::<u64>()) {
        let data = separable_dataset(40, 6, 9);
        let model = train(&data, &TrainConfig::new(kind, seed)).unwrap();
        let native = importances(&model, Some(&data)).unwrap();
        let perm = permutation_importance(&model, &data, 3, seed).unwrap();
        for table in [native, perm] {
            prop_assert_eq!(table.scores.len(), 6);
            prop_assert!(table.scores.values().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
