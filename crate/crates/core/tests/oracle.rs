use convblock::analysis::AnalysisOptions;
use convblock::model::random_blocking;
use convblock::simulator::{check_equivalence_with, SimOptions};
use convblock::LayerShape;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn layer_strategy() -> impl Strategy<Value = LayerShape> {
    (1u64..=16, 1u64..=16, 1u64..=8, 1u64..=8, prop::sample::select(vec![1u64, 3]), prop::sample::select(vec![1u64, 3]), 1u64..=2)
        .prop_filter_map("window larger than image", |(x, y, c, k, fw, fh, n)| {
            LayerShape::with_batch(x, y, c, k, fw, fh, n).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn analytic_matches_simulation(layer in layer_strategy(), seed in any::<u64>(), shift in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bs = random_blocking(&layer, 3, &mut rng);
        let opts = SimOptions { analysis: AnalysisOptions { shift_window: shift }, ..SimOptions::default() };
        let diff = check_equivalence_with(&bs, &layer, &opts).unwrap();
        prop_assert!(diff.is_empty(), "{} on {:?}: {:?}", bs, layer, diff);
    }
}
