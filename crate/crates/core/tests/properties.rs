use nmm_core::ctc::{ctc_loss, edit_distance, CtcTarget};
use nmm_core::ops::{self, conv1d, ConvSpec};
use nmm_core::tensor::Shape;
use nmm_core::{Rng, Tensor, TowerMask};
use proptest::prelude::*;

fn towers_and_bits() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<bool>>)> {
    prop::collection::vec(1usize..8, 1..4).prop_flat_map(|towers| {
        let bits: Vec<_> = towers
            .iter()
            .map(|&n| prop::collection::vec(any::<bool>(), n).prop_filter("one tower", |b| b.iter().any(|&x| x)))
            .collect();
        (Just(towers), bits)
    })
}

proptest! {
    #[test]
    fn mask_text_round_trips((towers, bits) in towers_and_bits()) {
        let mask = TowerMask::new(bits).unwrap();
        let parsed = TowerMask::parse(&mask.to_string(), &towers).unwrap();
        prop_assert_eq!(parsed, mask);
    }

    #[test]
    fn conv_output_length_is_ceil(time in 1usize..40, stride in 1usize..=2, half in 0usize..4, channels in 1usize..4) {
        let spec = ConvSpec::depthwise(channels, 2 * half + 1, stride);
        let x = Tensor::<f32>::full(Shape::new(1, channels, time), 1.0);
        let w = Tensor::<f32>::full(spec.weight_shape(), 0.5);
        let y = conv1d(&x, &w, None, &spec).unwrap();
        prop_assert_eq!(y.time(), time.div_ceil(stride));
    }

    #[test]
    fn batched_ctc_equals_per_item(seed in any::<u64>(), items in 1usize..4) {
        let mut rng = Rng::new(seed);
        let (classes, frames) = (4, 6);
        let logits = Tensor::<f64>::from_fn(Shape::new(items, classes, frames), |_, _, _| rng.uniform_in(-2.0, 2.0));
        let lp = ops::log_softmax(&logits);
        let targets: Vec<CtcTarget> = (0..items)
            .map(|_| CtcTarget::new((0..rng.range_inclusive(1, 3)).map(|_| rng.below(3)).collect(), 3))
            .collect();
        let batch = ctc_loss(&lp, &targets, None).unwrap();
        for (b, target) in targets.iter().enumerate() {
            let one = ctc_loss(&lp.slice_batch(b, 1), std::slice::from_ref(target), None).unwrap();
            prop_assert!((one.losses[0] - batch.losses[b]).abs() < 1e-12);
            prop_assert!(batch.losses[b] >= 0.0);
        }
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert!(edit_distance(&a, &b) >= a.len().abs_diff(b.len()));
    }
}
