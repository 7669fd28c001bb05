use std::collections::BTreeSet;

use dualspace::data::{
    gen_gaussian_ring, gen_shapes_dataset, split_holdout, BatchPlan, HoldoutRule, RingParams, ShapeParam, ShapeRanges,
};
use dualspace::nn::{chain, init_params, Activation};
use dualspace::{seed, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, s: u64) -> Tensor {
    let mut rng = seed::rng(s);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn grad_of(x: &Tensor, w: &Tensor, build: impl Fn(&mut Tape, dualspace::Var) -> dualspace::Var) -> Vec<f64> {
    let mut t = Tape::new();
    let xv = t.constant(x.clone()).unwrap();
    let wv = t.leaf(w.clone(), true).unwrap();
    let h = t.matmul(xv, wv).unwrap();
    let loss = build(&mut t, h);
    t.backward(loss).unwrap().get(wv).unwrap().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_linear_in_the_loss(
        s in any::<u64>(),
        rows in 1usize..6,
        k in 1usize..5,
        n in 1usize..5,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = random_matrix(rows, k, s);
        let w = random_matrix(k, n, s ^ 1);
        let f = |t: &mut Tape, h| { let y = t.tanh(h).unwrap(); t.sum(y).unwrap() };
        let g = |t: &mut Tape, h| { let y = t.sigmoid(h).unwrap(); t.sum(y).unwrap() };
        let combined = grad_of(&x, &w, |t, h| {
            let (fv, gv) = (f(t, h), g(t, h));
            let (fa, gb) = (t.scale(fv, a).unwrap(), t.scale(gv, b).unwrap());
            t.add(fa, gb).unwrap()
        });
        let gf = grad_of(&x, &w, f);
        let gg = grad_of(&x, &w, g);
        for i in 0..combined.len() {
            let expect = a * gf[i] + b * gg[i];
            prop_assert!((combined[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn mlp_output_shape(
        dims in prop::collection::vec(1usize..8, 2..5),
        batch in 1usize..10,
        s in any::<u64>(),
    ) {
        let m = init_params(&chain(&dims, Activation::leaky(), Activation::Sigmoid), s).unwrap();
        let y = m.predict(&random_matrix(batch, dims[0], s)).unwrap();
        prop_assert_eq!(y.shape(), &[batch, *dims.last().unwrap()][..]);
        prop_assert!(y.values().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn init_is_deterministic(dims in prop::collection::vec(1usize..8, 2..4), s in any::<u64>()) {
        let specs = chain(&dims, Activation::leaky(), Activation::Identity);
        prop_assert_eq!(init_params(&specs, s).unwrap(), init_params(&specs, s).unwrap());
    }

    #[test]
    fn ring_is_deterministic_and_labelled(s in any::<u64>(), modes in 2usize..10, n in 1usize..200) {
        let p = RingParams::new(modes, 2.0, 0.1);
        let a = gen_gaussian_ring(&p, n, s).unwrap();
        let b = gen_gaussian_ring(&p, n, s).unwrap();
        prop_assert_eq!(&a.samples, &b.samples);
        prop_assert_eq!(a.len(), n);
        prop_assert!(a.labels.as_ref().unwrap().iter().all(|&l| l < modes));
    }

    #[test]
    fn shapes_are_deterministic_pixels(s in any::<u64>(), n in 1usize..20) {
        let r = ShapeRanges::default_for_side(12);
        let a = gen_shapes_dataset(&r, n, s).unwrap();
        prop_assert_eq!(&a.samples, &gen_shapes_dataset(&r, n, s).unwrap().samples);
        prop_assert_eq!(a.dim(), 144);
        prop_assert!(a.samples.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn holdout_partitions_rows(s in any::<u64>(), labels in prop::collection::btree_set(0usize..8, 0..4)) {
        let d = gen_gaussian_ring(&RingParams::new(8, 2.0, 0.1), 300, s).unwrap();
        let rule = HoldoutRule::Labels { labels: labels.clone() };
        let d = split_holdout(d, &rule).unwrap();
        let train: BTreeSet<usize> = d.training_indices().into_iter().collect();
        let held: BTreeSet<usize> = d.heldout_indices().into_iter().collect();
        prop_assert!(train.is_disjoint(&held));
        prop_assert_eq!(train.len() + held.len(), d.len());
        let l = d.labels.as_ref().unwrap();
        prop_assert!(held.iter().all(|&i| labels.contains(&l[i])));
        prop_assert!(train.iter().all(|&i| !labels.contains(&l[i])));
    }

    #[test]
    fn rotation_holdout_matches_parameters(s in any::<u64>(), lo in 0.0f64..150.0, width in 1.0f64..60.0) {
        let d = gen_shapes_dataset(&ShapeRanges::default_for_side(8), 100, s).unwrap();
        let rule = HoldoutRule::ParamRange { param: ShapeParam::Rotation, min: lo, max: lo + width };
        let d = split_holdout(d, &rule).unwrap();
        let specs = d.shape_specs.as_ref().unwrap();
        for (i, &h) in d.heldout_mask().iter().enumerate() {
            let r = specs[i].param(ShapeParam::Rotation);
            prop_assert_eq!(h, r >= lo && r <= lo + width);
        }
    }

    #[test]
    fn holdout_rule_text_round_trips(labels in prop::collection::btree_set(0usize..20, 1..5), lo in 0u32..90, w in 0u32..90) {
        for rule in [
            HoldoutRule::Labels { labels: labels.clone() },
            HoldoutRule::ParamRange { param: ShapeParam::Rotation, min: lo as f64, max: (lo + w) as f64 },
        ] {
            prop_assert_eq!(HoldoutRule::parse(&rule.to_string()).unwrap(), rule);
        }
    }

    #[test]
    fn batch_plan_draws_full_distinct_batches(n in 0usize..200, batch in 1usize..40, s in any::<u64>()) {
        let idx: Vec<usize> = (0..n).map(|i| 3 * i).collect();
        let mut plan = BatchPlan::new(idx.clone(), batch, s).unwrap();
        let mut again = BatchPlan::new(idx.clone(), batch, s).unwrap();
        for _ in 0..2 {
            let e = plan.epoch();
            prop_assert_eq!(&e, &again.epoch());
            prop_assert_eq!(e.len(), n / batch);
            let flat: Vec<usize> = e.concat();
            let set: BTreeSet<usize> = flat.iter().copied().collect();
            prop_assert_eq!(set.len(), flat.len());
            prop_assert!(e.iter().all(|b| b.len() == batch));
            prop_assert!(flat.iter().all(|i| i % 3 == 0 && *i < 3 * n));
        }
    }
}
