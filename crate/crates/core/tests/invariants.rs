use proptest::prelude::*;
use sspn_core::estimator::{combine_estimates, contract, dot_reversed, GraphEdge, JoinGraph, Variant};
use sspn_core::hashing::EdgeHashAssignment;
use sspn_core::infer::ProductMode;
use sspn_core::learn::train_relation;
use sspn_core::model::{exact_sketch, IncidentEdge, RelationLayout, Side, TrainConfig};
use sspn_core::predicate::{dyadic_cover, Condition, Predicate};
use sspn_core::sketch::{
    add, build_agms, build_countmin, build_degree, clamp_degree, EdgeId, FrequencyTable, KeyHasher, Orientation,
    SketchKind, SketchLayout, SketchVector,
};
use sspn_core::spn::SelectivityLeaf;
use sspn_core::table::{CodedColumn, CodedTable};

fn layout(w: usize, o: Orientation) -> SketchLayout {
    SketchLayout::new(w, 0, vec![(EdgeId(0), o)]).unwrap()
}

fn rows_of(keys: &[u64]) -> Vec<Vec<Option<u64>>> {
    keys.iter().map(|&k| vec![Some(k)]).collect()
}

fn counts(keys: &[u64]) -> std::collections::HashMap<u64, u64> {
    let mut m = std::collections::HashMap::new();
    for &k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn countmin_never_underestimates(keys in prop::collection::vec(0u64..500, 1..400), seed: u64, lw in 2u32..7) {
        let w = 1usize << lw;
        let l = layout(w, Orientation::Positive);
        let a = EdgeHashAssignment::derive(seed, EdgeId(0), 0, w).unwrap();
        let h = KeyHasher::new(&l, &[&a]).unwrap();
        let cm = build_countmin(&l, &h, &rows_of(&keys)).unwrap();
        for (k, f) in counts(&keys) {
            prop_assert!(cm.counters[h.bucket(&[k])] >= f as f64);
        }
        prop_assert_eq!(cm.total(), keys.len() as f64);
    }

    #[test]
    fn sketches_are_linear(keys in prop::collection::vec(0u64..200, 1..300), cut in 0usize..300, seed: u64) {
        let cut = cut.min(keys.len());
        let w = 64;
        let l = layout(w, Orientation::Positive);
        let a = EdgeHashAssignment::derive(seed, EdgeId(0), 0, w).unwrap();
        let h = KeyHasher::new(&l, &[&a]).unwrap();
        for build in [build_agms, build_countmin] {
            let whole = build(&l, &h, &rows_of(&keys)).unwrap();
            let left = build(&l, &h, &rows_of(&keys[..cut])).unwrap();
            let right = build(&l, &h, &rows_of(&keys[cut..])).unwrap();
            prop_assert_eq!(add(&left, &right).unwrap(), whole);
        }
    }

    #[test]
    fn degree_bounded_by_countmin_and_subadditive(keys in prop::collection::vec(0u64..100, 1..300), cut in 0usize..300, seed: u64) {
        let cut = cut.min(keys.len());
        let w = 32;
        let l = layout(w, Orientation::Positive);
        let a = EdgeHashAssignment::derive(seed, EdgeId(0), 0, w).unwrap();
        let h = KeyHasher::new(&l, &[&a]).unwrap();
        let deg = |ks: &[u64]| build_degree(&FrequencyTable::from_rows(&rows_of(ks)), &l, &h);
        let (d, d1, d2) = (deg(&keys), deg(&keys[..cut]), deg(&keys[cut..]));
        let cm = build_countmin(&l, &h, &rows_of(&keys)).unwrap();
        let sum = add(&d1, &d2).unwrap();
        let clamped = clamp_degree(&sum, &d).unwrap();
        prop_assert_eq!(&clamped, &d);
        prop_assert_eq!(clamp_degree(&clamped, &d).unwrap(), clamped);
        for i in 0..w {
            prop_assert!(d.counters[i] <= cm.counters[i]);
            prop_assert!(d.counters[i] <= sum.counters[i]);
        }
    }

    #[test]
    fn two_way_contraction_is_reversed_dot(
        a in prop::collection::vec(-50.0f64..50.0, 16),
        b in prop::collection::vec(-50.0f64..50.0, 16),
    ) {
        let sa = SketchVector { kind: SketchKind::Agms, layout: layout(16, Orientation::Positive), counters: a };
        let sb = SketchVector { kind: SketchKind::Agms, layout: layout(16, Orientation::Negative), counters: b };
        let g = JoinGraph::new(2, vec![GraphEdge { edge: EdgeId(0), left: 0, right: 1 }]).unwrap();
        let got = contract(&[&sa, &sb], &g).unwrap();
        let want = dot_reversed(&sa, &sb);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn three_way_contraction_matches_explicit_sum(
        a in prop::collection::vec(-9.0f64..9.0, 8),
        b in prop::collection::vec(-9.0f64..9.0, 8),
        c in prop::collection::vec(-9.0f64..9.0, 8),
    ) {
        let w = 8;
        let (e0, e1) = (EdgeId(0), EdgeId(1));
        let sv = |edges, counters| SketchVector {
            kind: SketchKind::Agms,
            layout: SketchLayout::new(w, 0, edges).unwrap(),
            counters,
        };
        let sa = sv(vec![(e0, Orientation::Positive)], a.clone());
        let sb = sv(vec![(e0, Orientation::Negative), (e1, Orientation::Positive)], b.clone());
        let sc = sv(vec![(e1, Orientation::Negative)], c.clone());
        let g = JoinGraph::new(3, vec![
            GraphEdge { edge: e0, left: 0, right: 1 },
            GraphEdge { edge: e1, left: 1, right: 2 },
        ]).unwrap();
        let mut want = 0.0;
        for i in 0..w {
            for j in 0..w {
                want += a[i] * b[j] * c[(2 * w - i - j) % w];
            }
        }
        let got = contract(&[&sa, &sb, &sc], &g).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn combine_ordering(est in prop::collection::vec(-10.0f64..1e6, 1..9)) {
        let med = combine_estimates(&est, Variant::FagmsMedian).unwrap();
        let max = combine_estimates(&est, Variant::FagmsMax).unwrap();
        let min = combine_estimates(&est, Variant::Bound).unwrap();
        prop_assert!(min <= med && med <= max);
        prop_assert!(min >= 1.0);
    }

    #[test]
    fn dyadic_cover_tiles(l in 0u32..12, a: u64, b: u64) {
        let size = 1u64 << l;
        let (lo, hi) = ((a % size).min(b % size), (a % size).max(b % size));
        let cover = dyadic_cover(lo, hi);
        prop_assert!(cover.len() <= (2 * l as usize).max(1));
        let mut next = lo;
        for d in &cover {
            prop_assert_eq!(d.lo(), next);
            prop_assert!((d.hi() - d.lo() + 1).is_power_of_two());
            prop_assert_eq!(d.lo() % (d.hi() - d.lo() + 1), 0);
            next = d.hi() + 1;
        }
        prop_assert_eq!(next, hi + 1);
    }

    #[test]
    fn selectivity_ranges_never_underestimate(
        codes in prop::collection::vec(prop::option::weighted(0.95, 0u32..100), 1..500),
        lw in 2u32..6,
        seed: u64,
        a in 0u32..100,
        b in 0u32..100,
    ) {
        let leaf = SelectivityLeaf::build(0, codes.clone(), 100, 1 << lw, seed);
        let (lo, hi) = (a.min(b), a.max(b));
        let truth = codes.iter().filter(|c| matches!(c, Some(v) if (lo..=hi).contains(v))).count() as u64;
        prop_assert!(leaf.range_count(lo, hi) >= truth);
    }
}

fn random_table(seed: u64, rows: usize) -> CodedTable {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut key = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..rows {
        let k = rng.random_range(0..40u32);
        key.push(Some(k));
        x.push(Some((k / 4 + rng.random_range(0..3)) % 12));
        y.push(if rng.random_bool(0.1) {
            None
        } else {
            Some(rng.random_range(0..20))
        });
    }
    CodedTable::new(vec![
        CodedColumn::new(key, 40).unwrap(),
        CodedColumn::new(x, 12).unwrap(),
        CodedColumn::new(y, 20).unwrap(),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unfiltered_approximation_is_exact(seed in 0u64..1000, gamma in 0.05f64..1.0, digest in prop::bool::ANY) {
        let table = random_table(seed, 600);
        let layout = RelationLayout::new(
            3,
            vec![IncidentEdge { edge: EdgeId(0), side: Side::Left, attribute: 0, orientation: Orientation::Positive }],
            &[],
        )
        .unwrap();
        let config = TrainConfig {
            width: 256,
            copies: 2,
            seed,
            cluster_fraction: gamma,
            digest_limit: if digest { 4096 } else { 0 },
            rdc_sample: 600,
            ..TrainConfig::default()
        };
        let model = train_relation(&table, layout.clone(), &config).unwrap();
        let empty = Predicate::new();
        for subset in 0..model.subset_count() {
            for mode in [ProductMode::Product, ProductMode::MinProduct] {
                for kind in [SketchKind::Agms, SketchKind::CountMin] {
                    let approx = model.approx_sketches(subset, &empty, mode, kind).unwrap();
                    for copy in 0..2 {
                        let exact = exact_sketch(&table, &layout, model.bank(), subset, kind, copy, &empty).unwrap();
                        prop_assert_eq!(&approx[copy as usize], &exact);
                    }
                }
                for (copy, (_, d)) in model.approx_bound_sketches(subset, &empty, mode).unwrap().into_iter().enumerate() {
                    let exact = exact_sketch(&table, &layout, model.bank(), subset, SketchKind::Degree, copy as u32, &empty).unwrap();
                    prop_assert_eq!(d, exact);
                }
            }
        }
        let sel = model.selection_cardinality(&empty, ProductMode::Product).unwrap();
        prop_assert!((sel - 600.0).abs() < 1e-6);
    }

    #[test]
    fn min_product_dominates_product(seed in 0u64..1000, lo in 0u32..12, span in 0u32..12, y in 0u32..20) {
        let table = random_table(seed, 500);
        let layout = RelationLayout::new(
            3,
            vec![IncidentEdge { edge: EdgeId(0), side: Side::Left, attribute: 0, orientation: Orientation::Positive }],
            &[],
        )
        .unwrap();
        let config = TrainConfig { width: 128, copies: 1, seed, cluster_fraction: 0.2, rdc_sample: 500, ..TrainConfig::default() };
        let model = train_relation(&table, layout, &config).unwrap();
        let pred = Predicate::new()
            .or(1, Condition::range(lo, (lo + span).min(11)).unwrap())
            .or(2, Condition::Equal(y));
        let p = model.product_factors(&pred, ProductMode::Product).unwrap();
        let mp = model.product_factors(&pred, ProductMode::MinProduct).unwrap();
        prop_assert_eq!(p.len(), mp.len());
        for (a, b) in p.iter().zip(&mp) {
            prop_assert!(b >= a);
        }
        let s = model.selectivity(&pred, ProductMode::Product).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
