//! Property-based invariants over the public API: posterior
//! normalization, Bayes consistency against exhaustive enumeration,
//! relabeling invariance, formula round-trips, and EM monotonicity.

use lca_core::diagnostics::{consistency_probs, ClassConditionalTable};
use lca_core::estimator::{e_step, m_step_items};
use lca_core::selection::{aic, bic};
use lca_core::simulate::enumerate_joint;
use lca_core::{
    build_design_matrix, fit, Dataset, FitControls, Formula, Indicator, MissingPolicy, ModelSpec,
    Params,
};
use ndarray::Array2;
use proptest::collection::{btree_set, vec as pvec};
use proptest::prelude::*;
use proptest::sample::Index;

/// Random intercept-only parameters: 1-3 classes over 1-3 indicators
/// with 2-3 categories each. Weights are bounded away from zero so the
/// probability floor never binds and enumeration comparisons are exact.
fn arb_params() -> impl Strategy<Value = Params> {
    (1usize..=3, pvec(2usize..=3, 1..=3)).prop_flat_map(|(r_n, ks)| {
        let total = r_n * ks.iter().sum::<usize>();
        (
            Just(r_n),
            Just(ks),
            pvec(0.05f64..1.0, total),
            pvec(-1.5f64..1.5, r_n - 1),
        )
            .prop_map(|(r_n, ks, weights, betas)| {
                let mut next = weights.into_iter();
                let item_probs: Vec<Vec<Vec<f64>>> = (0..r_n)
                    .map(|_| {
                        ks.iter()
                            .map(|&k| {
                                let row: Vec<f64> = (0..k).map(|_| next.next().unwrap()).collect();
                                let total: f64 = row.iter().sum();
                                row.into_iter().map(|w| w / total).collect()
                            })
                            .collect()
                    })
                    .collect();
                let beta = Array2::from_shape_fn((r_n - 1, 1), |(c, _)| betas[c]);
                Params { item_probs, beta }
            })
    })
}

/// Parameters plus 1-8 response rows drawn over the matching category
/// ranges.
fn arb_instance() -> impl Strategy<Value = (Params, Vec<Vec<u8>>)> {
    arb_params().prop_flat_map(|params| {
        let ks: Vec<usize> = params.item_probs[0].iter().map(Vec::len).collect();
        let row = pvec(any::<Index>(), ks.len());
        (Just(params), Just(ks), pvec(row, 1..=8)).prop_map(|(params, ks, picks)| {
            let rows = picks
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .zip(&ks)
                        .map(|(pick, &k)| pick.index(k) as u8 + 1)
                        .collect()
                })
                .collect();
            (params, rows)
        })
    })
}

fn dataset_from_rows(ks: &[usize], rows: &[Vec<u8>]) -> Dataset {
    let indicators: Vec<Indicator> = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| Indicator::new(format!("V{j}"), k as u8).unwrap())
        .collect();
    let cells = rows
        .iter()
        .map(|row| row.iter().map(|&c| Some(c)).collect())
        .collect();
    Dataset::new(indicators, cells, vec![]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn joint_enumeration_is_a_distribution(params in arb_params()) {
        let joint = enumerate_joint(&params, &[1.0]).unwrap();
        prop_assert!(joint.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let total: f64 = joint.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "total mass {total}");
    }

    #[test]
    fn posteriors_normalize_and_match_exhaustive_enumeration(
        (params, rows) in arb_instance()
    ) {
        let ks: Vec<usize> = params.item_probs[0].iter().map(Vec::len).collect();
        let d = dataset_from_rows(&ks, &rows);
        let x = build_design_matrix(&Formula::intercept_only(), &d).unwrap();
        let (theta, ll) = e_step(&params, &d, &x, 1e-12, MissingPolicy::Complete).unwrap();

        let joint = enumerate_joint(&params, &[1.0]).unwrap();
        let mut expected_ll = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let row_sum: f64 = theta.row(i).sum();
            prop_assert!((row_sum - 1.0).abs() < 1e-12, "row {i} sums to {row_sum}");
            let idx = joint.pattern_index(row).unwrap();
            expected_ll += joint.probs[idx].ln();
        }
        prop_assert!(
            (ll - expected_ll).abs() <= 1e-9 * (1.0 + expected_ll.abs()),
            "e-step {ll} vs enumeration {expected_ll}"
        );
    }

    #[test]
    fn likelihood_is_invariant_under_class_relabeling(
        (params, rows) in arb_instance()
    ) {
        prop_assume!(params.n_classes() > 1);
        let ks: Vec<usize> = params.item_probs[0].iter().map(Vec::len).collect();
        let d = dataset_from_rows(&ks, &rows);
        let x = build_design_matrix(&Formula::intercept_only(), &d).unwrap();
        let (_, ll) = e_step(&params, &d, &x, 1e-12, MissingPolicy::Complete).unwrap();

        let shares = params.mixing_shares().expect("intercept-only parameters");
        let reversed = Params::from_shares(
            params.item_probs.iter().rev().cloned().collect(),
            &shares.iter().rev().cloned().collect::<Vec<_>>(),
        )
        .unwrap();
        let (_, ll_rev) = e_step(&reversed, &d, &x, 1e-12, MissingPolicy::Complete).unwrap();
        prop_assert!(
            (ll - ll_rev).abs() <= 1e-9 * (1.0 + ll.abs()),
            "{ll} vs relabeled {ll_rev}"
        );
    }

    #[test]
    fn item_updates_return_simplex_rows((params, rows) in arb_instance()) {
        let ks: Vec<usize> = params.item_probs[0].iter().map(Vec::len).collect();
        let d = dataset_from_rows(&ks, &rows);
        let x = build_design_matrix(&Formula::intercept_only(), &d).unwrap();
        let (theta, _) = e_step(&params, &d, &x, 1e-12, MissingPolicy::Complete).unwrap();
        let (probs, empty) = m_step_items(&theta, &d);
        prop_assert!(empty.is_empty(), "no class can be empty with soft posteriors");
        for per_class in &probs {
            for row in per_class {
                let total: f64 = row.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }

    #[test]
    fn information_criteria_match_their_formulas(
        ll in -1e6f64..0.0,
        k in 0usize..200,
        n in 1usize..100_000,
    ) {
        prop_assert_eq!(aic(ll, k), -2.0 * ll + 2.0 * k as f64);
        prop_assert_eq!(bic(ll, k, n), -2.0 * ll + k as f64 * (n as f64).ln());
        // BIC penalizes harder than AIC once ln(n) > 2.
        if n >= 8 && k > 0 {
            prop_assert!(bic(ll, k, n) > aic(ll, k));
        }
    }

    #[test]
    fn formulas_survive_a_render_parse_round_trip(
        terms in btree_set(btree_set(prop::sample::select(vec!["a", "b", "c", "d"]), 1..=3), 0..=5)
    ) {
        let text = if terms.is_empty() {
            "1".to_string()
        } else {
            terms
                .iter()
                .map(|t| t.iter().copied().collect::<Vec<_>>().join(":"))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let parsed = Formula::parse(&text).unwrap();
        let rendered = parsed.render();
        let reparsed = Formula::parse(&rendered).unwrap();
        prop_assert_eq!(&parsed, &reparsed, "render: {}", rendered);
        prop_assert_eq!(rendered.clone(), reparsed.render());
    }

    #[test]
    fn listwise_filtering_is_idempotent_and_consistent_with_validation(
        rows in pvec(pvec(prop::option::weighted(0.8, 1u8..=3), 2), 1..=12)
    ) {
        let indicators = vec![
            Indicator::new("A", 3).unwrap(),
            Indicator::new("B", 3).unwrap(),
        ];
        let d = Dataset::new(indicators, rows.clone(), vec![]).unwrap();
        let report = d.validate();
        let n_complete = rows.iter().filter(|r| r.iter().all(Option::is_some)).count();
        prop_assert_eq!(report.rows_dropped, d.n_rows() - n_complete);

        match d.listwise_filter() {
            Ok(filtered) => {
                prop_assert_eq!(filtered.n_rows(), n_complete);
                prop_assert!((0..filtered.n_rows()).all(|i| filtered.row_is_complete(i)));
                let again = filtered.listwise_filter().unwrap();
                prop_assert_eq!(again, filtered);
            }
            Err(_) => prop_assert_eq!(n_complete, 0),
        }
    }

    #[test]
    fn consistency_masses_stay_within_the_unit_interval(
        weights in pvec(0.05f64..1.0, 9),
        share_weights in pvec(0.05f64..1.0, 3),
    ) {
        let block: Vec<Vec<f64>> = weights
            .chunks(3)
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.iter().map(|w| w / total).collect()
            })
            .collect();
        let table = ClassConditionalTable::new(
            vec![Indicator::new("A", 3).unwrap()],
            vec![block],
        )
        .unwrap();
        let total: f64 = share_weights.iter().sum();
        let shares: Vec<f64> = share_weights.iter().map(|w| w / total).collect();
        let pairs = consistency_probs(&table, &shares).unwrap();
        prop_assert!(pairs[0].p_consistent >= 0.0);
        prop_assert!(pairs[0].p_extreme_misclass >= 0.0);
        prop_assert!(pairs[0].p_consistent + pairs[0].p_extreme_misclass <= 1.0 + 1e-12);
    }
}

proptest! {
    // Full EM fits are comparatively slow; fewer, smaller cases.
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn em_never_decreases_the_likelihood(
        rows in pvec(pvec(1u8..=2, 2), 6..=24),
        seed in 0u64..1000,
    ) {
        let indicators = vec![
            Indicator::new("A", 2).unwrap(),
            Indicator::new("B", 2).unwrap(),
        ];
        let cells = rows.iter().map(|r| r.iter().map(|&c| Some(c)).collect()).collect();
        let d = Dataset::new(indicators.clone(), cells, vec![]).unwrap();
        let mut spec = ModelSpec::new(2, indicators, Formula::intercept_only());
        spec.controls = FitControls {
            n_restarts: 1,
            max_iter: 60,
            seed,
            ..FitControls::default()
        };
        let m = fit(&d, &spec).unwrap();
        for trace in m.ll_traces() {
            for step in trace.windows(2) {
                prop_assert!(
                    step[1] >= step[0] - 1e-9,
                    "log-likelihood fell from {} to {}",
                    step[0],
                    step[1]
                );
            }
        }
    }
}
