use greenrec::eval::{
    evaluate, gndcg_at_k, list_gdcg, list_ndcg, make_batches, mean_ndcg, user_lists, EvalOptions, EvalReport, KMetrics, Metric, RankedEntry,
    RankedList, TestLists,
};
use greenrec::footprint::GreennessTable;
use greenrec::models::{fit, Hyper};
use greenrec::prep::{split, SplitRatios};
use greenrec::rerank::{alpha_sweep, default_alphas, mean_tradeoff, rerank_list, sweep_reports};
use greenrec::synth::{generate, SynthParams};
use proptest::prelude::*;

fn entries(max_users: usize, max_len: usize) -> impl Strategy<Value = Vec<RankedEntry>> {
    prop::collection::vec((0..max_users, 0usize..60, 0.0f64..=5.0, 0u8..=5, 0.0f64..=5.0), 1..max_len).prop_map(|rows| {
        let mut seen = std::collections::HashSet::new();
        rows.into_iter()
            .filter(|r| seen.insert((r.0, r.1)))
            .map(|(user, item, score, rating, greenness)| RankedEntry {
                user,
                item,
                score,
                rating: rating as f64,
                greenness,
            })
            .collect()
    })
}

fn ids(l: &RankedList) -> Vec<(usize, usize)> {
    let mut v: Vec<_> = l.entries().iter().map(|e| (e.user, e.item)).collect();
    v.sort_unstable();
    v
}

proptest! {
    #[test]
    fn metrics_stay_in_unit_interval(es in entries(6, 80), k in 1usize..60, seed in any::<u64>()) {
        let lists = TestLists::build(es, 7, seed).unwrap();
        for m in lists.metrics(&[k]).unwrap() {
            prop_assert!((0.0..=1.0).contains(&m.ndcg));
            prop_assert!((0.0..=1.0).contains(&m.gndcg));
        }
    }

    #[test]
    fn batches_partition_the_input(es in entries(5, 120), bs in 1usize..30, seed in any::<u64>()) {
        let batches = make_batches(es.clone(), bs, seed).unwrap();
        let n = es.len();
        prop_assert_eq!(batches.len(), n.div_ceil(bs));
        for (b, l) in batches.iter().enumerate() {
            let expected = if b + 1 < batches.len() { bs } else { n - bs * (batches.len() - 1) };
            prop_assert_eq!(l.len(), expected);
        }
        let mut all: Vec<(usize, usize)> = batches.iter().flat_map(ids).collect();
        all.sort_unstable();
        let mut input: Vec<(usize, usize)> = es.iter().map(|e| (e.user, e.item)).collect();
        input.sort_unstable();
        prop_assert_eq!(all, input);
        prop_assert_eq!(batches, make_batches(es, bs, seed).unwrap());
    }

    #[test]
    fn ranked_lists_respect_the_tie_rule(es in entries(1, 30)) {
        let l = RankedList::new(0, es);
        for w in l.entries().windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item < w[1].item));
        }
    }

    #[test]
    fn rerank_keeps_membership_and_alpha_one_order(es in entries(1, 30), alpha in 0.0f64..=1.0) {
        let l = RankedList::new(0, es);
        let r = rerank_list(&l, alpha).unwrap();
        prop_assert_eq!(ids(&r), ids(&l));
        prop_assert_eq!(rerank_list(&l, 1.0).unwrap(), l.clone());
        for (x, y) in r.entries().iter().zip(r.entries().iter().skip(1)) {
            prop_assert!(x.score >= y.score);
        }
    }

    #[test]
    fn sweep_endpoints(es in entries(8, 100), seed in any::<u64>()) {
        prop_assume!(es.iter().any(|e| e.greenness > 0.0));
        let lists = TestLists::build(es, 10, seed).unwrap();
        let ks = [1, 3, 10, 50];
        let base = lists.metrics(&ks).unwrap();
        let sweep = alpha_sweep(&lists, &default_alphas(), &ks).unwrap();
        prop_assert_eq!(sweep.len(), 11 * ks.len());
        for p in &sweep {
            if p.alpha == 0.0 {
                prop_assert_eq!(p.gndcg, 1.0);
            }
            if p.alpha == 1.0 {
                let b = base.iter().find(|b| b.k == p.k).unwrap();
                prop_assert_eq!(p.ndcg.to_bits(), b.ndcg.to_bits());
                prop_assert_eq!(p.gndcg.to_bits(), b.gndcg.to_bits());
            }
        }
    }

    #[test]
    fn greener_as_alpha_falls(es in entries(6, 80), k in 1usize..20) {
        prop_assume!(es.iter().any(|e| e.greenness > 0.0));
        let lists = user_lists(&es);
        let alphas = default_alphas();
        for l in &lists {
            let g: Vec<f64> = alphas.iter().map(|&a| list_gdcg(&rerank_list(l, a).unwrap(), k)).collect();
            for w in g.windows(2) {
                prop_assert!(w[0] >= w[1] - 1e-12 * w[1].abs());
            }
        }
        let at = |a: f64| gndcg_at_k(&lists.iter().map(|l| rerank_list(l, a).unwrap()).collect::<Vec<_>>(), k).unwrap();
        prop_assert!(at(0.0) >= at(1.0));
        prop_assert_eq!(at(0.0), 1.0);
    }

    #[test]
    fn user_order_does_not_matter(es in entries(6, 60), k in 1usize..20) {
        let a = gndcg_at_k(&user_lists(&es), k).unwrap();
        let mut rev = user_lists(&es);
        rev.reverse();
        let b = gndcg_at_k(&rev, k).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn user_lists_group_by_user(es in entries(6, 60)) {
        let lists = user_lists(&es);
        for l in &lists {
            prop_assert!(l.entries().iter().all(|e| e.user == l.owner));
        }
        prop_assert_eq!(lists.iter().map(RankedList::len).sum::<usize>(), es.len());
    }
}

#[test]
fn reversed_ranking_scores_lower() {
    let ratings = [5.0, 4.0, 2.0, 1.0, 0.0];
    let make = |flip: bool| {
        RankedList::new(
            0,
            ratings
                .iter()
                .enumerate()
                .map(|(item, &rating)| RankedEntry {
                    user: 0,
                    item,
                    score: if flip { rating } else { 5.0 - rating },
                    rating,
                    greenness: 1.0,
                })
                .collect(),
        )
    };
    assert_eq!(list_ndcg(&make(true), 5), 1.0);
    assert!(list_ndcg(&make(false), 5) < list_ndcg(&make(true), 5));
}

#[test]
fn greener_item_wins_at_half_alpha() {
    let mk = |item, score, greenness| RankedEntry {
        user: 0,
        item,
        score,
        rating: 5.0,
        greenness,
    };
    let l = RankedList::new(0, vec![mk(0, 4.8, 1.0), mk(1, 4.2, 5.0)]);
    let r = rerank_list(&l, 0.5).unwrap();
    assert_eq!(r.entries()[0].item, 1);
    assert!((r.entries()[0].score - 4.6).abs() < 1e-12 && (r.entries()[1].score - 2.9).abs() < 1e-12);
    let tied = RankedList::new(0, vec![mk(7, 3.0, 2.0), mk(3, 2.0, 3.0)]);
    assert_eq!(rerank_list(&tied, 0.5).unwrap().entries()[0].item, 3);
}

#[test]
fn empty_inputs_and_bad_k_are_errors() {
    assert!(gndcg_at_k(&[], 10).is_err());
    assert!(mean_ndcg(&[], 10).is_err());
    let l = RankedList::new(0, vec![]);
    assert!(gndcg_at_k(&[l], 0).is_err());
    assert!(make_batches(vec![], 100, 0).is_err());
}

#[test]
fn global_mean_ranks_by_item_id() {
    let (data, green) = generate(&SynthParams::preset("tiny", 2).unwrap()).unwrap();
    let s = split(&data, SplitRatios::default(), 2).unwrap();
    let model = fit(&Hyper::GlobalMean, &s.train.matrix(), 0).unwrap();
    let entries = greenrec::eval::score_test(&model, &s.test, &green).unwrap();
    for l in user_lists(&entries) {
        let items: Vec<usize> = l.entries().iter().map(|e| e.item).collect();
        assert!(items.windows(2).all(|w| w[0] < w[1]));
    }
    let m = evaluate(&model, &s, &green, &[10, 20, 50], &EvalOptions::default()).unwrap();
    assert_eq!(m.len(), 3);
}

#[test]
fn missing_greenness_lists_items() {
    let (data, _) = generate(&SynthParams::preset("tiny", 2).unwrap()).unwrap();
    let s = split(&data, SplitRatios::default(), 2).unwrap();
    let model = fit(&Hyper::GlobalMean, &s.train.matrix(), 0).unwrap();
    let partial = GreennessTable::from_greenness(&[2.5]).unwrap();
    let err = evaluate(&model, &s, &partial, &[10], &EvalOptions::default()).unwrap_err();
    assert!(matches!(err, greenrec::Error::MissingGreenness(ref v) if !v.is_empty()));
}

#[test]
fn reports_aggregate_sweeps_across_splits() {
    let mk = |shift: f64| {
        default_alphas()
            .into_iter()
            .flat_map(|alpha| {
                [10, 20].map(|k| greenrec::TradeoffPoint {
                    alpha,
                    k,
                    ndcg: 0.9 - 0.1 * (1.0 - alpha) + shift,
                    gndcg: 0.5 + 0.2 * (1.0 - alpha) + shift,
                    ndcg_rel: 0.0,
                    gndcg_rel: 0.0,
                })
            })
            .collect::<Vec<_>>()
    };
    let per_split = vec![mk(0.0), mk(0.02)];
    let reports = sweep_reports("svd", &per_split).unwrap();
    assert_eq!(reports.len(), 11);
    let rows: usize = reports.iter().map(|r| r.csv_rows().count()).sum();
    assert_eq!(rows, 11 * 2 * 2);
    let last = &reports[10];
    assert_eq!(last.alpha, 1.0);
    let s = last.get(10, Metric::Ndcg).unwrap();
    assert!((s.mean - 0.91).abs() < 1e-12 && s.n_splits == 2);
    assert!((s.std - 0.02f64 / 2f64.sqrt()).abs() < 1e-12);

    let mean = mean_tradeoff(&per_split).unwrap();
    let p0 = mean.iter().find(|p| p.alpha == 0.0 && p.k == 20).unwrap();
    assert!((p0.gndcg_rel - (0.71 / 0.51 - 1.0)).abs() < 1e-12);

    let single = EvalReport::from_splits("x", 1.0, &[vec![KMetrics { k: 10, ndcg: 0.5, gndcg: 0.25 }]]).unwrap();
    assert_eq!(single.get(10, Metric::Gndcg).unwrap().std, 0.0);
}
