use std::collections::BTreeSet;

use proptest::prelude::*;

use rerankit::corpus::{self, PairScore, Qrels, RankedRun, TeacherIndex, TeacherJudgment};
use rerankit::diagnostics;
use rerankit::metrics;
use rerankit::mining::{self, CandidateClass, MiningConfig};
use rerankit::objectives::{self, ObjectiveConfig};
use rerankit::scorer;

fn run_of(grades_in_order: &[u32]) -> (RankedRun, Qrels) {
    let mut qrels = Qrels::new();
    let list: Vec<(String, f64)> = grades_in_order
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let vid = format!("d{i}");
            qrels.insert("q", &vid, g).unwrap();
            (vid, -(i as f64))
        })
        .collect();
    (RankedRun::from_ordered([("q".to_string(), list)], "t").unwrap(), qrels)
}

/// Same documents, but the ranked order is `order` (indices into `grades`).
fn permuted_run(grades: &[u32], order: &[usize]) -> (RankedRun, Qrels) {
    let mut qrels = Qrels::new();
    for (i, &g) in grades.iter().enumerate() {
        qrels.insert("q", &format!("d{i}"), g).unwrap();
    }
    let list = order.iter().enumerate().map(|(r, &d)| (format!("d{d}"), -(r as f64)));
    (RankedRun::from_ordered([("q".to_string(), list)], "t").unwrap(), qrels)
}

proptest! {
    #[test]
    fn metrics_stay_in_unit_interval(grades in prop::collection::vec(0u32..4, 1..20), k in 1usize..25) {
        let (run, qrels) = run_of(&grades);
        let r = metrics::recall_at(&run, &qrels, k).unwrap();
        let n = metrics::ndcg_at(&run, &qrels, k).unwrap();
        for v in r.per_query.values().chain(n.per_query.values()) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(v));
        }
    }

    #[test]
    fn swapping_equal_grades_changes_nothing(
        grades in prop::collection::vec(0u32..3, 2..12),
        k in 1usize..14,
        i in 0usize..12,
        j in 0usize..12,
    ) {
        let n = grades.len();
        let (i, j) = (i % n, j % n);
        prop_assume!(grades[i] == grades[j]);
        let mut order: Vec<usize> = (0..n).collect();
        let (a, qrels) = permuted_run(&grades, &order);
        order.swap(i, j);
        let (b, _) = permuted_run(&grades, &order);
        prop_assert_eq!(metrics::ndcg_at(&a, &qrels, k).unwrap().mean, metrics::ndcg_at(&b, &qrels, k).unwrap().mean);
        prop_assert_eq!(metrics::recall_at(&a, &qrels, k).unwrap().mean, metrics::recall_at(&b, &qrels, k).unwrap().mean);
    }

    #[test]
    fn recall_is_monotone_in_k(grades in prop::collection::vec(0u32..2, 1..20), k in 1usize..20) {
        let (run, qrels) = run_of(&grades);
        let a = metrics::recall_at(&run, &qrels, k).unwrap().mean;
        let b = metrics::recall_at(&run, &qrels, k + 1).unwrap().mean;
        prop_assert!(b >= a);
    }

    #[test]
    fn ideal_order_has_unit_ndcg(mut grades in prop::collection::vec(0u32..4, 1..20), k in 1usize..25) {
        prop_assume!(grades.iter().any(|&g| g > 0));
        grades.sort_unstable_by(|a, b| b.cmp(a));
        let (run, qrels) = run_of(&grades);
        let v = metrics::ndcg_at(&run, &qrels, k).unwrap().mean;
        prop_assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_is_zero_against_itself(x in 1e-6f64..1.0) {
        prop_assert_eq!(metrics::delta_pct(x, x), Some(0.0));
    }

    #[test]
    fn ecdf_is_a_valid_cdf(scores in prop::collection::vec(-50i32..50, 1..60)) {
        let scores: Vec<f64> = scores.into_iter().map(|s| f64::from(s) / 4.0).collect();
        let c = diagnostics::ecdf(&scores).unwrap();
        prop_assert!(c.values.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.probabilities.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*c.probabilities.last().unwrap(), 1.0);
        for &v in &scores {
            let at = scores.iter().filter(|&&s| s <= v).count() as f64 / scores.len() as f64;
            prop_assert_eq!(c.eval(v), at);
        }
        prop_assert_eq!(c.eval(c.values[0] - 1.0), 0.0);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        rel in prop::collection::vec(-20i32..20, 1..30),
        non in prop::collection::vec(-20i32..20, 1..30),
    ) {
        let rel: Vec<f64> = rel.into_iter().map(f64::from).collect();
        let non: Vec<f64> = non.into_iter().map(f64::from).collect();
        let f = |x: &f64| (x / 7.0).exp() * 3.0 - 1.0;
        let a = diagnostics::separation_stats(&rel, &non).unwrap();
        let b = diagnostics::separation_stats(&rel.iter().map(f).collect::<Vec<_>>(), &non.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert!((a.auc - b.auc).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.auc));
        prop_assert!((0.0..=1.0).contains(&a.overlap));
        let swapped = diagnostics::separation_stats(&non, &rel).unwrap();
        prop_assert!((a.auc + swapped.auc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_is_shift_invariant_and_bounded(
        cells in prop::collection::vec((0u8..4, 0u8..4, -10.0f64..10.0), 2..16),
        shift in -1e3f64..1e3,
    ) {
        let mut seen = BTreeSet::new();
        let scores: Vec<PairScore> = cells
            .into_iter()
            .filter(|(q, v, _)| seen.insert((*q, *v)))
            .map(|(q, v, s)| PairScore { query_id: format!("q{q}"), video_id: format!("v{v}"), score: s })
            .collect();
        prop_assume!(scores.len() >= 2);
        let shifted: Vec<PairScore> = scores.iter().map(|p| PairScore { score: p.score + shift, ..p.clone() }).collect();
        let a = diagnostics::variance_decomposition(&scores).unwrap();
        let b = diagnostics::variance_decomposition(&shifted).unwrap();
        for (x, y) in [(a.r2_query_only, b.r2_query_only), (a.r2_video_only, b.r2_video_only), (a.r2_additive, b.r2_additive)] {
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() < 1e-6);
                prop_assert!(x <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn partition_covers_pool_exactly(
        pool in prop::collection::vec((0u8..2, -12.0f64..4.0, any::<bool>()), 1..20),
    ) {
        let mut qrels = Qrels::new();
        let mut judgments = Vec::new();
        let ids: Vec<String> = (0..pool.len()).map(|i| format!("v{i}")).collect();
        for (id, &(label, margin, relevant)) in ids.iter().zip(&pool) {
            qrels.insert("q", id, u32::from(relevant)).unwrap();
            judgments.push(TeacherJudgment { query_id: "q".into(), video_id: id.clone(), label, margin, p_yes: 0.5 });
        }
        let teacher = TeacherIndex::new(judgments).unwrap();
        let cfg = MiningConfig::default();
        let p = mining::partition_candidates("q", &ids, &qrels, &teacher, &cfg).unwrap();
        for (id, &(label, margin, relevant)) in ids.iter().zip(&pool) {
            let hits = [
                (p.trusted_negatives.contains(id), CandidateClass::TrustedNegative),
                (p.suspected_positives.contains(id), CandidateClass::SuspectedPositive),
                (p.hard_negatives.contains(id), CandidateClass::HardNegative),
            ];
            let found: Vec<_> = hits.iter().filter(|h| h.0).map(|h| h.1).collect();
            if relevant {
                prop_assert!(found.is_empty());
            } else {
                prop_assert_eq!(found, vec![mining::classify(label, margin, &cfg)]);
            }
        }
    }

    #[test]
    fn pairwise_gradient_pushes_positive_up(scores in prop::collection::vec(-20.0f64..20.0, 2..8), pos in 0usize..8) {
        let pos = pos % scores.len();
        let (loss, g) = objectives::pairwise_loss(&scores, pos, 10.0).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(g[pos] <= 0.0);
        for (i, gi) in g.iter().enumerate() {
            if i != pos {
                prop_assert!(*gi >= 0.0);
            }
        }
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn teacher_gradient_points_toward_target(s in -30.0f64..30.0, p in 0.0f64..=1.0) {
        let (loss, g) = objectives::teacher_loss(s, p, 1.0).unwrap();
        prop_assert!(loss >= 0.0);
        let model = 1.0 / (1.0 + (-s).exp());
        prop_assert!((g - (model - p)).abs() < 1e-12);
    }

    #[test]
    fn group_loss_is_finite_for_large_scores(scores in prop::collection::vec(-1e4f64..1e4, 2..6)) {
        let n = scores.len();
        let mut labels = vec![0u8; n];
        labels[0] = 1;
        let b = objectives::group_loss(&scores, 0, &vec![0.5; n], &labels, &ObjectiveConfig::default()).unwrap();
        prop_assert!(b.total.is_finite());
        prop_assert!(b.per_candidate_score_grads.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn run_text_round_trips(scores in prop::collection::vec(-1e6f64..1e6, 1..15)) {
        let mut scores = scores;
        scores.sort_by(|a, b| b.total_cmp(a));
        let list: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, &s)| (format!("v{i}"), s)).collect();
        let run = RankedRun::from_ordered([("q".to_string(), list)], "t").unwrap();
        let text = corpus::format_run(&run, "t");
        prop_assert_eq!(corpus::parse_run(&text, "x").unwrap(), run);
    }

    #[test]
    fn checkpoint_text_round_trips(seed in any::<u64>(), dim in 1usize..9) {
        let p = scorer::init_params(dim, seed).unwrap();
        let text = scorer::format_checkpoint(&p, &[]);
        prop_assert_eq!(scorer::parse_checkpoint(&text, "x").unwrap(), p);
    }
}
