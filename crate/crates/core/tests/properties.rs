use std::collections::BTreeSet;
use std::sync::LazyLock;

use proptest::prelude::*;

use topicfuse::evaluation::{micro_metrics, relative_improvement, weighted_metrics, ClassMetrics};
use topicfuse::pipeline::synth::{FILLERS, TEMPLATES};
use topicfuse::rulebook::{DEFAULT_CAP, NO_TOPIC_ID, TOPIC_COUNT};
use topicfuse::training::split_dataset;
use topicfuse::{PredictionSet, TopicRuleSet};

static RULES: LazyLock<TopicRuleSet> = LazyLock::new(TopicRuleSet::reference);

fn sentence() -> impl Strategy<Value = String> {
    prop_oneof![
        (0..TOPIC_COUNT, any::<prop::sample::Index>()).prop_map(|(t, i)| {
            let pool = TEMPLATES[t].triggers;
            pool[i.index(pool.len())].to_string()
        }),
        (0..TOPIC_COUNT, any::<prop::sample::Index>()).prop_map(|(t, i)| {
            let pool = TEMPLATES[t].paraphrases;
            pool[i.index(pool.len())].to_string()
        }),
        any::<prop::sample::Index>().prop_map(|i| FILLERS[i.index(FILLERS.len())].to_string()),
        "[a-z ]{0,30}",
    ]
}

fn document() -> impl Strategy<Value = String> {
    prop::collection::vec(sentence(), 0..12).prop_map(|s| s.join(". "))
}

fn counts() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0usize..40, 0usize..40, 0usize..40), 1..30)
}

proptest! {
    #[test]
    fn tag_output_is_capped_sorted_and_sentinel_exclusive(text in document(), cap in 1usize..=9) {
        let rules = &*RULES;
        let fv = rules.tag("d", &text, cap);
        prop_assert!(!fv.feature_ids.is_empty() && fv.feature_ids.len() <= cap);
        if fv.feature_ids.contains(&NO_TOPIC_ID) {
            prop_assert_eq!(&fv.feature_ids, &vec![NO_TOPIC_ID]);
        }
        prop_assert!(fv.feature_ids.windows(2).all(|w| w[0] < w[1]));
        let all = rules.matching_ids(&text);
        prop_assert_eq!(fv.truncated, all.len() > cap);
        if !all.is_empty() {
            prop_assert_eq!(&fv.feature_ids[..], &all[..all.len().min(cap)]);
        }
        prop_assert_eq!(rules.tag("d", &text, cap), fv);
    }

    #[test]
    fn default_cap_is_seven(text in document()) {
        let fv = RULES.tag("d", &text, DEFAULT_CAP);
        prop_assert!((1..=7).contains(&fv.feature_ids.len()));
    }

    #[test]
    fn weighted_recall_equals_micro_recall(c in counts()) {
        let per: Vec<ClassMetrics> = c.iter().enumerate().map(|(i, &(tp, fp, fn_))| ClassMetrics::from_counts(i, tp, fp, fn_)).collect();
        prop_assume!(per.iter().any(|m| m.support > 0));
        let w = weighted_metrics(&per).unwrap();
        let m = micro_metrics(&per);
        prop_assert!((w.recall - m.recall).abs() < 1e-12);
        for v in [w.precision, w.recall, w.f1] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn weighted_f1_is_permutation_invariant(mut c in counts(), seed in any::<u64>()) {
        let metrics = |c: &[(usize, usize, usize)]| {
            let per: Vec<ClassMetrics> = c.iter().enumerate().map(|(i, &(tp, fp, fn_))| ClassMetrics::from_counts(i, tp, fp, fn_)).collect();
            weighted_metrics(&per)
        };
        let Ok(before) = metrics(&c) else { return Ok(()); };
        let n = c.len();
        c.rotate_left((seed as usize) % n);
        let after = metrics(&c).unwrap();
        prop_assert!((before.f1 - after.f1).abs() < 1e-12);
    }

    #[test]
    fn relative_improvement_inverts(x in 0.01f64..1.0, y in 0.01f64..1.0) {
        let r = relative_improvement(x, y).unwrap();
        prop_assert!((x * (1.0 + r) - y).abs() < 1e-12);
        let back = relative_improvement(y, x).unwrap();
        prop_assert!(((1.0 + r) * (1.0 + back) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_partitions(n in 1usize..300, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let ds: Vec<usize> = (0..n).collect();
        let (a, b) = split_dataset(&ds, ratio, seed).unwrap();
        prop_assert_eq!(a.len(), (n as f64 * ratio).round() as usize);
        let all: BTreeSet<usize> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(split_dataset(&ds, ratio, seed).unwrap(), (a, b));
    }

    #[test]
    fn emerging_exactly_when_nothing_clears(probs in prop::collection::vec(0.0f64..1.0, 27), tau in 0.0f64..=1.0) {
        let names: Vec<String> = (0..27).map(|i| format!("t{i}")).collect();
        let p = PredictionSet::from_scores("d", names.iter().map(|n| n.as_str()).zip(probs.iter().copied()), tau);
        prop_assert_eq!(p.is_emerging, probs.iter().all(|&x| x < tau));
        prop_assert_eq!(p.topics.len(), probs.iter().filter(|&&x| x >= tau).count());
    }
}
