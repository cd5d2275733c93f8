use log::warn;

use super::dataset::LabeledDataset;
use super::forest::ForestModel;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean of the defined per-class AUCs; `None` when none is defined.
    pub macro_auc: Option<f64>,
    /// One-vs-rest AUC per model class; `None` where the test set lacks
    /// positives or negatives for that class.
    pub per_class_auc: Vec<Option<f64>>,
    /// `confusion[true][predicted]`, indexed by model class.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<String>,
    /// Test rows whose label the model has never seen. They count as
    /// errors and are not in the confusion matrix.
    pub unknown_labels: usize,
    pub n_samples: usize,
}

/// Rank-based AUC (Mann-Whitney U); tied scores share their mid-rank.
/// `None` if either class is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn evaluate(model: &ForestModel, test: &LabeledDataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Dataset("test set is empty".into()));
    }
    test.validate()?;
    model.meta.check_matches(&test.meta)?;
    let preds = model.predict_batch(&test.features, Execution::Parallel)?;
    let n_classes = model.classes.len();
    let truth: Vec<Option<usize>> = test
        .labels
        .iter()
        .map(|l| model.classes.iter().position(|c| c == l))
        .collect();

    let mut confusion = vec![vec![0; n_classes]; n_classes];
    let mut correct = 0;
    let mut unknown = 0;
    for (t, p) in truth.iter().zip(&preds) {
        match t {
            Some(t) => {
                confusion[*t][p.class] += 1;
                if *t == p.class {
                    correct += 1;
                }
            }
            None => unknown += 1,
        }
    }
    if unknown > 0 {
        warn!("{unknown} test rows carry labels unknown to the model");
    }

    let per_class_auc: Vec<Option<f64>> = (0..n_classes)
        .map(|c| {
            let scores: Vec<f64> = preds.iter().map(|p| p.probabilities[c]).collect();
            let positive: Vec<bool> = truth.iter().map(|t| *t == Some(c)).collect();
            let auc = binary_auc(&scores, &positive);
            if auc.is_none() {
                warn!(
                    "AUC for class `{}` is undefined on this test set; excluded",
                    model.classes[c]
                );
            }
            auc
        })
        .collect();
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    let macro_auc =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);

    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        macro_auc,
        per_class_auc,
        confusion,
        classes: model.classes.clone(),
        unknown_labels: unknown,
        n_samples: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMeta;
    use crate::ml::{train_forest, ForestParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// P(score_pos > score_neg) + 0.5 P(tie) over all pairs.
    fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn three_class_fixture_matches_rank_sum() {
        // 20 samples, fixed class-0 scores with ties
        let labels = [0, 1, 2, 0, 0, 1, 2, 2, 1, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1];
        let s0 = [
            0.9, 0.2, 0.1, 0.8, 0.4, 0.4, 0.3, 0.1, 0.5, 0.7, 0.2, 0.2, 0.6, 0.3, 0.4, 0.95, 0.1,
            0.05, 0.4, 0.6,
        ];
        let pos: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
        // 7 positives, 13 negatives. Negatives beaten per positive (ties
        // count half): 0.9 -> 13, 0.8 -> 13, 0.4 -> 9 + 2/2, 0.7 -> 13,
        // 0.6 -> 12 + 1/2, 0.95 -> 13, 0.4 -> 10
        let u: f64 = 84.5;
        let auc = binary_auc(&s0, &pos).unwrap();
        assert_eq!(auc, u / (7.0 * 13.0));
        assert_eq!(auc, pairwise_auc(&s0, &pos));
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(binary_auc(&[0.1, 0.9], &[false, true]), Some(1.0));
        assert_eq!(binary_auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(binary_auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(binary_auc(&[0.5, 0.5], &[true, true]), None);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let p: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        assert!((binary_auc(&s, &p).unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn brute_force_agreement_on_random_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            // coarse scores force ties
            let s: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0..5) as f64 / 4.0)
                .collect();
            let p: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            if let Some(a) = binary_auc(&s, &p) {
                assert!((a - pairwise_auc(&s, &p)).abs() < 1e-12);
            }
        }
    }

    fn separable() -> LabeledDataset {
        let meta = FeatureMeta {
            level: 1,
            peaks: 1,
            wavelet: "db1".into(),
            sample_rate: 1.0,
            window: 2,
        };
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            f.push(vec![c as f64 * 10.0 + (i as f64) * 0.01, 0.0]);
            l.push(format!("k{c}"));
        }
        LabeledDataset::new(f, l, meta).unwrap()
    }

    #[test]
    fn perfect_classifier() {
        let ds = separable();
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 10,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let e = evaluate(&m, &ds).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.macro_auc, Some(1.0));
        assert_eq!(
            e.confusion,
            vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]]
        );
    }

    #[test]
    fn absent_class_is_excluded() {
        let ds = separable();
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 10,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let rows: Vec<usize> = (0..30).filter(|i| i % 3 != 2).collect();
        let mut test = ds.subset(&rows);
        let e = evaluate(&m, &test).unwrap();
        assert_eq!(e.per_class_auc[2], None);
        assert_eq!(e.macro_auc, Some(1.0));

        test.labels[0] = "mystery".into();
        let e = evaluate(&m, &test).unwrap();
        assert_eq!(e.unknown_labels, 1);
        assert!(e.accuracy < 1.0);

        assert!(evaluate(&m, &ds.subset(&[])).is_err());
    }
}
