//! Evaluation metrics: one-vs-rest F1 aggregation, AUROC, regression
//! accuracy, and class-wise score normalization.
//!
//! Conventions, pinned by tests:
//!
//! * Per-class F1 uses the 0/0 -> 0 rule (a class with no true and no
//!   predicted instances scores 0 rather than NaN).
//! * Multi-class Macro-F1 averages only over classes that occur in the
//!   truth or the predictions; classes absent from both are excluded so
//!   a rare-class task is not padded with free zeros.
//! * Multi-label Macro-F1 averages over *all* labels — an all-zero
//!   label contributes its 0 — because the label inventory is fixed.
//! * Micro-F1 pools TP/FP/FN over classes; for single-label problems it
//!   equals plain accuracy.
//! * AUROC uses Mann-Whitney midranks, so ties contribute 1/2.
//! * Regression accuracy is the fraction of rounded predictions within
//!   `tolerance` of the true count (0 = exact match).

use serde::{Deserialize, Serialize};

use crate::corpus::LabelValue;
use crate::error::{Error, Result};
use crate::tasks::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Serialize)]
pub struct ClassScore {
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct F1Scores {
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// One-vs-rest F1 for single-label predictions (binary or multi-class).
pub fn multiclass_f1(preds: &[usize], labels: &[usize], class_names: &[&str]) -> Result<F1Scores> {
    let k = class_names.len();
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::data("preds and labels must be equal-length and nonempty"));
    }
    if preds.iter().chain(labels).any(|&c| c >= k) {
        return Err(Error::data("class index out of range"));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&p, &l) in preds.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }

    let per_class: Vec<ClassScore> = (0..k)
        .map(|c| ClassScore {
            class: class_names[c].to_string(),
            tp: tp[c],
            fp: fp[c],
            fn_: fn_[c],
            f1: f1_from_counts(tp[c], fp[c], fn_[c]),
        })
        .collect();

    // Macro excludes classes absent from both truth and predictions.
    let present: Vec<&ClassScore> = per_class
        .iter()
        .filter(|s| s.tp + s.fp + s.fn_ > 0)
        .collect();
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        present.iter().map(|s| s.f1).sum::<f64>() / present.len() as f64
    };
    let (tps, fps, fns) = (
        tp.iter().sum::<usize>(),
        fp.iter().sum::<usize>(),
        fn_.iter().sum::<usize>(),
    );
    Ok(F1Scores {
        per_class,
        macro_f1,
        micro_f1: f1_from_counts(tps, fps, fns),
    })
}

/// Per-label F1 for multi-hot predictions. `preds` and `labels` are
/// row-major `[n_samples][n_labels]` indicator matrices.
pub fn multilabel_f1(
    preds: &[Vec<bool>],
    labels: &[Vec<bool>],
    label_names: &[&str],
) -> Result<F1Scores> {
    let k = label_names.len();
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::data("preds and labels must be equal-length and nonempty"));
    }
    if preds.iter().chain(labels).any(|row| row.len() != k) {
        return Err(Error::data("label-vector width mismatch"));
    }
    let mut per_class = Vec::with_capacity(k);
    let (mut tps, mut fps, mut fns) = (0usize, 0usize, 0usize);
    for c in 0..k {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, l) in preds.iter().zip(labels) {
            match (p[c], l[c]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        tps += tp;
        fps += fp;
        fns += fn_;
        per_class.push(ClassScore {
            class: label_names[c].to_string(),
            tp,
            fp,
            fn_,
            f1: f1_from_counts(tp, fp, fn_),
        });
    }
    // Fixed label inventory: every label participates in the macro mean.
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / k as f64;
    Ok(F1Scores {
        per_class,
        macro_f1,
        micro_f1: f1_from_counts(tps, fps, fns),
    })
}

/// Area under the ROC curve by the Mann-Whitney statistic with midranks
/// for ties. Requires both classes to be present.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::data("scores and labels must be equal-length and nonempty"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("non-finite score in auroc"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("auroc needs both classes present"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Midranks: ties share the average of the ranks they span.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0; // 1-based
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of predictions whose rounded count lands within `tolerance`
/// of the truth.
pub fn regression_accuracy(preds: &[i64], truths: &[i64], tolerance: i64) -> Result<f64> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::data("preds and truths must be equal-length and nonempty"));
    }
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| (**p - **t).abs() <= tolerance)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Column-wise min-max normalization of a models x classes score matrix
/// (radar-chart preparation): within each class, the worst model maps to
/// 0 and the best to 1; constant columns map to 0.
pub fn normalize_classwise(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return Err(Error::data("no rows to normalize"));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::data("ragged score matrix"));
    }
    let mut out = vec![vec![0.0; k]; rows.len()];
    for c in 0..k {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (m, &v) in col.iter().enumerate() {
            out[m][c] = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Task-level evaluation
// ---------------------------------------------------------------------------

/// A model's output for one record, next to the record's true label.
/// For classification, `output` holds per-class probabilities; for
/// regression, a single non-negative count estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: String,
    pub output: Vec<f64>,
    pub label: LabelValue,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub task_id: String,
    pub n_eval: usize,
    /// Metric name -> value. F1 metrics are percentages (0-100) to match
    /// the score-table convention; auroc and accuracy are fractions.
    pub metrics: std::collections::BTreeMap<String, f64>,
    pub per_class: Vec<ClassScore>,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Score a batch of record-level predictions against a task definition.
pub fn evaluate(task: &TaskSpec, preds: &[Prediction]) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::data(format!("no predictions for {}", task.id)));
    }
    let mut metrics = std::collections::BTreeMap::new();
    let mut per_class = Vec::new();

    match task.kind {
        TaskKind::Bc | TaskKind::Mc => {
            let mut yhat = Vec::with_capacity(preds.len());
            let mut y = Vec::with_capacity(preds.len());
            for p in preds {
                if p.output.len() != task.classes.len() {
                    return Err(Error::data(format!(
                        "{}: expected {} class probabilities, got {}",
                        task.id,
                        task.classes.len(),
                        p.output.len()
                    )));
                }
                let label = p
                    .label
                    .as_scalar()
                    .ok_or_else(|| Error::data(format!("{}: scalar label required", task.id)))?;
                yhat.push(argmax(&p.output));
                y.push(label as usize);
            }
            let f1 = multiclass_f1(&yhat, &y, task.classes)?;
            metrics.insert("macro_f1".into(), 100.0 * f1.macro_f1);
            metrics.insert("micro_f1".into(), 100.0 * f1.micro_f1);
            per_class = f1.per_class;

            if task.kind == TaskKind::Bc {
                let scores: Vec<f64> = preds.iter().map(|p| p.output[1]).collect();
                let labels: Vec<bool> = y.iter().map(|&l| l == 1).collect();
                if let Ok(v) = auroc(&scores, &labels) {
                    metrics.insert("auroc".into(), v);
                }
            }
        }
        TaskKind::Ml => {
            let k = task.classes.len();
            let mut yhat = Vec::with_capacity(preds.len());
            let mut y = Vec::with_capacity(preds.len());
            for p in preds {
                if p.output.len() != k {
                    return Err(Error::data(format!("{}: probability width mismatch", task.id)));
                }
                let label = p
                    .label
                    .as_vector()
                    .ok_or_else(|| Error::data(format!("{}: vector label required", task.id)))?;
                if label.len() != k {
                    return Err(Error::data(format!("{}: label width mismatch", task.id)));
                }
                yhat.push(p.output.iter().map(|&v| v >= 0.5).collect::<Vec<bool>>());
                y.push(label.iter().map(|&v| v >= 0.5).collect::<Vec<bool>>());
            }
            let f1 = multilabel_f1(&yhat, &y, task.classes)?;
            metrics.insert("macro_f1".into(), 100.0 * f1.macro_f1);
            metrics.insert("micro_f1".into(), 100.0 * f1.micro_f1);
            per_class = f1.per_class;
        }
        TaskKind::R => {
            let (lo, hi) = task.count_range.unwrap_or((0, u32::MAX));
            let mut yhat = Vec::with_capacity(preds.len());
            let mut y = Vec::with_capacity(preds.len());
            for p in preds {
                let est = *p
                    .output
                    .first()
                    .ok_or_else(|| Error::data(format!("{}: empty output", task.id)))?;
                let label = p
                    .label
                    .as_scalar()
                    .ok_or_else(|| Error::data(format!("{}: scalar label required", task.id)))?;
                yhat.push((est.round() as i64).clamp(lo as i64, hi as i64));
                y.push(label.round() as i64);
            }
            metrics.insert("accuracy".into(), regression_accuracy(&yhat, &y, 0)?);
            metrics.insert("accuracy_within_1".into(), regression_accuracy(&yhat, &y, 1)?);
        }
    }

    Ok(EvalReport {
        task_id: task.id.to_string(),
        n_eval: preds.len(),
        metrics,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_worked_example() {
        // preds [1,1,0,0] vs labels [1,0,1,0]: each class gets
        // tp=1, fp=1, fn=1 -> F1 0.5; macro 0.5, micro 0.5.
        let f1 = multiclass_f1(&[1, 1, 0, 0], &[1, 0, 1, 0], &["a", "b"]).unwrap();
        assert!((f1.macro_f1 - 0.5).abs() < 1e-12);
        assert!((f1.micro_f1 - 0.5).abs() < 1e-12);
        assert_eq!(f1.per_class[0].tp, 1);
        assert_eq!(f1.per_class[1].fp, 1);
    }

    #[test]
    fn macro_excludes_classes_absent_everywhere() {
        // Class 2 never appears in truth or predictions.
        let f1 = multiclass_f1(&[0, 1, 0, 1], &[0, 1, 0, 1], &["a", "b", "c"]).unwrap();
        assert_eq!(f1.macro_f1, 1.0);
        assert_eq!(f1.per_class[2].f1, 0.0);

        // ...but a class that is predicted (wrongly) does count.
        let f1 = multiclass_f1(&[0, 1, 2, 1], &[0, 1, 0, 1], &["a", "b", "c"]).unwrap();
        assert!(f1.macro_f1 < 1.0);
    }

    #[test]
    fn micro_equals_accuracy_for_single_label() {
        let preds = [0, 2, 1, 1, 0, 2, 2];
        let labels = [0, 1, 1, 1, 2, 2, 0];
        let f1 = multiclass_f1(&preds, &labels, &["a", "b", "c"]).unwrap();
        let acc = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / 7.0;
        assert!((f1.micro_f1 - acc).abs() < 1e-12);
    }

    #[test]
    fn multilabel_all_zero_macro_is_zero() {
        let preds = vec![vec![false, false]; 3];
        let labels = vec![vec![false, false]; 3];
        let f1 = multilabel_f1(&preds, &labels, &["x", "y"]).unwrap();
        assert_eq!(f1.macro_f1, 0.0);
        assert_eq!(f1.micro_f1, 0.0);
    }

    #[test]
    fn multilabel_counts_match_brute_force() {
        // Fixed 5x8 case; oracle = straight per-label counting.
        let preds: Vec<Vec<bool>> = vec![
            vec![true, false, true, false, true, false, true, false],
            vec![false, false, true, true, false, false, true, true],
            vec![true, true, false, false, true, true, false, false],
            vec![false, true, false, true, false, true, false, true],
            vec![true, true, true, true, false, false, false, false],
        ];
        let labels: Vec<Vec<bool>> = vec![
            vec![true, false, false, false, true, true, true, false],
            vec![false, true, true, true, false, false, false, true],
            vec![true, true, true, false, true, false, false, false],
            vec![false, false, false, true, false, true, true, true],
            vec![true, true, true, false, false, false, false, true],
        ];
        let names: Vec<String> = (0..8).map(|i| format!("l{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let f1 = multilabel_f1(&preds, &labels, &name_refs).unwrap();

        let mut macro_sum = 0.0;
        let (mut tps, mut fps, mut fns) = (0, 0, 0);
        for c in 0..8 {
            let tp = (0..5).filter(|&i| preds[i][c] && labels[i][c]).count();
            let fp = (0..5).filter(|&i| preds[i][c] && !labels[i][c]).count();
            let fn_ = (0..5).filter(|&i| !preds[i][c] && labels[i][c]).count();
            tps += tp;
            fps += fp;
            fns += fn_;
            macro_sum += if 2 * tp + fp + fn_ == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            };
        }
        assert!((f1.macro_f1 - macro_sum / 8.0).abs() < 1e-12);
        let micro = 2.0 * tps as f64 / (2 * tps + fps + fns) as f64;
        assert!((f1.micro_f1 - micro).abs() < 1e-12);
    }

    #[test]
    fn auroc_perfect_and_reversed_and_constant() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        // All scores equal: pure chance.
        assert_eq!(auroc(&[0.5; 4], &labels).unwrap(), 0.5);
        // Single class is an error.
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auroc_handles_ties_with_midranks() {
        // scores: neg [0.2, 0.4], pos [0.4, 0.9]
        // pairs: (0.2,0.4)+, (0.2,0.9)+, (0.4,0.4) half, (0.4,0.9)+
        // AUC = 3.5 / 4.
        let v = auroc(&[0.2, 0.4, 0.4, 0.9], &[false, false, true, true]).unwrap();
        assert!((v - 0.875).abs() < 1e-12);
    }

    #[test]
    fn regression_accuracy_exact_and_tolerant() {
        let acc = regression_accuracy(&[3, 5, 10], &[3, 6, 10], 0).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
        let acc1 = regression_accuracy(&[3, 5, 10], &[3, 6, 12], 1).unwrap();
        assert!((acc1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn classwise_normalization_bounds_and_constants() {
        let rows = vec![
            vec![10.0, 5.0, 7.0],
            vec![20.0, 5.0, 3.0],
            vec![15.0, 5.0, 5.0],
        ];
        let out = normalize_classwise(&rows).unwrap();
        assert_eq!(out[0][0], 0.0);
        assert_eq!(out[1][0], 1.0);
        assert_eq!(out[2][0], 0.5);
        // Constant column maps to zero for everyone.
        assert!(out.iter().all(|r| r[1] == 0.0));
        assert_eq!(out[0][2], 1.0);
        assert_eq!(out[1][2], 0.0);
    }

    #[test]
    fn evaluate_regression_rounds_and_clamps() {
        let task = crate::tasks::find("T16").unwrap();
        let preds = vec![
            Prediction {
                record_id: "a".into(),
                output: vec![2.6],
                label: LabelValue::Scalar(3.0),
            },
            Prediction {
                record_id: "b".into(),
                output: vec![99.0], // clamps to 43
                label: LabelValue::Scalar(43.0),
            },
            Prediction {
                record_id: "c".into(),
                output: vec![1.2],
                label: LabelValue::Scalar(3.0),
            },
        ];
        let report = evaluate(task, &preds).unwrap();
        assert!((report.metrics["accuracy"] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.metrics["accuracy_within_1"], 2.0 / 3.0);
    }

    #[test]
    fn evaluate_binary_reports_f1_percent_and_auroc() {
        let task = crate::tasks::find("T13").unwrap();
        let preds: Vec<Prediction> = [
            (vec![0.9, 0.1], 0.0),
            (vec![0.2, 0.8], 1.0),
            (vec![0.4, 0.6], 1.0),
            (vec![0.7, 0.3], 0.0),
        ]
        .into_iter()
        .enumerate()
        .map(|(i, (output, l))| Prediction {
            record_id: format!("r{i}"),
            output,
            label: LabelValue::Scalar(l),
        })
        .collect();
        let report = evaluate(task, &preds).unwrap();
        assert_eq!(report.metrics["macro_f1"], 100.0);
        assert_eq!(report.metrics["micro_f1"], 100.0);
        assert_eq!(report.metrics["auroc"], 1.0);
        assert_eq!(report.n_eval, 4);
    }
}
