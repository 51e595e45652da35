//! Cross-model rank aggregation: competition ranking, reciprocal ranks,
//! MRR, and Borda counts over a score table.
//!
//! A score table maps `model -> task -> metric -> value` (higher is
//! better for every metric used here). Ranking is *competition* style:
//! tied models share the best (minimum) rank, so scores `[90, 88, 90]`
//! rank `[1, 3, 1]`. Because only the order of scores matters, every
//! aggregate is invariant under strictly monotone transforms of a task's
//! scores — a property the tests enforce.
//!
//! Groups follow the benchmark registry: by function (abnormality
//! detection / disease diagnosis / an "overall" union of both, plus
//! activity detection under its own metric), by body-sound type, or by
//! task type. The regression task has no F1, so whenever it appears in a
//! group its `accuracy` column is ranked instead of the requested F1
//! metric.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::atomic_write;
use crate::corpus::SoundType;
use crate::error::{Error, Result};
use crate::tasks::{self, TaskGroup, TaskKind};

/// `model -> task -> metric -> value`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ScoreTable(pub BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>);

/// Optional wrapper for score files that carry provenance notes.
#[derive(Debug, Deserialize)]
struct WrappedScores {
    #[allow(dead_code)]
    v: Option<u32>,
    scores: ScoreTable,
}

impl ScoreTable {
    pub fn models(&self) -> Vec<&str> {
        self.0.keys().map(|s| s.as_str()).collect()
    }

    pub fn get(&self, model: &str, task: &str, metric: &str) -> Option<f64> {
        self.0.get(model)?.get(task)?.get(metric).copied()
    }

    pub fn insert(&mut self, model: &str, task: &str, metric: &str, value: f64) {
        self.0
            .entry(model.to_string())
            .or_default()
            .entry(task.to_string())
            .or_default()
            .insert(metric.to_string(), value);
    }

    /// Read a score file: either the bare map or a `{"v":1,
    /// "scores": {...}, ...}` wrapper (hand-authored tables carry notes).
    pub fn load(path: &Path) -> Result<ScoreTable> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        if value.get("scores").map_or(false, |s| s.is_object()) {
            let wrapped: WrappedScores =
                serde_json::from_value(value).map_err(|e| Error::json(path, e))?;
            Ok(wrapped.scores)
        } else {
            serde_json::from_value(value).map_err(|e| Error::json(path, e))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("score table serializes");
        atomic_write(path, &json)
    }
}

/// 1-based competition ranks, higher value = better rank; ties share the
/// minimum rank of their block.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| 1 + values.iter().filter(|&&o| o > v).count())
        .collect()
}

/// The metric actually ranked for a task: regression tasks have no F1
/// column, so they always rank on `accuracy`.
pub fn metric_for_task(task_id: &str, requested: &str) -> Result<&'static str> {
    let task = tasks::find(task_id)?;
    Ok(match (task.kind, requested) {
        (TaskKind::R, _) => "accuracy",
        (_, "macro_f1") => "macro_f1",
        (_, "micro_f1") => "micro_f1",
        (_, "accuracy") => "accuracy",
        (_, "auroc") => "auroc",
        (_, other) => return Err(Error::config(format!("unknown metric {other:?}"))),
    })
}

fn column(table: &ScoreTable, models: &[&str], task: &str, metric: &str) -> Result<Vec<f64>> {
    let metric = metric_for_task(task, metric)?;
    models
        .iter()
        .map(|m| {
            table.get(m, task, metric).ok_or_else(|| {
                Error::data(format!("score table is missing {m} / {task} / {metric}"))
            })
        })
        .collect()
}

/// Per-model reciprocal ranks `1/rank` on one task.
pub fn reciprocal_ranks(
    table: &ScoreTable,
    models: &[&str],
    task: &str,
    metric: &str,
) -> Result<Vec<f64>> {
    let ranks = competition_ranks(&column(table, models, task, metric)?);
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).collect())
}

/// Mean reciprocal rank over a task group. Every task must have a score
/// for every model.
pub fn mrr(table: &ScoreTable, models: &[&str], group: &[&str], metric: &str) -> Result<Vec<f64>> {
    if group.is_empty() {
        return Err(Error::config("empty task group"));
    }
    let mut sums = vec![0.0; models.len()];
    for task in group {
        for (s, rr) in sums.iter_mut().zip(reciprocal_ranks(table, models, task, metric)?) {
            *s += rr;
        }
    }
    Ok(sums.iter().map(|s| s / group.len() as f64).collect())
}

/// Borda count over a task group: a task awards `m - rank` points
/// (winner `m-1`, last place 0); tied models share the points of their
/// block's best rank.
pub fn borda(table: &ScoreTable, models: &[&str], group: &[&str], metric: &str) -> Result<Vec<f64>> {
    if group.is_empty() {
        return Err(Error::config("empty task group"));
    }
    let m = models.len() as f64;
    let mut points = vec![0.0; models.len()];
    for task in group {
        let ranks = competition_ranks(&column(table, models, task, metric)?);
        for (p, r) in points.iter_mut().zip(ranks) {
            *p += m - r as f64;
        }
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Groupings and the rank report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// Abnormality detection / disease diagnosis / overall (+ activity
    /// detection when ranking on accuracy).
    Function,
    /// Lung / heart / bowel.
    Sound,
    /// BC / MC / ML / R.
    TaskType,
}

impl std::str::FromStr for Grouping {
    type Err = Error;
    fn from_str(s: &str) -> Result<Grouping> {
        match s {
            "function" => Ok(Grouping::Function),
            "sound" => Ok(Grouping::Sound),
            "tasktype" | "task_type" => Ok(Grouping::TaskType),
            other => Err(Error::config(format!(
                "unknown grouping {other:?}; expected function, sound, or tasktype"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSpec {
    pub name: String,
    pub tasks: Vec<String>,
}

/// The task groups a grouping induces. For `Function` with an F1 metric
/// this mirrors the leaderboard layout: the two classification function
/// groups plus their union; the activity group stands alone because it
/// is ranked on accuracy.
pub fn groups_for(grouping: Grouping, metric: &str) -> Vec<GroupSpec> {
    let own = |ids: Vec<&str>| ids.into_iter().map(String::from).collect::<Vec<_>>();
    match grouping {
        Grouping::Function => {
            if metric == "accuracy" {
                vec![GroupSpec {
                    name: TaskGroup::ActivityDetection.label().into(),
                    tasks: own(tasks::group_tasks(TaskGroup::ActivityDetection)),
                }]
            } else {
                vec![
                    GroupSpec {
                        name: TaskGroup::AbnormalityDetection.label().into(),
                        tasks: own(tasks::group_tasks(TaskGroup::AbnormalityDetection)),
                    },
                    GroupSpec {
                        name: TaskGroup::DiseaseDiagnosis.label().into(),
                        tasks: own(tasks::group_tasks(TaskGroup::DiseaseDiagnosis)),
                    },
                    GroupSpec {
                        name: "overall".into(),
                        tasks: own(tasks::classification_tasks()),
                    },
                ]
            }
        }
        Grouping::Sound => [
            (SoundType::L, "lung"),
            (SoundType::H, "heart"),
            (SoundType::B, "bowel"),
        ]
        .iter()
        .map(|&(sound, name)| GroupSpec {
            name: name.into(),
            tasks: tasks::registry()
                .iter()
                .filter(|t| t.sound == sound)
                .map(|t| t.id.to_string())
                .collect(),
        })
        .collect(),
        Grouping::TaskType => [
            (TaskKind::Bc, "binary_classification"),
            (TaskKind::Mc, "multi_class"),
            (TaskKind::Ml, "multi_label"),
            (TaskKind::R, "regression"),
        ]
        .iter()
        .map(|&(kind, name)| GroupSpec {
            name: name.into(),
            tasks: tasks::registry()
                .iter()
                .filter(|t| t.kind == kind)
                .map(|t| t.id.to_string())
                .collect(),
        })
        .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub tasks: Vec<String>,
    pub mrr: BTreeMap<String, f64>,
    pub borda: BTreeMap<String, f64>,
    pub per_task_rr: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub v: u32,
    pub metric: String,
    pub grouping: Grouping,
    pub models: Vec<String>,
    pub groups: Vec<GroupReport>,
}

/// Build the full rank report for a grouping and metric.
pub fn rank_report(table: &ScoreTable, grouping: Grouping, metric: &str) -> Result<RankReport> {
    let models = table.models();
    if models.len() < 2 {
        return Err(Error::data("ranking needs at least two models"));
    }
    let mut groups = Vec::new();
    for spec in groups_for(grouping, metric) {
        let task_refs: Vec<&str> = spec.tasks.iter().map(|s| s.as_str()).collect();
        let mrr_v = mrr(table, &models, &task_refs, metric)?;
        let borda_v = borda(table, &models, &task_refs, metric)?;
        let mut per_task_rr = BTreeMap::new();
        for task in &task_refs {
            let rr = reciprocal_ranks(table, &models, task, metric)?;
            per_task_rr.insert(
                task.to_string(),
                models
                    .iter()
                    .map(|m| m.to_string())
                    .zip(rr)
                    .collect::<BTreeMap<_, _>>(),
            );
        }
        groups.push(GroupReport {
            name: spec.name,
            tasks: spec.tasks,
            mrr: models.iter().map(|m| m.to_string()).zip(mrr_v).collect(),
            borda: models.iter().map(|m| m.to_string()).zip(borda_v).collect(),
            per_task_rr,
        });
    }
    Ok(RankReport {
        v: 1,
        metric: metric.to_string(),
        grouping,
        models: models.into_iter().map(String::from).collect(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn competition_ranks_share_the_minimum() {
        assert_eq!(competition_ranks(&[90.0, 88.0, 90.0]), vec![1, 3, 1]);
        assert_eq!(competition_ranks(&[1.0, 2.0, 3.0]), vec![3, 2, 1]);
        assert_eq!(competition_ranks(&[5.0, 5.0, 5.0]), vec![1, 1, 1]);
    }

    fn toy_table() -> ScoreTable {
        // Two tasks, three models.
        // T13: a=80, b=70, c=90  -> ranks a2 b3 c1
        // T14: a=60, b=60, c=50  -> ranks a1 b1 c3
        let mut t = ScoreTable::default();
        for (model, t13, t14) in [("a", 80.0, 60.0), ("b", 70.0, 60.0), ("c", 90.0, 50.0)] {
            t.insert(model, "T13", "macro_f1", t13);
            t.insert(model, "T14", "macro_f1", t14);
        }
        t
    }

    #[test]
    fn mrr_and_borda_worked_example() {
        let table = toy_table();
        let models = ["a", "b", "c"];
        let mrr_v = mrr(&table, &models, &["T13", "T14"], "macro_f1").unwrap();
        // a: (1/2 + 1) / 2 = 0.75; b: (1/3 + 1) / 2 = 2/3; c: (1 + 1/3) / 2 = 2/3.
        assert!((mrr_v[0] - 0.75).abs() < 1e-12);
        assert!((mrr_v[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((mrr_v[2] - 2.0 / 3.0).abs() < 1e-12);

        let borda_v = borda(&table, &models, &["T13", "T14"], "macro_f1").unwrap();
        // T13 points: a 1, b 0, c 2. T14 (tie at top): a 2, b 2, c 0.
        assert_eq!(borda_v, vec![3.0, 2.0, 2.0]);
    }

    #[test]
    fn every_task_crowns_someone() {
        let table = toy_table();
        let models = ["a", "b", "c"];
        for task in ["T13", "T14"] {
            let rr = reciprocal_ranks(&table, &models, task, "macro_f1").unwrap();
            assert!(rr.iter().any(|&v| v == 1.0), "{task}: no rank-1 model");
            assert!(rr.iter().all(|&v| (1.0 / 3.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn aggregates_are_invariant_under_monotone_transforms() {
        let table = toy_table();
        let mut squashed = ScoreTable::default();
        for (model, per_task) in &table.0 {
            for (task, metrics) in per_task {
                for (metric, &v) in metrics {
                    // Strictly monotone: atan(v / 10) preserves order.
                    squashed.insert(model, task, metric, (v / 10.0).atan());
                }
            }
        }
        let models = ["a", "b", "c"];
        let group = ["T13", "T14"];
        assert_eq!(
            mrr(&table, &models, &group, "macro_f1").unwrap(),
            mrr(&squashed, &models, &group, "macro_f1").unwrap()
        );
        assert_eq!(
            borda(&table, &models, &group, "macro_f1").unwrap(),
            borda(&squashed, &models, &group, "macro_f1").unwrap()
        );
    }

    #[test]
    fn missing_cell_is_a_hard_error_naming_the_hole() {
        let mut table = toy_table();
        table.0.get_mut("b").unwrap().remove("T14");
        let err = mrr(&table, &["a", "b", "c"], &["T13", "T14"], "macro_f1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('b') && msg.contains("T14"), "{msg}");
    }

    #[test]
    fn regression_tasks_rank_on_accuracy() {
        assert_eq!(metric_for_task("T16", "macro_f1").unwrap(), "accuracy");
        assert_eq!(metric_for_task("T13", "macro_f1").unwrap(), "macro_f1");
        assert!(metric_for_task("T13", "nonsense").is_err());

        let mut t = ScoreTable::default();
        t.insert("a", "T16", "accuracy", 0.9);
        t.insert("b", "T16", "accuracy", 0.4);
        let rr = reciprocal_ranks(&t, &["a", "b"], "T16", "macro_f1").unwrap();
        assert_eq!(rr, vec![1.0, 0.5]);
    }

    #[test]
    fn function_groups_mirror_the_registry() {
        let f1_groups = groups_for(Grouping::Function, "macro_f1");
        assert_eq!(f1_groups.len(), 3);
        assert_eq!(f1_groups[0].tasks.len(), 8);
        assert_eq!(f1_groups[1].tasks.len(), 7);
        assert_eq!(f1_groups[2].tasks.len(), 15);
        let acc_groups = groups_for(Grouping::Function, "accuracy");
        assert_eq!(acc_groups.len(), 1);
        assert_eq!(acc_groups[0].tasks, vec!["T16"]);

        let sound = groups_for(Grouping::Sound, "macro_f1");
        assert_eq!(sound[0].tasks.len(), 10, "lung");
        assert_eq!(sound[1].tasks.len(), 5, "heart");
        assert_eq!(sound[2].tasks, vec!["T16"], "bowel");

        let kinds = groups_for(Grouping::TaskType, "macro_f1");
        let sizes: Vec<usize> = kinds.iter().map(|g| g.tasks.len()).collect();
        assert_eq!(sizes, vec![4, 10, 1, 1]);
    }

    #[test]
    fn score_table_roundtrip_and_wrapped_form() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.json");
        let table = toy_table();
        table.save(&path).unwrap();
        assert_eq!(ScoreTable::load(&path).unwrap(), table);

        let wrapped = serde_json::json!({
            "v": 1,
            "notes": {"source": "hand-authored"},
            "scores": serde_json::to_value(&table).unwrap(),
        });
        fs::write(&path, serde_json::to_vec(&wrapped).unwrap()).unwrap();
        assert_eq!(ScoreTable::load(&path).unwrap(), table);
    }

    #[test]
    fn rank_report_covers_all_groups() {
        let table = toy_table();
        // Function grouping requires all 15 classification tasks; use a
        // task-type slice instead via direct calls, then check report
        // plumbing with a complete mini-grouping through Sound on a
        // filled table.
        let mut full = ScoreTable::default();
        for model in ["a", "b"] {
            for task in crate::tasks::registry() {
                let metric = if task.kind == TaskKind::R { "accuracy" } else { "macro_f1" };
                let v = (task.id.len() + model.len()) as f64 + if model == "a" { 0.5 } else { 0.0 };
                full.insert(model, task.id, metric, v);
            }
        }
        let report = rank_report(&full, Grouping::Sound, "macro_f1").unwrap();
        assert_eq!(report.groups.len(), 3);
        assert!(report.groups.iter().all(|g| g.mrr.len() == 2));
        // 'a' always wins by construction.
        assert!(report.groups.iter().all(|g| g.mrr["a"] == 1.0));
        drop(table);
    }
}
