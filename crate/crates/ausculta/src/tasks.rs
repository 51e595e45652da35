//! The fixed 16-task downstream benchmark registry.
//!
//! Tasks T1-T8 detect abnormalities, T9-T15 diagnose diseases, and T16
//! counts bowel-sound events (regression). Each task pins its source
//! dataset, body-sound category, task type, class inventory with
//! per-class sample counts, segment length for chunked inference, and —
//! for the regression task — the admissible count range. Task selection
//! for a probe run keys on which records carry the task's label, so the
//! dataset field here is documentation plus a sanity anchor, not a join
//! key.

use serde::Serialize;

use crate::corpus::SoundType;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TaskKind {
    /// Binary classification.
    Bc,
    /// Multi-class classification.
    Mc,
    /// Multi-label classification.
    Ml,
    /// Regression (event count).
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TaskGroup {
    AbnormalityDetection,
    DiseaseDiagnosis,
    ActivityDetection,
}

impl TaskGroup {
    pub fn label(self) -> &'static str {
        match self {
            TaskGroup::AbnormalityDetection => "abnormality_detection",
            TaskGroup::DiseaseDiagnosis => "disease_diagnosis",
            TaskGroup::ActivityDetection => "activity_detection",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskSpec {
    pub id: &'static str,
    pub dataset: &'static str,
    pub sound: SoundType,
    pub kind: TaskKind,
    pub group: TaskGroup,
    pub classes: &'static [&'static str],
    pub class_counts: &'static [u32],
    /// Segment length for chunked inference, seconds.
    pub chunk_secs: u32,
    /// Inclusive count range for regression tasks.
    pub count_range: Option<(u32, u32)>,
}

impl TaskSpec {
    /// Output dimension of this task's probe head.
    pub fn head_dim(&self) -> usize {
        match self.kind {
            TaskKind::R => 1,
            _ => self.classes.len(),
        }
    }
}

macro_rules! task {
    ($id:literal, $ds:literal, $sound:ident, $kind:ident, $group:ident,
     [$($class:literal),*], [$($count:literal),*], $chunk:literal) => {
        TaskSpec {
            id: $id,
            dataset: $ds,
            sound: SoundType::$sound,
            kind: TaskKind::$kind,
            group: TaskGroup::$group,
            classes: &[$($class),*],
            class_counts: &[$($count),*],
            chunk_secs: $chunk,
            count_range: None,
        }
    };
}

static REGISTRY: [TaskSpec; 16] = [
    task!("T1", "SPRSound", L, Mc, AbnormalityDetection,
        ["Normal", "Adventitious", "Poor Quality"], [2324, 1000, 230], 8),
    task!("T2", "SPRSound", L, Mc, AbnormalityDetection,
        ["Normal", "CAS", "DAS", "CAS&DAS", "Poor Quality"],
        [2324, 368, 480, 152, 230], 8),
    task!("T3", "HF Lung", L, Bc, AbnormalityDetection,
        ["Normal", "Abnormal"], [52444, 29489], 8),
    task!("T4", "HF Lung", L, Mc, AbnormalityDetection,
        ["Inhalation", "Exhalation", "CAS", "DAS"],
        [34095, 18349, 13883, 15606], 8),
    task!("T5", "HF Lung", L, Mc, AbnormalityDetection,
        ["Inhalation", "Exhalation", "Wheeze", "Stridor", "Rhonchi", "Crackle"],
        [34095, 18349, 8457, 686, 4740, 15606], 8),
    task!("T6", "ICBHI 2017", L, Mc, AbnormalityDetection,
        ["Normal", "Crackle", "Wheeze", "Crackle&Wheeze"],
        [3642, 1864, 886, 506], 8),
    task!("T7", "Lung Sound", L, Mc, AbnormalityDetection,
        ["Normal", "Crepitation", "Wheeze", "Crackle", "Bronchi",
         "Wheeze&Crackle", "Bronchi&Crackle"],
        [105, 69, 123, 24, 3, 6, 6], 8),
    task!("T8", "Circor 2022", H, Mc, AbnormalityDetection,
        ["Present", "Absent", "Unknown"], [363, 2391, 156], 8),
    task!("T9", "ICBHI 2017", L, Mc, DiseaseDiagnosis,
        ["Healthy", "Bronchiectasis", "Bronchiolitis", "COPD", "Pneumonia", "URTI"],
        [35, 16, 13, 793, 37, 23], 8),
    task!("T10", "Lung Sound", L, Ml, DiseaseDiagnosis,
        ["Normal", "Asthma", "Pneumonia", "COPD", "BRON", "Heart failure",
         "Lung fibrosis", "Pleural effusion"],
        [105, 99, 15, 33, 9, 63, 18, 6], 8),
    task!("T11", "RespiratoryDatabase@TR", L, Mc, DiseaseDiagnosis,
        ["COPD0", "COPD1", "COPD2", "COPD3", "COPD4"],
        [72, 60, 84, 84, 204], 8),
    task!("T12", "Korean", H, Mc, DiseaseDiagnosis,
        ["Normal", "Aortic Stenosis", "Mitral Regurgitation", "Mitral Stenosis",
         "Murmur in Systole"],
        [200, 200, 200, 200, 200], 4),
    task!("T13", "Cinc 2016", H, Bc, DiseaseDiagnosis,
        ["Normal", "Abnormal"], [2575, 665], 8),
    task!("T14", "Circor 2022", H, Bc, DiseaseDiagnosis,
        ["Normal", "Abnormal"], [1632, 1531], 8),
    task!("T15", "HSDReport", H, Bc, DiseaseDiagnosis,
        ["Normal", "Abnormal"], [247, 2028], 8),
    TaskSpec {
        id: "T16",
        dataset: "Bowel Sound",
        sound: SoundType::B,
        kind: TaskKind::R,
        group: TaskGroup::ActivityDetection,
        classes: &[],
        class_counts: &[],
        chunk_secs: 2,
        count_range: Some((0, 43)),
    },
];

pub fn registry() -> &'static [TaskSpec] {
    &REGISTRY
}

/// Look a task up by id; unknown ids list the valid range.
pub fn find(id: &str) -> Result<&'static TaskSpec> {
    REGISTRY.iter().find(|t| t.id == id).ok_or_else(|| {
        Error::config(format!("unknown task id {id:?}; expected one of T1..T16"))
    })
}

/// Task ids belonging to a function group, in registry order.
pub fn group_tasks(group: TaskGroup) -> Vec<&'static str> {
    REGISTRY
        .iter()
        .filter(|t| t.group == group)
        .map(|t| t.id)
        .collect()
}

/// All classification task ids (used for "overall" aggregation rows).
pub fn classification_tasks() -> Vec<&'static str> {
    REGISTRY
        .iter()
        .filter(|t| t.kind != TaskKind::R)
        .map(|t| t.id)
        .collect()
}
