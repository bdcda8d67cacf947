//! Published best-row accuracies (percent) for the two reference corpora.
//! Used to annotate reports; never compared against in tests of real runs.

use crate::features::ModelId;
use crate::manifest::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceCorpus {
    Pfstar,
    CmuKids,
}

impl ReferenceCorpus {
    /// Matches dataset names such as `pfstar`, `PF-STAR`, `cmu_kids`.
    pub fn from_dataset_name(name: &str) -> Option<Self> {
        let norm: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        if norm.starts_with("pfstar") {
            Some(ReferenceCorpus::Pfstar)
        } else if norm.starts_with("cmu") {
            Some(ReferenceCorpus::CmuKids)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub corpus: ReferenceCorpus,
    pub task: Task,
    /// `None` for the MFCC baseline.
    pub model: Option<ModelId>,
    /// Best layer for full-width rows; `None` for the baseline and reduced rows.
    pub layer: Option<i16>,
    /// Reduced dimension for PCA rows.
    pub k: Option<usize>,
    pub accuracy_pct: f64,
}

use ModelId::*;
use ReferenceCorpus::*;
use Task::*;

const fn base(corpus: ReferenceCorpus, task: Task, acc: f64) -> ReferenceRow {
    ReferenceRow { corpus, task, model: None, layer: None, k: None, accuracy_pct: acc }
}

const fn layer(corpus: ReferenceCorpus, task: Task, m: ModelId, l: i16, acc: f64) -> ReferenceRow {
    ReferenceRow { corpus, task, model: Some(m), layer: Some(l), k: None, accuracy_pct: acc }
}

const fn reduced(corpus: ReferenceCorpus, task: Task, m: ModelId, k: usize, acc: f64) -> ReferenceRow {
    ReferenceRow { corpus, task, model: Some(m), layer: None, k: Some(k), accuracy_pct: acc }
}

pub const REFERENCE_ROWS: [ReferenceRow; 36] = [
    base(Pfstar, Age, 80.92),
    layer(Pfstar, Age, Base100h, 6, 84.25),
    layer(Pfstar, Age, Base960h, 5, 81.89),
    layer(Pfstar, Age, Large960hLv60, 7, 83.59),
    layer(Pfstar, Age, Large960hLv60Self, 7, 83.46),
    base(Pfstar, Gender, 87.63),
    layer(Pfstar, Gender, Base100h, 4, 93.02),
    layer(Pfstar, Gender, Base960h, 2, 94.57),
    layer(Pfstar, Gender, Large960hLv60, 1, 91.45),
    layer(Pfstar, Gender, Large960hLv60Self, 2, 94.57),
    base(CmuKids, Age, 89.97),
    layer(CmuKids, Age, Base100h, 1, 92.13),
    layer(CmuKids, Age, Base960h, 0, 91.63),
    layer(CmuKids, Age, Large960hLv60, 1, 96.84),
    layer(CmuKids, Age, Large960hLv60Self, 1, 92.37),
    base(CmuKids, Gender, 88.41),
    layer(CmuKids, Gender, Base100h, 2, 93.78),
    layer(CmuKids, Gender, Base960h, 1, 94.96),
    layer(CmuKids, Gender, Large960hLv60, 2, 96.68),
    layer(CmuKids, Gender, Large960hLv60Self, 2, 96.53),
    reduced(Pfstar, Age, Base100h, 320, 86.05),
    reduced(Pfstar, Age, Base960h, 384, 83.72),
    reduced(Pfstar, Age, Large960hLv60, 256, 84.80),
    reduced(Pfstar, Age, Large960hLv60Self, 384, 85.27),
    reduced(Pfstar, Gender, Base100h, 64, 93.80),
    reduced(Pfstar, Gender, Base960h, 384, 93.80),
    reduced(Pfstar, Gender, Large960hLv60, 320, 92.75),
    reduced(Pfstar, Gender, Large960hLv60Self, 384, 95.00),
    reduced(CmuKids, Age, Base100h, 192, 93.18),
    reduced(CmuKids, Age, Base960h, 192, 93.43),
    reduced(CmuKids, Age, Large960hLv60, 256, 97.14),
    reduced(CmuKids, Age, Large960hLv60Self, 128, 96.84),
    reduced(CmuKids, Gender, Base100h, 64, 96.22),
    reduced(CmuKids, Gender, Base960h, 256, 96.71),
    reduced(CmuKids, Gender, Large960hLv60, 64, 98.20),
    reduced(CmuKids, Gender, Large960hLv60Self, 384, 97.95),
];

/// The baseline or best full-width row for a system.
pub fn best_layer_reference(corpus: ReferenceCorpus, task: Task, model: Option<ModelId>) -> Option<&'static ReferenceRow> {
    REFERENCE_ROWS.iter().find(|r| r.corpus == corpus && r.task == task && r.model == model && r.k.is_none())
}

/// The best reduced-dimension row for a model.
pub fn best_k_reference(corpus: ReferenceCorpus, task: Task, model: ModelId) -> Option<&'static ReferenceRow> {
    REFERENCE_ROWS.iter().find(|r| r.corpus == corpus && r.task == task && r.model == Some(model) && r.k.is_some())
}
