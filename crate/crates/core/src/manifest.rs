//! Dataset inventory: speakers, utterances, splits and age/gender labels.
//!
//! The on-disk format is a line-oriented text file:
//!
//! ```text
//! trait-probe-manifest v1
//! dataset=<name> age_min=<int> age_max=<int> speaker_disjoint=<0|1>
//! utt_id<TAB>speaker_id<TAB>audio_path<TAB>age<TAB>m|f<TAB>train|test<TAB>duration_s
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const MANIFEST_MAGIC: &str = "trait-probe-manifest v1";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
        }
    }
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" => Ok(Gender::Male),
            "f" => Ok(Gender::Female),
            other => Err(format!("gender must be 'm' or 'f', got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("split must be 'train' or 'test', got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Relative to the manifest's directory.
    pub audio_path: String,
    pub age: i32,
    pub gender: Gender,
    pub split: Split,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub age_min: i32,
    pub age_max: i32,
    pub speaker_disjoint: bool,
    pub entries: Vec<UtteranceEntry>,
}

impl DatasetManifest {
    /// Checks every manifest invariant and names the first offending record.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let bad = |m: String| Err(ManifestError::Validation(m));
        if self.dataset_name.is_empty() || self.dataset_name.contains(char::is_whitespace) {
            return bad(format!("dataset name '{}' must be nonempty without whitespace", self.dataset_name));
        }
        if self.age_min > self.age_max {
            return bad(format!("age_min {} exceeds age_max {}", self.age_min, self.age_max));
        }
        if self.entries.is_empty() {
            return bad("manifest has zero utterances".into());
        }
        let mut ids = HashSet::with_capacity(self.entries.len());
        let mut speaker_split: HashMap<&str, Split> = HashMap::new();
        for e in &self.entries {
            for (name, field) in [("utterance_id", &e.utterance_id), ("speaker_id", &e.speaker_id), ("audio_path", &e.audio_path)] {
                if field.is_empty() || field.contains(['\t', '\n', '\r']) {
                    return bad(format!("utterance '{}': invalid {name} '{field}'", e.utterance_id));
                }
            }
            if !ids.insert(e.utterance_id.as_str()) {
                return bad(format!("duplicate utterance id '{}'", e.utterance_id));
            }
            if e.age < self.age_min || e.age > self.age_max {
                return bad(format!(
                    "utterance '{}': age {} outside range {}-{}",
                    e.utterance_id, e.age, self.age_min, self.age_max
                ));
            }
            if !(e.duration_s.is_finite() && e.duration_s >= 0.0) {
                return bad(format!("utterance '{}': invalid duration {}", e.utterance_id, e.duration_s));
            }
            if self.speaker_disjoint {
                let prev = *speaker_split.entry(e.speaker_id.as_str()).or_insert(e.split);
                if prev != e.split {
                    return bad(format!(
                        "speaker '{}' appears in both train and test (utterance '{}')",
                        e.speaker_id, e.utterance_id
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtteranceEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn n_age_classes(&self) -> usize {
        (self.age_max - self.age_min + 1) as usize
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_MAGIC);
        out.push('\n');
        out.push_str(&format!(
            "dataset={} age_min={} age_max={} speaker_disjoint={}\n",
            self.dataset_name,
            self.age_min,
            self.age_max,
            u8::from(self.speaker_disjoint)
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.utterance_id,
                e.speaker_id,
                e.audio_path,
                e.age,
                e.gender.code(),
                e.split,
                e.duration_s
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let perr = |line: usize, message: String| ManifestError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        match lines.next() {
            Some((_, l)) if l.trim_end() == MANIFEST_MAGIC => {}
            Some((n, l)) => return Err(perr(n, format!("expected '{MANIFEST_MAGIC}', got '{l}'"))),
            None => return Err(perr(1, "empty file".into())),
        }
        let (hn, header) = lines.next().ok_or_else(|| perr(2, "missing header line".into()))?;
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| perr(hn, format!("header token '{tok}' is not key=value")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| perr(hn, format!("header missing '{k}'")));
        let int = |k: &str| -> Result<i32, ManifestError> {
            get(k)?.parse().map_err(|e| perr(hn, format!("header '{k}': {e}")))
        };
        let dataset_name = get("dataset")?.to_string();
        let age_min = int("age_min")?;
        let age_max = int("age_max")?;
        let speaker_disjoint = match get("speaker_disjoint")? {
            "0" => false,
            "1" => true,
            v => return Err(perr(hn, format!("speaker_disjoint must be 0 or 1, got '{v}'"))),
        };

        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(perr(n, format!("expected 7 tab-separated fields, got {}", cols.len())));
            }
            entries.push(UtteranceEntry {
                utterance_id: cols[0].to_string(),
                speaker_id: cols[1].to_string(),
                audio_path: cols[2].to_string(),
                age: cols[3].parse().map_err(|e| perr(n, format!("age '{}': {e}", cols[3])))?,
                gender: cols[4].parse().map_err(|e| perr(n, e))?,
                split: cols[5].parse().map_err(|e| perr(n, e))?,
                duration_s: cols[6]
                    .parse()
                    .map_err(|e| perr(n, format!("duration '{}': {e}", cols[6])))?,
            });
        }
        Ok(DatasetManifest { dataset_name, age_min, age_max, speaker_disjoint, entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        self.validate()?;
        fs::write(path, self.to_text())
            .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })
    }
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
    let manifest = DatasetManifest::parse(&text)?;
    manifest.validate()?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub utterances: usize,
    pub male_utterances: usize,
    pub female_utterances: usize,
    pub male_speakers: usize,
    pub female_speakers: usize,
    pub total_duration_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub dataset: String,
    pub train: SplitSummary,
    pub test: SplitSummary,
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset\tsplit\tmale_spk\tfemale_spk\tmale_utt\tfemale_utt\tutterances\tduration_h")?;
        for (name, s) in [("train", &self.train), ("test", &self.test)] {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.2}",
                self.dataset,
                name,
                s.male_speakers,
                s.female_speakers,
                s.male_utterances,
                s.female_utterances,
                s.utterances,
                s.total_duration_s / 3600.0
            )?;
        }
        Ok(())
    }
}

pub fn summarize(manifest: &DatasetManifest) -> SummaryTable {
    let tally = |split: Split| {
        let mut s = SplitSummary::default();
        let mut male = BTreeSet::new();
        let mut female = BTreeSet::new();
        for e in manifest.split(split) {
            s.utterances += 1;
            s.total_duration_s += e.duration_s;
            match e.gender {
                Gender::Male => {
                    s.male_utterances += 1;
                    male.insert(e.speaker_id.as_str());
                }
                Gender::Female => {
                    s.female_utterances += 1;
                    female.insert(e.speaker_id.as_str());
                }
            }
        }
        s.male_speakers = male.len();
        s.female_speakers = female.len();
        s
    };
    SummaryTable { dataset: manifest.dataset_name.clone(), train: tally(Split::Train), test: tally(Split::Test) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Age,
    Gender,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Age => "age",
            Task::Gender => "gender",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "age" => Ok(Task::Age),
            "gender" => Ok(Task::Gender),
            other => Err(format!("task must be 'age' or 'gender', got '{other}'")),
        }
    }
}

/// Classification target derived from a manifest. Age classes are the
/// consecutive integer years of the manifest's age range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub n_classes: usize,
    pub class_labels: Vec<String>,
    age_min: i32,
}

impl TaskSpec {
    pub fn for_manifest(task: Task, manifest: &DatasetManifest) -> Self {
        let class_labels: Vec<String> = match task {
            Task::Age => (manifest.age_min..=manifest.age_max).map(|a| a.to_string()).collect(),
            Task::Gender => vec!["male".into(), "female".into()],
        };
        TaskSpec { task, n_classes: class_labels.len(), class_labels, age_min: manifest.age_min }
    }

    pub fn label(&self, entry: &UtteranceEntry) -> usize {
        match self.task {
            Task::Age => (entry.age - self.age_min) as usize,
            Task::Gender => match entry.gender {
                Gender::Male => 0,
                Gender::Female => 1,
            },
        }
    }
}
