//! Neutral-to-target training pairs.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::datapipe::io::read_png;
use crate::datapipe::manifest::ManifestRecord;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::label::LabelCode;

pub const NEUTRAL: &str = "neutral";

#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub source: Arc<ImageTensor>,
    pub target: Arc<ImageTensor>,
    pub code: LabelCode,
    pub subject_id: String,
    pub label: usize,
}

/// Resolves manifest image paths to images.
pub trait ImageSource {
    fn load(&self, path: &str) -> Result<Arc<ImageTensor>>;
}

/// PNG files relative to a root directory, cached after the first read.
pub struct DirSource {
    root: PathBuf,
    size: usize,
    cache: Mutex<HashMap<String, Arc<ImageTensor>>>,
}

impl DirSource {
    pub fn new(root: impl Into<PathBuf>, size: usize) -> Self {
        Self {
            root: root.into(),
            size,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl ImageSource for DirSource {
    fn load(&self, path: &str) -> Result<Arc<ImageTensor>> {
        if let Some(img) = self.cache.lock().expect("cache lock").get(path) {
            return Ok(img.clone());
        }
        let img = Arc::new(read_png(&self.root.join(path), self.size)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(path.to_string(), img.clone());
        Ok(img)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MemorySource(pub HashMap<String, Arc<ImageTensor>>);

impl MemorySource {
    pub fn insert(&mut self, path: &str, img: ImageTensor) {
        self.0.insert(path.to_string(), Arc::new(img));
    }
}

impl ImageSource for MemorySource {
    fn load(&self, path: &str) -> Result<Arc<ImageTensor>> {
        self.0.get(path).cloned().ok_or_else(|| Error::ImageFile {
            path: PathBuf::from(path),
            msg: "not found".into(),
        })
    }
}

/// One planned pair, by manifest index.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSpec {
    pub source: usize,
    pub target: usize,
    pub label: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairPlan {
    pub pairs: Vec<PairSpec>,
    /// Subjects without a neutral record.
    pub skipped_subjects: Vec<String>,
}

/// For every subject with a neutral record, pairs that neutral image with
/// each of the subject's records (the neutral one included).
pub fn plan_pairs(records: &[ManifestRecord], vocabulary: &[String]) -> Result<PairPlan> {
    let label_of = |name: &str| {
        vocabulary.iter().position(|v| v == name).ok_or_else(|| Error::UnknownLabel {
            label: name.to_string(),
            vocabulary: vocabulary.join(", "),
        })
    };
    label_of(NEUTRAL)?;
    let mut order: Vec<&str> = Vec::new();
    let mut by_subject: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let entry = by_subject.entry(r.subject_id.as_str()).or_insert_with(|| {
            order.push(r.subject_id.as_str());
            Vec::new()
        });
        entry.push(i);
    }
    let mut plan = PairPlan::default();
    for subject in order {
        let idxs = &by_subject[subject];
        let Some(&neutral) = idxs.iter().find(|&&i| records[i].label_name == NEUTRAL) else {
            plan.skipped_subjects.push(subject.to_string());
            continue;
        };
        for &t in idxs {
            plan.pairs.push(PairSpec {
                source: neutral,
                target: t,
                label: label_of(&records[t].label_name)?,
            });
        }
    }
    Ok(plan)
}

#[derive(Clone, Debug, Default)]
pub struct PairSet {
    pub pairs: Vec<TrainingPair>,
    pub skipped_subjects: Vec<String>,
}

impl PairSet {
    pub fn warnings(&self) -> usize {
        self.skipped_subjects.len()
    }
}

/// Plans pairs and loads their images. The pair code is
/// `one_hot(target label) * intensity`.
pub fn build_pairs(
    records: &[ManifestRecord],
    vocabulary: &[String],
    source: &dyn ImageSource,
) -> Result<PairSet> {
    let plan = plan_pairs(records, vocabulary)?;
    for s in &plan.skipped_subjects {
        log::warn!("subject {s} has no neutral image; skipped");
    }
    let mut pairs = Vec::with_capacity(plan.pairs.len());
    for p in &plan.pairs {
        let target = &records[p.target];
        pairs.push(TrainingPair {
            source: source.load(&records[p.source].image_path)?,
            target: source.load(&target.image_path)?,
            code: LabelCode::one_hot(vocabulary.len(), p.label, target.intensity)?,
            subject_id: target.subject_id.clone(),
            label: p.label,
        });
    }
    Ok(PairSet {
        pairs,
        skipped_subjects: plan.skipped_subjects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_LABELS;
    use proptest::prelude::*;

    fn vocab() -> Vec<String> {
        DEFAULT_LABELS.iter().map(|s| s.to_string()).collect()
    }

    fn source_for(records: &[ManifestRecord]) -> MemorySource {
        let mut s = MemorySource::default();
        for (i, r) in records.iter().enumerate() {
            s.insert(&r.image_path, ImageTensor::filled(4, 4, 3, i as f32 / 100.0));
        }
        s
    }

    #[test]
    fn neutral_plus_happiness_gives_two_pairs() {
        let recs = vec![
            ManifestRecord::new("s1", "neutral", 1.0, "n.png"),
            ManifestRecord::new("s1", "happiness", 1.0, "h.png"),
        ];
        let set = build_pairs(&recs, &vocab(), &source_for(&recs)).unwrap();
        assert_eq!(set.pairs.len(), 2);
        assert_eq!(set.pairs[0].code, LabelCode::one_hot(7, 0, 1.0).unwrap());
        assert_eq!(set.pairs[1].code, LabelCode::one_hot(7, 4, 1.0).unwrap());
        assert!(Arc::ptr_eq(&set.pairs[1].source, &set.pairs[0].target));
    }

    #[test]
    fn subject_without_neutral_is_skipped() {
        let recs = vec![ManifestRecord::new("s9", "happiness", 1.0, "h.png")];
        let set = build_pairs(&recs, &vocab(), &source_for(&recs)).unwrap();
        assert!(set.pairs.is_empty());
        assert_eq!(set.warnings(), 1);
    }

    #[test]
    fn intensity_scales_code() {
        let recs = vec![
            ManifestRecord::new("s1", "neutral", 1.0, "n.png"),
            ManifestRecord::new("s1", "fear", 0.4, "f.png"),
        ];
        let set = build_pairs(&recs, &vocab(), &source_for(&recs)).unwrap();
        assert_eq!(set.pairs[1].code.values()[3], 0.4);
    }

    #[test]
    fn missing_image_fails_at_pairing() {
        let recs = vec![ManifestRecord::new("s1", "neutral", 1.0, "gone.png")];
        assert!(build_pairs(&recs, &vocab(), &MemorySource::default()).is_err());
    }

    #[test]
    fn complete_reference_manifest_gives_1610_pairs() {
        let mut recs = Vec::new();
        for s in 0..230 {
            for l in DEFAULT_LABELS {
                recs.push(ManifestRecord::new(&format!("s{s:03}"), l, 1.0, "shared.png"));
            }
        }
        let mut src = MemorySource::default();
        src.insert("shared.png", ImageTensor::filled(8, 8, 3, 0.0));
        assert_eq!(build_pairs(&recs, &vocab(), &src).unwrap().pairs.len(), 1610);
    }

    proptest! {
        #[test]
        fn count_matches_records_of_subjects_with_neutral(
            rows in prop::collection::vec((0usize..6, 0usize..7), 0..40)) {
            let recs: Vec<ManifestRecord> = rows
                .iter()
                .map(|&(s, l)| ManifestRecord::new(&format!("s{s}"), DEFAULT_LABELS[l], 1.0, "p.png"))
                .collect();
            let plan = plan_pairs(&recs, &vocab()).unwrap();
            let expected: usize = (0..6)
                .map(|s| {
                    let mine: Vec<_> = rows.iter().filter(|r| r.0 == s).collect();
                    if mine.iter().any(|r| r.1 == 0) { mine.len() } else { 0 }
                })
                .sum();
            prop_assert_eq!(plan.pairs.len(), expected);
        }
    }
}
