//! Subject-independent k-fold classification with optional training-set
//! augmentation, on a synthetic benchmark where every subject lacks some
//! expression classes.

use std::collections::BTreeSet;

use crate::config::DEFAULT_LABELS;
use crate::datapipe::augment::linear_augment;
use crate::datapipe::pairs::{ImageSource, MemorySource, NEUTRAL};
use crate::datapipe::synthetic::{render_synthetic_face, subject_name, Identity, Pose, SyntheticFaceSpec};
use crate::datapipe::ManifestRecord;
use crate::error::{Error, Result};
use crate::eval::classifier::{train_classifier, ClassifierConfig};
use crate::eval::report::{EvalReport, ReportRow};
use crate::image::ImageTensor;
use crate::rng::SeededRng;
use crate::synthesis::{augment_dataset, plan_missing_labels, Noise};
use crate::trainer::TrainState;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub n_subjects: usize,
    /// Expression classes (never neutral) dropped per subject.
    pub missing_per_subject: usize,
    /// Renders per present (subject, label) cell.
    pub variants: usize,
    pub size: usize,
    /// Maximum translation in pixels along each axis.
    pub max_shift: f64,
    /// Maximum roll in degrees.
    pub max_roll: f64,
    pub min_intensity: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_subjects: 20,
            missing_per_subject: 2,
            variants: 2,
            size: 32,
            max_shift: 1.5,
            max_roll: 4.0,
            min_intensity: 0.7,
            seed: 0,
        }
    }
}

pub struct ClassificationBenchmark {
    pub records: Vec<ManifestRecord>,
    pub images: MemorySource,
    pub labels: Vec<String>,
    pub size: usize,
}

impl ClassificationBenchmark {
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    fn label_of(&self, name: &str) -> usize {
        self.labels.iter().position(|l| l == name).expect("benchmark labels")
    }
}

/// Renders the benchmark. Poses and intensities are jittered per image;
/// the first variant of every cell is canonically posed.
pub fn gen_classification_benchmark(cfg: &BenchmarkConfig) -> Result<ClassificationBenchmark> {
    let labels: Vec<String> = DEFAULT_LABELS.iter().map(|s| s.to_string()).collect();
    let expressive = labels.len() - 1;
    if cfg.n_subjects == 0 || cfg.variants == 0 {
        return Err(Error::InvalidValue("benchmark needs subjects and variants".into()));
    }
    if cfg.missing_per_subject >= expressive {
        return Err(Error::InvalidValue(format!(
            "cannot drop {} of {expressive} expression classes",
            cfg.missing_per_subject
        )));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut records = Vec::new();
    let mut images = MemorySource::default();
    for s in 0..cfg.n_subjects {
        let subject = subject_name(s);
        let identity = Identity::sample(&mut rng);
        let mut classes: Vec<usize> = (1..labels.len()).collect();
        rng.shuffle(&mut classes);
        let missing: BTreeSet<usize> = classes[..cfg.missing_per_subject].iter().copied().collect();
        for (l, name) in labels.iter().enumerate() {
            if missing.contains(&l) {
                continue;
            }
            for v in 0..cfg.variants {
                let mut attributes = vec![0.0; labels.len()];
                if l != 0 {
                    attributes[l] = rng.uniform_range(cfg.min_intensity, 1.0);
                }
                let pose = if v == 0 {
                    Pose::default()
                } else {
                    Pose {
                        offset_x: rng.uniform_range(-cfg.max_shift, cfg.max_shift) / cfg.size as f64,
                        offset_y: rng.uniform_range(-cfg.max_shift, cfg.max_shift) / cfg.size as f64,
                        roll: rng.uniform_range(-cfg.max_roll, cfg.max_roll),
                    }
                };
                let img = render_synthetic_face(&SyntheticFaceSpec { identity, attributes, pose }, cfg.size)?;
                let path = format!("{subject}/{name}_{v}.png");
                images.insert(&path, img);
                records.push(ManifestRecord::new(&subject, name, 1.0, &path));
            }
        }
    }
    Ok(ClassificationBenchmark {
        records,
        images,
        labels,
        size: cfg.size,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentMode {
    None,
    /// Every training image plus its 28 rotated/shifted copies.
    Linear,
    /// Missing labels of training subjects filled by the model, then the
    /// linear recipe applied to real and generated images alike.
    Dgan,
}

impl AugmentMode {
    pub fn name(self) -> &'static str {
        match self {
            AugmentMode::None => "none",
            AugmentMode::Linear => "linear",
            AugmentMode::Dgan => "dgan",
        }
    }
}

/// Sorted subjects shuffled by `seed`, then dealt round-robin.
pub fn assign_folds(subjects: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::InvalidValue(format!("k must be at least 2, got {k}")));
    }
    if k > subjects.len() {
        return Err(Error::InvalidValue(format!("k = {k} exceeds {} subjects", subjects.len())));
    }
    let mut sorted = subjects.to_vec();
    sorted.sort();
    sorted.dedup();
    SeededRng::new(seed).shuffle(&mut sorted);
    let mut folds = vec![Vec::new(); k];
    for (i, s) in sorted.into_iter().enumerate() {
        folds[i % k].push(s);
    }
    Ok(folds)
}

fn with_linear(images: Vec<(ImageTensor, usize)>) -> Vec<(ImageTensor, usize)> {
    let mut out = Vec::with_capacity(images.len() * 29);
    for (img, l) in images {
        for a in linear_augment(&img) {
            out.push((a, l));
        }
        out.push((img, l));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct KFoldResult {
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

impl KFoldResult {
    pub fn report_rows(&self, config: &str, seed: u64) -> Vec<ReportRow> {
        self.fold_accuracy
            .iter()
            .enumerate()
            .map(|(f, &a)| ReportRow {
                classifier_acc: Some(a),
                ..ReportRow::new(config, seed, f)
            })
            .collect()
    }
}

/// Runs the cross-validation. The classifier of fold `f` is seeded with
/// `seed + f * 1000 + seed_index`; test folds see only real images.
pub fn kfold_evaluate(
    bench: &ClassificationBenchmark,
    mode: AugmentMode,
    k: usize,
    dgan: Option<(&TrainState, Noise)>,
    classifier: &ClassifierConfig,
    seed: u64,
    seed_index: u64,
) -> Result<KFoldResult> {
    if mode == AugmentMode::Dgan && dgan.is_none() {
        return Err(Error::InvalidValue("dgan augmentation needs a trained state".into()));
    }
    let folds = assign_folds(&bench.subjects(), k, seed)?;
    let mut accs = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let test_set: BTreeSet<&str> = test.iter().map(String::as_str).collect();
        let train_records: Vec<ManifestRecord> = bench
            .records
            .iter()
            .filter(|r| !test_set.contains(r.subject_id.as_str()))
            .cloned()
            .collect();
        if train_records.iter().any(|r| test_set.contains(r.subject_id.as_str())) {
            return Err(Error::InvalidValue(format!("fold {f}: subject in both splits")));
        }
        let mut train: Vec<(ImageTensor, usize)> = Vec::new();
        for r in &train_records {
            train.push(((*bench.images.load(&r.image_path)?).clone(), bench.label_of(&r.label_name)));
        }
        if mode == AugmentMode::Dgan {
            let (state, noise) = dgan.expect("checked above");
            // only the canonical neutral render serves as the source
            let sources: Vec<ManifestRecord> = train_records
                .iter()
                .filter(|r| r.label_name != NEUTRAL || r.image_path.ends_with("_0.png"))
                .cloned()
                .collect();
            let plan = plan_missing_labels(&sources, &bench.labels);
            let generated = augment_dataset(state, &sources, &bench.images, &plan, None, noise)?;
            for r in &generated.records {
                if !r.generated || test_set.contains(r.subject_id.as_str()) {
                    return Err(Error::InvalidValue(format!(
                        "fold {f}: generated image of test subject {}",
                        r.subject_id
                    )));
                }
                train.push(((*generated.images.load(&r.image_path)?).clone(), bench.label_of(&r.label_name)));
            }
        }
        if mode != AugmentMode::None {
            train = with_linear(train);
        }
        let images: Vec<&ImageTensor> = train.iter().map(|(i, _)| i).collect();
        let labels: Vec<usize> = train.iter().map(|(_, l)| *l).collect();
        let cfg = ClassifierConfig {
            seed: seed + f as u64 * 1000 + seed_index,
            ..classifier.clone()
        };
        let clf = train_classifier(&images, &labels, bench.labels.len(), &cfg)?;
        let mut test_imgs = Vec::new();
        let mut test_labels = Vec::new();
        for r in bench.records.iter().filter(|r| test_set.contains(r.subject_id.as_str())) {
            test_imgs.push(bench.images.load(&r.image_path)?);
            test_labels.push(bench.label_of(&r.label_name));
        }
        let refs: Vec<&ImageTensor> = test_imgs.iter().map(|a| &**a).collect();
        accs.push(clf.accuracy(&refs, &test_labels)?);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok(KFoldResult {
        fold_accuracy: accs,
        mean_accuracy: mean,
    })
}

/// All three modes on one benchmark, one report row per fold.
pub fn augmentation_study(
    bench: &ClassificationBenchmark,
    k: usize,
    dgan: (&TrainState, Noise),
    classifier: &ClassifierConfig,
    seed: u64,
    seed_index: u64,
) -> Result<(EvalReport, [f64; 3])> {
    let mut report = EvalReport::default();
    let mut means = [0.0; 3];
    for (i, mode) in [AugmentMode::None, AugmentMode::Linear, AugmentMode::Dgan].into_iter().enumerate() {
        let r = kfold_evaluate(bench, mode, k, Some(dgan), classifier, seed, seed_index)?;
        for row in r.report_rows(mode.name(), seed) {
            report.push(row)?;
        }
        means[i] = r.mean_accuracy;
    }
    Ok((report, means))
}
