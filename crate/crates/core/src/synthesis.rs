//! Inference-time traversal of the learned attribute manifold: single
//! syntheses, intensity and compound sweeps, spatial label composition and
//! bulk generation of missing labels.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use candle_core::Tensor;

use crate::datapipe::io::write_png;
use crate::datapipe::pairs::{ImageSource, MemorySource, NEUTRAL};
use crate::datapipe::ManifestRecord;
use crate::error::{Error, Result};
use crate::image::{images_to_tensor, tensor_to_images, ImageTensor};
use crate::label::{compose_label_channels, embed_label_code, LabelCode, Mask};
use crate::nn::Mode;
use crate::rng::SeededRng;
use crate::trainer::TrainState;

/// Dropout behaviour at synthesis. The same seed gives the same masks, so a
/// sweep with one `Noise` varies only with the code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Noise {
    pub dropout: bool,
    pub seed: u64,
}

impl Noise {
    pub fn off() -> Self {
        Self { dropout: false, seed: 0 }
    }

    /// The state's configured synthesis behaviour, seeded from its config.
    pub fn from_state(state: &TrainState) -> Self {
        Self {
            dropout: state.config.dropout_at_synthesis,
            seed: state.config.seed,
        }
    }
}

/// Runs the generator on `x` with an explicit `(1, 1, S, S)` label channel.
pub fn synthesize_with_channel(
    state: &TrainState,
    x: &ImageTensor,
    channel: &Tensor,
    noise: Noise,
) -> Result<ImageTensor> {
    x.expect_model_shape(state.config.image_size)?;
    let dtype = state.config.precision.dtype();
    let xt = images_to_tensor(&[x], dtype)?;
    let mut rng = SeededRng::new(noise.seed);
    let out = state.generator.forward(
        &xt,
        &channel.to_dtype(dtype)?,
        Mode::Inference { dropout: noise.dropout },
        &mut rng,
    )?;
    Ok(tensor_to_images(&out)?.remove(0))
}

pub fn synthesize(state: &TrainState, x: &ImageTensor, code: &LabelCode, noise: Noise) -> Result<ImageTensor> {
    let channel = embed_label_code(&[code], &state.embedding)?;
    synthesize_with_channel(state, x, &channel.to_tensor(state.config.precision.dtype())?, noise)
}

/// Many `(source, code)` syntheses in one forward pass.
pub fn synthesize_batch(
    state: &TrainState,
    xs: &[&ImageTensor],
    codes: &[&LabelCode],
    noise: Noise,
) -> Result<Vec<ImageTensor>> {
    if xs.len() != codes.len() {
        return Err(Error::InvalidValue(format!(
            "{} images but {} codes",
            xs.len(),
            codes.len()
        )));
    }
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    for x in xs {
        x.expect_model_shape(state.config.image_size)?;
    }
    let dtype = state.config.precision.dtype();
    let xt = images_to_tensor(xs, dtype)?;
    let label = state.label_channel(codes)?;
    let mut rng = SeededRng::new(noise.seed);
    let out = state.generator.forward(
        &xt,
        &label,
        Mode::Inference { dropout: noise.dropout },
        &mut rng,
    )?;
    tensor_to_images(&out)
}

/// `steps` intensities evenly spaced over `[0.1, 1]`, or `[0, 1]` with
/// `from_zero`.
pub fn sweep_intensities(steps: usize, from_zero: bool) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::InvalidValue(format!("sweep needs at least 2 steps, got {steps}")));
    }
    let lo = if from_zero { 0.0 } else { 0.1 };
    Ok((0..steps)
        .map(|i| lo + (1.0 - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

pub fn intensity_sweep(
    state: &TrainState,
    x: &ImageTensor,
    label: usize,
    steps: usize,
    from_zero: bool,
    noise: Noise,
) -> Result<Vec<ImageTensor>> {
    let n = state.config.label_count;
    sweep_intensities(steps, from_zero)?
        .into_iter()
        .map(|t| synthesize(state, x, &LabelCode::one_hot(n, label, t)?, noise))
        .collect()
}

/// Codes moving from pure `a` to pure `b`: step `i` has `a = 1 - t_i`,
/// `b = t_i` with `t` evenly spaced over `[0, 1]`.
pub fn compound_codes(n: usize, a: usize, b: usize, steps: usize) -> Result<Vec<LabelCode>> {
    if a == b {
        return Err(Error::InvalidValue("compound sweep needs two different labels".into()));
    }
    if steps < 2 {
        return Err(Error::InvalidValue(format!("sweep needs at least 2 steps, got {steps}")));
    }
    for l in [a, b] {
        if l >= n {
            return Err(Error::LabelIndex { index: l, count: n });
        }
    }
    (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            let mut v = vec![0.0; n];
            v[a] = 1.0 - t;
            v[b] = t;
            LabelCode::new(v)
        })
        .collect()
}

pub fn compound_sweep(
    state: &TrainState,
    x: &ImageTensor,
    a: usize,
    b: usize,
    steps: usize,
    noise: Noise,
) -> Result<Vec<ImageTensor>> {
    compound_codes(state.config.label_count, a, b, steps)?
        .iter()
        .map(|c| synthesize(state, x, c, noise))
        .collect()
}

/// Independent-intensity grid: row `i` sets label `a` to `t_i`, column `j`
/// sets label `b` to `t_j`, `t` evenly spaced over `[0, 1]`.
pub fn compound_grid(
    state: &TrainState,
    x: &ImageTensor,
    a: usize,
    b: usize,
    steps: usize,
    noise: Noise,
) -> Result<Vec<Vec<ImageTensor>>> {
    let n = state.config.label_count;
    compound_codes(n, a, b, steps)?;
    let ts = sweep_intensities(steps, true)?;
    ts.iter()
        .map(|&ta| {
            ts.iter()
                .map(|&tb| {
                    let mut v = vec![0.0; n];
                    v[a] = ta;
                    v[b] = tb;
                    synthesize(state, x, &LabelCode::new(v)?, noise)
                })
                .collect()
        })
        .collect()
}

/// Embeds both codes, takes `code_a`'s channel where `mask` is set and
/// `code_b`'s elsewhere, then synthesizes.
pub fn region_compose_synthesis(
    state: &TrainState,
    x: &ImageTensor,
    code_a: &LabelCode,
    code_b: &LabelCode,
    mask: &Mask,
    noise: Noise,
) -> Result<ImageTensor> {
    let a = embed_label_code(&[code_a], &state.embedding)?;
    let b = embed_label_code(&[code_b], &state.embedding)?;
    let channel = compose_label_channels(&a, &b, mask)?;
    synthesize_with_channel(state, x, &channel.to_tensor(state.config.precision.dtype())?, noise)
}

/// One generation target: a subject and the label it lacks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct AugmentTarget {
    pub subject_id: String,
    pub label_name: String,
}

/// Every (subject, label) cell absent from `records`, for subjects that
/// have a neutral image. Sorted by subject, then vocabulary order.
pub fn plan_missing_labels(records: &[ManifestRecord], vocabulary: &[String]) -> Vec<AugmentTarget> {
    let mut present: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for r in records {
        present.entry(&r.subject_id).or_default().insert(&r.label_name);
    }
    let mut subjects: Vec<&str> = present
        .iter()
        .filter(|(_, labels)| labels.contains(NEUTRAL))
        .map(|(s, _)| *s)
        .collect();
    subjects.sort_unstable();
    let mut out = Vec::new();
    for s in subjects {
        for l in vocabulary {
            if !present[s].contains(l.as_str()) {
                out.push(AugmentTarget {
                    subject_id: s.to_string(),
                    label_name: l.clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct Augmented {
    /// Manifest rows for the generated images, all tagged `generated`.
    pub records: Vec<ManifestRecord>,
    pub images: MemorySource,
    /// Subjects without a neutral image.
    pub skipped: Vec<String>,
}

/// Synthesizes each target from its subject's neutral image. Generated
/// paths live under `generated/` so they never collide with source rows;
/// with `out_dir` the PNGs are written there too.
pub fn augment_dataset(
    state: &TrainState,
    records: &[ManifestRecord],
    source: &dyn ImageSource,
    plan: &[AugmentTarget],
    out_dir: Option<&Path>,
    noise: Noise,
) -> Result<Augmented> {
    let vocab = &state.config.labels;
    let mut neutral: HashMap<&str, &str> = HashMap::new();
    for r in records {
        if r.label_name == NEUTRAL {
            neutral.entry(&r.subject_id).or_insert(&r.image_path);
        }
    }
    let existing: BTreeSet<&str> = records.iter().map(|r| r.image_path.as_str()).collect();
    let mut out = Augmented::default();
    for t in plan {
        let Some(&path) = neutral.get(t.subject_id.as_str()) else {
            if !out.skipped.contains(&t.subject_id) {
                log::warn!("subject {} has no neutral image; skipped", t.subject_id);
                out.skipped.push(t.subject_id.clone());
            }
            continue;
        };
        let label = vocab.iter().position(|v| *v == t.label_name).ok_or_else(|| Error::UnknownLabel {
            label: t.label_name.clone(),
            vocabulary: vocab.join(", "),
        })?;
        let x = source.load(path)?;
        let img = synthesize(state, &x, &LabelCode::one_hot(vocab.len(), label, 1.0)?, noise)?;
        let rel = format!("generated/{}/{}.png", t.subject_id, t.label_name);
        if existing.contains(rel.as_str()) {
            return Err(Error::InvalidValue(format!("generated path {rel} already used by a source row")));
        }
        if let Some(dir) = out_dir {
            write_png(&dir.join(&rel), &img)?;
        }
        let mut rec = ManifestRecord::new(&t.subject_id, &t.label_name, 1.0, &rel);
        rec.generated = true;
        out.records.push(rec);
        out.images.insert(&rel, img);
    }
    Ok(out)
}
