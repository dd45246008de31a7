//! Attribute-transfer and identity metrics against the synthetic oracle.

use crate::datapipe::SyntheticOracle;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::label::LabelCode;
use crate::synthesis::{synthesize_batch, Noise};
use crate::trainer::TrainState;

/// Anything that maps (subject, neutral source, code) to an image.
pub trait FaceSynthesizer {
    fn synthesize(&self, subject: &str, source: &ImageTensor, code: &LabelCode) -> Result<ImageTensor>;

    fn synthesize_many(
        &self,
        subjects: &[&str],
        sources: &[&ImageTensor],
        codes: &[&LabelCode],
    ) -> Result<Vec<ImageTensor>> {
        subjects
            .iter()
            .zip(sources)
            .zip(codes)
            .map(|((s, x), c)| self.synthesize(s, x, c))
            .collect()
    }
}

/// A trained model with fixed synthesis noise.
pub struct ModelSynthesizer<'a> {
    pub state: &'a TrainState,
    pub noise: Noise,
}

impl FaceSynthesizer for ModelSynthesizer<'_> {
    fn synthesize(&self, _subject: &str, source: &ImageTensor, code: &LabelCode) -> Result<ImageTensor> {
        crate::synthesis::synthesize(self.state, source, code, self.noise)
    }

    fn synthesize_many(
        &self,
        _subjects: &[&str],
        sources: &[&ImageTensor],
        codes: &[&LabelCode],
    ) -> Result<Vec<ImageTensor>> {
        let mut out = Vec::with_capacity(sources.len());
        for (xs, cs) in sources.chunks(32).zip(codes.chunks(32)) {
            out.extend(synthesize_batch(self.state, xs, cs, self.noise)?);
        }
        Ok(out)
    }
}

/// The oracle's own ground truth; scores perfectly by construction.
pub struct OracleSynthesizer<'a>(pub &'a SyntheticOracle);

impl FaceSynthesizer for OracleSynthesizer<'_> {
    fn synthesize(&self, subject: &str, _source: &ImageTensor, code: &LabelCode) -> Result<ImageTensor> {
        self.0.render(subject, code)
    }
}

impl<F> FaceSynthesizer for F
where
    F: Fn(&str, &ImageTensor, &LabelCode) -> Result<ImageTensor>,
{
    fn synthesize(&self, subject: &str, source: &ImageTensor, code: &LabelCode) -> Result<ImageTensor> {
        self(subject, source, code)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferEval {
    /// Fraction of (subject, non-neutral label) cases the probe accepts.
    pub transfer_acc: f64,
    /// Mean per-pixel L1 to the ground-truth target render, over all cases.
    pub identity_err: f64,
}

/// Synthesizes every (subject, label) target from the subject's neutral
/// render and scores it against the oracle.
pub fn evaluate_transfer(
    synth: &dyn FaceSynthesizer,
    oracle: &SyntheticOracle,
    subjects: &[String],
    labels: &[usize],
) -> Result<TransferEval> {
    if subjects.is_empty() {
        return Err(Error::InvalidValue("no test subjects".into()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidValue("no labels to evaluate".into()));
    }
    let n = oracle.labels().len();
    let mut neutrals = Vec::with_capacity(subjects.len());
    for s in subjects {
        neutrals.push(oracle.neutral(s)?);
    }
    let mut subj = Vec::new();
    let mut srcs = Vec::new();
    let mut codes = Vec::new();
    let mut cases = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        for &l in labels {
            codes.push(LabelCode::one_hot(n, l, 1.0)?);
            subj.push(s.as_str());
            srcs.push(&neutrals[i]);
            cases.push((s, l));
        }
    }
    let code_refs: Vec<&LabelCode> = codes.iter().collect();
    let outs = synth.synthesize_many(&subj, &srcs, &code_refs)?;
    let (mut hits, mut judged, mut err) = (0usize, 0usize, 0.0);
    for ((s, l), img) in cases.iter().zip(&outs) {
        if let Some(ok) = oracle.expresses(s, *l, img)? {
            judged += 1;
            hits += ok as usize;
        }
        err += img.mean_abs_diff(&oracle.render_label(s, *l, 1.0)?)?;
    }
    Ok(TransferEval {
        transfer_acc: if judged == 0 { 0.0 } else { hits as f64 / judged as f64 },
        identity_err: err / outs.len() as f64,
    })
}

pub fn transfer_accuracy(
    synth: &dyn FaceSynthesizer,
    oracle: &SyntheticOracle,
    subjects: &[String],
    labels: &[usize],
) -> Result<f64> {
    Ok(evaluate_transfer(synth, oracle, subjects, labels)?.transfer_acc)
}

pub fn identity_error(
    synth: &dyn FaceSynthesizer,
    oracle: &SyntheticOracle,
    subjects: &[String],
    labels: &[usize],
) -> Result<f64> {
    Ok(evaluate_transfer(synth, oracle, subjects, labels)?.identity_err)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // ties share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks). `NaN` when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

/// Oracle response to `label` along an intensity sweep of one subject.
pub fn sweep_responses(
    oracle: &SyntheticOracle,
    subject: &str,
    label: usize,
    frames: &[ImageTensor],
) -> Result<Vec<f64>> {
    frames
        .iter()
        .map(|f| {
            oracle
                .response(subject, label, f)?
                .ok_or_else(|| Error::InvalidValue("the neutral label has no response".into()))
        })
        .collect()
}
