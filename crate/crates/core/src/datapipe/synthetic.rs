//! Procedural synthetic faces with known geometry.
//!
//! Every face is an ellipse head with two eyes (eyelids covering
//! `1 - eye_openness` of each eye), two eyebrow segments and a mouth band
//! whose arc follows `mouth_curvature`. Identity fields control colour and
//! proportions; label magnitudes move the five expression quantities along
//! fixed per-label directions. Because the renderer knows the geometry, the
//! same module can measure expression quantities back out of any image of a
//! known subject, which is what the evaluation probe relies on.

use std::collections::HashMap;
use std::io::BufWriter;
use std::path::Path;

use crate::config::DEFAULT_LABELS;
use crate::datapipe::io::write_png;
use crate::datapipe::manifest::{write_manifest, ManifestRecord};
use crate::datapipe::pairs::{MemorySource, NEUTRAL};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::label::LabelCode;
use crate::rng::SeededRng;

/// Supersampling factor per axis.
const SUPERSAMPLE: usize = 6;

const HEAD_CENTER: (f64, f64) = (0.5, 0.5);
const HEAD_RY: f64 = 0.44;
const EYE_Y: f64 = 0.42;
const EYE_RX: f64 = 0.075;
const EYE_RY: f64 = 0.045;
const PUPIL_R: f64 = 0.026;
const BROW_BASE: f64 = 0.095;
const BROW_LIFT: f64 = 0.07;
const BROW_HALF_LEN: f64 = 0.075;
const BROW_HALF_THICK: f64 = 0.011;
const BROW_MAX_TILT_DEG: f64 = 20.0;
const MOUTH_Y: f64 = 0.70;
const MOUTH_HALF_WIDTH: f64 = 0.12;
const MOUTH_ARC: f64 = 0.07;
const MOUTH_THICK: f64 = 0.018;
const MOUTH_MAX_OPEN: f64 = 0.09;

const BACKGROUND: [f64; 3] = [0.25, 0.25, 0.30];
const EYE_WHITE: [f64; 3] = [0.95, 0.95, 0.95];
const PUPIL: [f64; 3] = [0.10, 0.10, 0.15];
const BROW: [f64; 3] = [0.20, 0.12, 0.08];
const MOUTH: [f64; 3] = [0.35, 0.05, 0.08];
const LID_SHADE: f64 = 0.85;
/// Approximate luma of the dark feature colours.
const FEATURE_LUMA: f64 = 0.14;

/// Per-subject appearance, each field in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Identity {
    pub face_hue: f64,
    pub face_aspect: f64,
    pub eye_spacing: f64,
    pub skin_tone: f64,
}

impl Identity {
    pub fn sample(rng: &mut SeededRng) -> Self {
        Self {
            face_hue: rng.uniform(),
            face_aspect: rng.uniform(),
            eye_spacing: rng.uniform(),
            skin_tone: rng.uniform(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("face_hue", self.face_hue),
            ("face_aspect", self.face_aspect),
            ("eye_spacing", self.eye_spacing),
            ("skin_tone", self.skin_tone),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn head_rx(&self) -> f64 {
        0.34 + 0.08 * self.face_aspect
    }

    fn eye_offset(&self) -> f64 {
        0.12 + 0.05 * self.eye_spacing
    }

    fn skin(&self) -> [f64; 3] {
        hsv_to_rgb(self.face_hue * 360.0, 0.5, 0.45 + 0.35 * self.skin_tone)
    }

    fn in_head(&self, u: f64, v: f64) -> bool {
        let dx = (u - HEAD_CENTER.0) / self.head_rx();
        let dy = (v - HEAD_CENTER.1) / HEAD_RY;
        dx * dx + dy * dy <= 1.0
    }
}

/// Rigid placement of the face in the frame. Offsets are in image-width
/// units, roll in degrees. The default is the canonical centred pose.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub offset_x: f64,
    pub offset_y: f64,
    pub roll: f64,
}

/// The five expression quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceGeometry {
    /// `[-1, 1]`; positive bends the mouth into a smile.
    pub mouth_curvature: f64,
    pub mouth_openness: f64,
    pub eye_openness: f64,
    /// `[-1, 1]`; positive lowers the inner brow ends.
    pub brow_angle: f64,
    pub brow_height: f64,
}

const GEOMETRY_RANGES: [(f64, f64); 5] = [(-1.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (0.0, 1.0)];

impl FaceGeometry {
    pub fn neutral() -> Self {
        Self::from_array([0.0, 0.0, 0.55, 0.0, 0.3])
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.mouth_curvature,
            self.mouth_openness,
            self.eye_openness,
            self.brow_angle,
            self.brow_height,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            mouth_curvature: a[0],
            mouth_openness: a[1],
            eye_openness: a[2],
            brow_angle: a[3],
            brow_height: a[4],
        }
    }

    /// Neutral geometry displaced by each label's signature scaled by its
    /// magnitude, clamped to the valid ranges.
    pub fn from_attributes(attributes: &[f64]) -> Self {
        let mut g = Self::neutral().to_array();
        for (label, &m) in DEFAULT_LABELS.iter().zip(attributes) {
            let sig = signature(label).unwrap_or([0.0; 5]);
            for k in 0..5 {
                g[k] += m * sig[k];
            }
        }
        for k in 0..5 {
            g[k] = g[k].clamp(GEOMETRY_RANGES[k].0, GEOMETRY_RANGES[k].1);
        }
        Self::from_array(g)
    }
}

/// Geometry displacement of a label at full magnitude.
pub fn signature(label: &str) -> Option<[f64; 5]> {
    Some(match label {
        "neutral" => [0.0; 5],
        "anger" => [-0.35, 0.0, -0.15, 0.9, -0.3],
        "disgust" => [-0.6, 0.25, -0.3, 0.3, -0.15],
        "fear" => [-0.25, 0.5, 0.35, -0.5, 0.5],
        "happiness" => [1.0, 0.35, -0.2, 0.0, 0.0],
        "sadness" => [-0.9, 0.0, -0.1, -0.9, 0.2],
        "surprise" => [0.0, 1.0, 0.45, 0.0, 0.7],
        _ => return None,
    })
}

/// A face to render: identity, one magnitude per default label, and pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFaceSpec {
    pub identity: Identity,
    pub attributes: Vec<f64>,
    pub pose: Pose,
}

impl SyntheticFaceSpec {
    pub fn neutral(identity: Identity) -> Self {
        Self {
            identity,
            attributes: vec![0.0; DEFAULT_LABELS.len()],
            pose: Pose::default(),
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn luma(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn eye_center(id: &Identity, side: f64) -> (f64, f64) {
    (0.5 + side * id.eye_offset(), EYE_Y)
}

fn mouth_upper(g: &FaceGeometry, q: f64) -> f64 {
    MOUTH_Y + g.mouth_curvature * MOUTH_ARC * ((1.0 - q * q) - 2.0 / 3.0)
}

fn shade(id: &Identity, g: &FaceGeometry, u: f64, v: f64) -> [f64; 3] {
    if !id.in_head(u, v) {
        return BACKGROUND;
    }
    let skin = id.skin();
    let tilt = (g.brow_angle * BROW_MAX_TILT_DEG).to_radians().tan();
    for side in [-1.0, 1.0] {
        let (ex, ey) = eye_center(id, side);
        let dx = (u - ex) / EYE_RX;
        let dy = (v - ey) / EYE_RY;
        if dx * dx + dy * dy <= 1.0 {
            let lid = ey - EYE_RY + (1.0 - g.eye_openness) * 2.0 * EYE_RY;
            if v < lid {
                return skin.map(|c| c * LID_SHADE);
            }
            if (u - ex).powi(2) + (v - ey).powi(2) <= PUPIL_R * PUPIL_R {
                return PUPIL;
            }
            return EYE_WHITE;
        }
        // inner brow end points toward the face midline
        let t = -side * tilt;
        let by = ey - (BROW_BASE + BROW_LIFT * g.brow_height);
        let norm = (1.0 + t * t).sqrt();
        let along = ((u - ex) + t * (v - by)) / norm;
        let across = ((v - by) - t * (u - ex)) / norm;
        if along.abs() <= BROW_HALF_LEN && across.abs() <= BROW_HALF_THICK {
            return BROW;
        }
    }
    let q = (u - 0.5) / MOUTH_HALF_WIDTH;
    if q.abs() <= 1.0 {
        let top = mouth_upper(g, q);
        if v >= top && v <= top + MOUTH_THICK + MOUTH_MAX_OPEN * g.mouth_openness {
            return MOUTH;
        }
    }
    skin
}

fn render_geometry(id: &Identity, g: &FaceGeometry, pose: &Pose, size: usize) -> ImageTensor {
    let (sin, cos) = (-pose.roll.to_radians()).sin_cos();
    let mut data = Vec::with_capacity(size * size * 3);
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for r in 0..size {
        for c in 0..size {
            let mut acc = [0.0f64; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = (c as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) / size as f64;
                    let y = (r as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) / size as f64;
                    // undo the pose: translate, then rotate about the centre
                    let px = x - pose.offset_x - 0.5;
                    let py = y - pose.offset_y - 0.5;
                    let u = cos * px - sin * py + 0.5;
                    let v = sin * px + cos * py + 0.5;
                    let col = shade(id, g, u, v);
                    for k in 0..3 {
                        acc[k] += col[k];
                    }
                }
            }
            for a in acc {
                data.push((2.0 * a / n - 1.0) as f32);
            }
        }
    }
    ImageTensor::from_vec(size, size, 3, data).expect("rendered buffer matches its shape")
}

/// Renders a face at `size`×`size`. Deterministic in the spec.
pub fn render_synthetic_face(spec: &SyntheticFaceSpec, size: usize) -> Result<ImageTensor> {
    spec.identity.validate()?;
    if spec.attributes.len() != DEFAULT_LABELS.len() {
        return Err(Error::LabelLength {
            expected: DEFAULT_LABELS.len(),
            actual: spec.attributes.len(),
        });
    }
    if let Some(m) = spec.attributes.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::InvalidValue(format!("attribute magnitude {m} outside [0, 1]")));
    }
    if size == 0 {
        return Err(Error::InvalidValue("render size must be positive".into()));
    }
    let g = FaceGeometry::from_attributes(&spec.attributes);
    Ok(render_geometry(&spec.identity, &g, &spec.pose, size))
}

/// Raw geometric readings from an image of a known, canonically posed
/// identity: `[arc height, mouth dark area, eye white area, brow slope,
/// brow elevation]`. Each grows with the matching geometry field.
pub fn measure_geometry(id: &Identity, img: &ImageTensor) -> [f64; 5] {
    let size = img.height();
    let skin_luma = luma(id.skin());
    let white_luma = luma(EYE_WHITE);
    let px = 1.0 / (size * size) as f64;
    let coord = |i: usize| (i as f64 + 0.5) / size as f64;
    let luma_at = |r: usize, c: usize| {
        let p = [0, 1, 2].map(|k| (img.get(r, c, k) as f64 + 1.0) / 2.0);
        luma(p)
    };
    let dark = |r: usize, c: usize| {
        ((skin_luma - luma_at(r, c)) / (skin_luma - FEATURE_LUMA)).clamp(0.0, 1.0)
    };

    // mouth band
    let (mut center_w, mut center_y, mut corner_w, mut corner_y, mut mouth_mass) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..size {
        let v = coord(r);
        if !(0.58..=0.90).contains(&v) {
            continue;
        }
        for c in 0..size {
            let u = coord(c);
            let q = (u - 0.5) / MOUTH_HALF_WIDTH;
            if q.abs() > 1.15 || !id.in_head(u, v) {
                continue;
            }
            let d = dark(r, c);
            mouth_mass += d * px;
            if q.abs() < 0.35 {
                center_w += d;
                center_y += d * v;
            } else if (0.55..0.9).contains(&q.abs()) {
                corner_w += d;
                corner_y += d * v;
            }
        }
    }
    let arc = if center_w > 1e-9 && corner_w > 1e-9 {
        center_y / center_w - corner_y / corner_w
    } else {
        0.0
    };

    // eyes and brows
    let (mut white, mut brow_w, mut brow_y) = (0.0, 0.0, 0.0);
    let mut slope_sum = 0.0;
    for side in [-1.0, 1.0] {
        let (ex, ey) = eye_center(id, side);
        let (mut w, mut su, mut sv, mut suu, mut suv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..size {
            let v = coord(r);
            for c in 0..size {
                let u = coord(c);
                if (u - ex).abs() > 0.09 || !id.in_head(u, v) {
                    continue;
                }
                if (v - ey).abs() <= 0.06 {
                    white += ((luma_at(r, c) - skin_luma) / (white_luma - skin_luma)).clamp(0.0, 1.0) * px;
                } else if v >= ey - 0.22 && v <= ey - 0.05 {
                    let d = dark(r, c);
                    let x = u - ex;
                    w += d;
                    su += d * x;
                    sv += d * v;
                    suu += d * x * x;
                    suv += d * x * v;
                }
            }
        }
        if w > 1e-9 {
            brow_w += w;
            brow_y += sv;
            let var = suu / w - (su / w).powi(2);
            if var > 1e-12 {
                let slope = (suv / w - (su / w) * (sv / w)) / var;
                // the inner end lies toward +x for the left brow
                slope_sum += -side * slope;
            }
        }
    }
    let elevation = if brow_w > 1e-9 { -brow_y / brow_w } else { 0.0 };
    [arc, mouth_mass, white, slope_sum / 2.0, elevation]
}

/// Per-subject calibration: the neutral reading and, for each quantity, the
/// reading span between its geometric extremes.
#[derive(Clone, Debug)]
struct Calibration {
    neutral: [f64; 5],
    span: [f64; 5],
}

impl Calibration {
    fn new(id: &Identity, size: usize) -> Self {
        let pose = Pose::default();
        let neutral = measure_geometry(id, &render_geometry(id, &FaceGeometry::neutral(), &pose, size));
        let mut span = [0.0; 5];
        for k in 0..5 {
            let mut lo = FaceGeometry::neutral().to_array();
            let mut hi = lo;
            lo[k] = GEOMETRY_RANGES[k].0;
            hi[k] = GEOMETRY_RANGES[k].1;
            let m_lo = measure_geometry(id, &render_geometry(id, &FaceGeometry::from_array(lo), &pose, size));
            let m_hi = measure_geometry(id, &render_geometry(id, &FaceGeometry::from_array(hi), &pose, size));
            span[k] = ((m_hi[k] - m_lo[k]) / (GEOMETRY_RANGES[k].1 - GEOMETRY_RANGES[k].0)).abs().max(1e-9);
        }
        Self { neutral, span }
    }
}

/// Renders and measures any label code for a fixed set of subjects.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    size: usize,
    labels: Vec<String>,
    subjects: Vec<(String, Identity)>,
    index: HashMap<String, usize>,
    calibration: Vec<Calibration>,
    /// Per subject, per label: (displacement of the full render, response of
    /// the half-intensity render).
    targets: Vec<Vec<Option<([f64; 5], f64)>>>,
}

impl SyntheticOracle {
    pub fn new(size: usize, labels: &[String], subjects: Vec<(String, Identity)>) -> Result<Self> {
        for l in labels {
            if signature(l).is_none() {
                return Err(Error::UnknownLabel {
                    label: l.clone(),
                    vocabulary: DEFAULT_LABELS.join(", "),
                });
            }
        }
        for (_, id) in &subjects {
            id.validate()?;
        }
        let index = subjects
            .iter()
            .enumerate()
            .map(|(i, (s, _))| (s.clone(), i))
            .collect();
        let mut oracle = Self {
            size,
            labels: labels.to_vec(),
            subjects,
            index,
            calibration: Vec::new(),
            targets: Vec::new(),
        };
        for (_, id) in &oracle.subjects {
            oracle.calibration.push(Calibration::new(id, size));
        }
        for s in 0..oracle.subjects.len() {
            let mut per_label = Vec::new();
            for l in 0..labels.len() {
                if labels[l] == NEUTRAL {
                    per_label.push(None);
                    continue;
                }
                let full = oracle.displacement_at(s, &oracle.render_index(s, &LabelCode::one_hot(labels.len(), l, 1.0)?)?);
                let half_img = oracle.render_index(s, &LabelCode::one_hot(labels.len(), l, 0.5)?)?;
                let half = project(&oracle.displacement_at(s, &half_img), &full);
                per_label.push(Some((full, half)));
            }
            oracle.targets.push(per_label);
        }
        Ok(oracle)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn identity(&self, subject: &str) -> Result<Identity> {
        Ok(self.subjects[self.lookup(subject)?].1)
    }

    fn lookup(&self, subject: &str) -> Result<usize> {
        self.index
            .get(subject)
            .copied()
            .ok_or_else(|| Error::InvalidValue(format!("unknown subject {subject:?}")))
    }

    fn label_lookup(&self, label: usize) -> Result<()> {
        if label >= self.labels.len() {
            return Err(Error::LabelIndex {
                index: label,
                count: self.labels.len(),
            });
        }
        Ok(())
    }

    /// Maps a code over this oracle's labels onto default-label magnitudes.
    fn attributes(&self, code: &LabelCode) -> Result<Vec<f64>> {
        if code.len() != self.labels.len() {
            return Err(Error::LabelLength {
                expected: self.labels.len(),
                actual: code.len(),
            });
        }
        let mut attrs = vec![0.0; DEFAULT_LABELS.len()];
        for (l, &m) in self.labels.iter().zip(code.values()) {
            let k = DEFAULT_LABELS.iter().position(|d| d == l).expect("labels validated");
            attrs[k] = m;
        }
        Ok(attrs)
    }

    fn render_index(&self, s: usize, code: &LabelCode) -> Result<ImageTensor> {
        let spec = SyntheticFaceSpec {
            identity: self.subjects[s].1,
            attributes: self.attributes(code)?,
            pose: Pose::default(),
        };
        render_synthetic_face(&spec, self.size)
    }

    /// Ground-truth render of `subject` expressing `code`.
    pub fn render(&self, subject: &str, code: &LabelCode) -> Result<ImageTensor> {
        self.render_index(self.lookup(subject)?, code)
    }

    pub fn neutral(&self, subject: &str) -> Result<ImageTensor> {
        self.render(subject, &LabelCode::zeros(self.labels.len()))
    }

    /// Ground truth for one label at `intensity`.
    pub fn render_label(&self, subject: &str, label: usize, intensity: f64) -> Result<ImageTensor> {
        self.label_lookup(label)?;
        self.render(subject, &LabelCode::one_hot(self.labels.len(), label, intensity)?)
    }

    fn displacement_at(&self, s: usize, img: &ImageTensor) -> [f64; 5] {
        let cal = &self.calibration[s];
        let m = measure_geometry(&self.subjects[s].1, img);
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = (m[k] - cal.neutral[k]) / cal.span[k];
        }
        out
    }

    /// Estimated geometry displacement from the subject's neutral face, in
    /// geometry units (`[curvature, openness, eyes, brow angle, brow height]`).
    pub fn displacement(&self, subject: &str, img: &ImageTensor) -> Result<[f64; 5]> {
        let s = self.lookup(subject)?;
        img.expect_model_shape(self.size)?;
        Ok(self.displacement_at(s, img))
    }

    /// How far `img` has moved toward the subject's full `label` expression:
    /// 0 at neutral, 1 at the full render. `None` for the neutral label.
    pub fn response(&self, subject: &str, label: usize, img: &ImageTensor) -> Result<Option<f64>> {
        self.label_lookup(label)?;
        let s = self.lookup(subject)?;
        let Some((full, _)) = self.targets[s][label] else {
            return Ok(None);
        };
        Ok(Some(project(&self.displacement(subject, img)?, &full)))
    }

    /// Probe decision threshold: the response of the half-intensity render.
    pub fn threshold(&self, subject: &str, label: usize) -> Result<Option<f64>> {
        self.label_lookup(label)?;
        Ok(self.targets[self.lookup(subject)?][label].map(|(_, t)| t))
    }

    /// Whether `img` expresses `label` at least as strongly as the
    /// half-intensity ground truth.
    pub fn expresses(&self, subject: &str, label: usize, img: &ImageTensor) -> Result<Option<bool>> {
        let (Some(r), Some(t)) = (self.response(subject, label, img)?, self.threshold(subject, label)?) else {
            return Ok(None);
        };
        Ok(Some(r >= t))
    }
}

fn project(x: &[f64; 5], dir: &[f64; 5]) -> f64 {
    let dot: f64 = x.iter().zip(dir).map(|(a, b)| a * b).sum();
    let nn: f64 = dir.iter().map(|d| d * d).sum();
    if nn < 1e-12 {
        0.0
    } else {
        dot / nn
    }
}

/// Rendered images and their manifest, plus the oracle for the subjects.
pub struct SyntheticDataset {
    pub records: Vec<ManifestRecord>,
    pub images: MemorySource,
    pub oracle: SyntheticOracle,
}

impl SyntheticDataset {
    /// Writes every image as PNG under `dir` plus `dir/manifest.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for r in &self.records {
            let img = self.images.0.get(&r.image_path).expect("record image present");
            let path = dir.join(&r.image_path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_png(&path, img)?;
        }
        let f = std::fs::File::create(dir.join("manifest.csv"))?;
        write_manifest(&self.records, BufWriter::new(f))
    }

    /// Records restricted to the given subjects.
    pub fn records_for(&self, subjects: &[String]) -> Vec<ManifestRecord> {
        self.records
            .iter()
            .filter(|r| subjects.contains(&r.subject_id))
            .cloned()
            .collect()
    }
}

pub fn subject_name(i: usize) -> String {
    format!("s{i:03}")
}

/// Samples `n_subjects` identities from `seed` and renders one full-intensity
/// image per (subject, label); the neutral label gives the neutral face.
pub fn gen_synthetic_dataset(
    n_subjects: usize,
    labels: &[String],
    seed: u64,
    size: usize,
) -> Result<SyntheticDataset> {
    if n_subjects == 0 {
        return Err(Error::InvalidValue("n_subjects must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let subjects: Vec<(String, Identity)> = (0..n_subjects)
        .map(|i| (subject_name(i), Identity::sample(&mut rng)))
        .collect();
    let oracle = SyntheticOracle::new(size, labels, subjects)?;
    let mut records = Vec::new();
    let mut images = MemorySource::default();
    for subject in oracle.subject_ids() {
        for (l, name) in labels.iter().enumerate() {
            let path = format!("{subject}/{name}.png");
            images.insert(&path, oracle.render_label(&subject, l, 1.0)?);
            records.push(ManifestRecord::new(&subject, name, 1.0, &path));
        }
    }
    Ok(SyntheticDataset {
        records,
        images,
        oracle,
    })
}
