//! Run configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The six basic expressions plus neutral, in label-index order.
pub const DEFAULT_LABELS: [&str; 7] = [
    "neutral",
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
];

/// Image sizes the architecture builders accept. 64 is the reference
/// resolution; 32 and 16 are reduced models for desk-scale runs.
pub const SUPPORTED_SIZES: [usize; 3] = [16, 32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> candle_core::DType {
        match self {
            Precision::F32 => candle_core::DType::F32,
            Precision::F64 => candle_core::DType::F64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub image_size: usize,
    pub label_count: usize,
    pub labels: Vec<String>,
    pub lambda_diff: f64,
    pub lambda_standard: f64,
    pub lambda_recon: f64,
    pub learning_rate: f64,
    pub momentum_beta1: f64,
    pub momentum_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    /// Required for training; there is no meaningful default.
    pub max_iterations: Option<u64>,
    pub seed: u64,
    pub dropout_at_synthesis: bool,
    /// Channel width of the first encoder / discriminator block.
    pub base_width: usize,
    /// Encoder depth; `None` means `log2(image_size)` (six at 64x64).
    pub generator_depth: Option<usize>,
    pub embed_hidden: usize,
    pub use_standard_d: bool,
    pub use_diff_d: bool,
    pub checkpoint_every: u64,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            label_count: DEFAULT_LABELS.len(),
            labels: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
            lambda_diff: 0.5,
            lambda_standard: 1.0,
            lambda_recon: 100.0,
            learning_rate: 0.0002,
            momentum_beta1: 0.5,
            momentum_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 8,
            max_iterations: None,
            seed: 0,
            dropout_at_synthesis: true,
            base_width: 64,
            generator_depth: None,
            embed_hidden: 256,
            use_standard_d: true,
            use_diff_d: true,
            checkpoint_every: 1000,
            precision: Precision::F32,
        }
    }
}

const KEYS: [&str; 21] = [
    "image_size",
    "label_count",
    "labels",
    "lambda_diff",
    "lambda_standard",
    "lambda_recon",
    "learning_rate",
    "momentum_beta1",
    "momentum_beta2",
    "adam_epsilon",
    "batch_size",
    "max_iterations",
    "seed",
    "dropout_at_synthesis",
    "base_width",
    "generator_depth",
    "embed_hidden",
    "use_standard_d",
    "use_diff_d",
    "checkpoint_every",
    "precision",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("cannot parse {value:?} for {key}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true/false for {key}, got {value:?}")),
    }
}

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }

    /// Sets one field by name. Used by the file parser and by CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "image_size" => self.image_size = parse_num(key, value)?,
            "label_count" => self.label_count = parse_num(key, value)?,
            "labels" => {
                self.labels = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                self.label_count = self.labels.len();
            }
            "lambda_diff" => self.lambda_diff = parse_num(key, value)?,
            "lambda_standard" => self.lambda_standard = parse_num(key, value)?,
            "lambda_recon" => self.lambda_recon = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "momentum_beta1" => self.momentum_beta1 = parse_num(key, value)?,
            "momentum_beta2" => self.momentum_beta2 = parse_num(key, value)?,
            "adam_epsilon" => self.adam_epsilon = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "max_iterations" => {
                self.max_iterations = match value {
                    "" | "none" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "dropout_at_synthesis" => self.dropout_at_synthesis = parse_bool(key, value)?,
            "base_width" => self.base_width = parse_num(key, value)?,
            "generator_depth" => {
                self.generator_depth = match value {
                    "" | "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "embed_hidden" => self.embed_hidden = parse_num(key, value)?,
            "use_standard_d" => self.use_standard_d = parse_bool(key, value)?,
            "use_diff_d" => self.use_diff_d = parse_bool(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(format!("precision must be f32 or f64, got {value:?}")),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses the flat text form on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("expected `key = value`, got {line:?}"),
                });
            };
            self.set(key.trim(), value)
                .map_err(|msg| Error::Config { line: line_no, msg })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        let _ = writeln!(out, "image_size = {}", self.image_size);
        let _ = writeln!(out, "label_count = {}", self.label_count);
        let _ = writeln!(out, "labels = {}", self.labels.join(","));
        let _ = writeln!(out, "lambda_diff = {:?}", self.lambda_diff);
        let _ = writeln!(out, "lambda_standard = {:?}", self.lambda_standard);
        let _ = writeln!(out, "lambda_recon = {:?}", self.lambda_recon);
        let _ = writeln!(out, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(out, "momentum_beta1 = {:?}", self.momentum_beta1);
        let _ = writeln!(out, "momentum_beta2 = {:?}", self.momentum_beta2);
        let _ = writeln!(out, "adam_epsilon = {:?}", self.adam_epsilon);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "max_iterations = {}", opt(self.max_iterations));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "dropout_at_synthesis = {}", self.dropout_at_synthesis);
        let _ = writeln!(out, "base_width = {}", self.base_width);
        let _ = writeln!(
            out,
            "generator_depth = {}",
            self.generator_depth
                .map_or_else(|| "auto".to_string(), |d| d.to_string())
        );
        let _ = writeln!(out, "embed_hidden = {}", self.embed_hidden);
        let _ = writeln!(out, "use_standard_d = {}", self.use_standard_d);
        let _ = writeln!(out, "use_diff_d = {}", self.use_diff_d);
        let _ = writeln!(out, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(
            out,
            "precision = {}",
            match self.precision {
                Precision::F32 => "f32",
                Precision::F64 => "f64",
            }
        );
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidValue(msg));
        for (name, v) in [
            ("lambda_diff", self.lambda_diff),
            ("lambda_standard", self.lambda_standard),
            ("lambda_recon", self.lambda_recon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        // Zero is allowed: a null step leaves every parameter untouched.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        for (name, v) in [
            ("momentum_beta1", self.momentum_beta1),
            ("momentum_beta2", self.momentum_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad(format!("adam_epsilon must be > 0, got {}", self.adam_epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.label_count == 0 || self.labels.len() != self.label_count {
            return bad(format!(
                "label_count = {} but {} label names are configured",
                self.label_count,
                self.labels.len()
            ));
        }
        if !SUPPORTED_SIZES.contains(&self.image_size) {
            return bad(format!(
                "image_size {} unsupported (supported: {:?})",
                self.image_size, SUPPORTED_SIZES
            ));
        }
        if self.base_width == 0 || self.embed_hidden == 0 {
            return bad("base_width and embed_hidden must be >= 1".into());
        }
        let max_depth = self.image_size.trailing_zeros() as usize;
        if let Some(d) = self.generator_depth {
            if d < 2 || d > max_depth {
                return bad(format!(
                    "generator_depth {d} outside 2..={max_depth} for image_size {}",
                    self.image_size
                ));
            }
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.generator_depth
            .unwrap_or(self.image_size.trailing_zeros() as usize)
    }

    pub fn label_index(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::UnknownLabel {
                label: name.to_string(),
                vocabulary: self.labels.join(", "),
            })
    }
}
