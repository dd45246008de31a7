//! Manifest files: one `subject_id,label_name,intensity,image_path` record
//! per line, with an optional fifth `generated` column.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub subject_id: String,
    pub label_name: String,
    pub intensity: f64,
    pub image_path: String,
    /// Synthesized by a trained model rather than captured.
    pub generated: bool,
}

impl ManifestRecord {
    pub fn new(subject_id: &str, label_name: &str, intensity: f64, image_path: &str) -> Self {
        Self {
            subject_id: subject_id.to_string(),
            label_name: label_name.to_string(),
            intensity,
            image_path: image_path.to_string(),
            generated: false,
        }
    }
}

pub fn parse_manifest(text: &str, vocabulary: &[String]) -> Result<Vec<ManifestRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Manifest {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::Manifest { line, msg };
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if !(4..=5).contains(&row.len()) {
            return Err(bad(format!("expected 4 or 5 fields, found {}", row.len())));
        }
        let subject_id = &row[0];
        if subject_id.is_empty() {
            return Err(bad("empty subject id".into()));
        }
        let label_name = &row[1];
        if !vocabulary.iter().any(|v| v == label_name) {
            return Err(bad(format!(
                "unknown label {label_name:?}; vocabulary is [{}]",
                vocabulary.join(", ")
            )));
        }
        let intensity = if row[2].is_empty() {
            1.0
        } else {
            row[2]
                .parse::<f64>()
                .map_err(|_| bad(format!("intensity {:?} is not a number", &row[2])))?
        };
        if !(0.0..=1.0).contains(&intensity) {
            return Err(bad(format!("intensity {intensity} outside [0, 1]")));
        }
        if row[3].is_empty() {
            return Err(bad("empty image path".into()));
        }
        let generated = match row.get(4) {
            None | Some("") | Some("false") => false,
            Some("true") => true,
            Some(other) => return Err(bad(format!("generated flag {other:?} is not true/false"))),
        };
        out.push(ManifestRecord {
            subject_id: subject_id.to_string(),
            label_name: label_name.to_string(),
            intensity,
            image_path: row[3].to_string(),
            generated,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path, vocabulary: &[String]) -> Result<Vec<ManifestRecord>> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Manifest {
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;
    parse_manifest(&text, vocabulary)
}

pub fn write_manifest<W: Write>(records: &[ManifestRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(out);
    for r in records {
        let intensity = format!("{:?}", r.intensity);
        let mut fields = vec![r.subject_id.as_str(), r.label_name.as_str(), intensity.as_str(), r.image_path.as_str()];
        if r.generated {
            fields.push("true");
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
