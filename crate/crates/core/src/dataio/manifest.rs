//! Line-delimited JSON case manifests.
//!
//! Line 1 is a [`ManifestHeader`]; every following non-blank line is one
//! [`CaseRecord`]. Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::pgm_dimensions;
use super::BoxRegion;
use crate::error::{Error, Result};

/// Label order used by every manifest.
pub const CLASS_NAMES: [&str; 5] = [
    "pneumothorax",
    "cardiomegaly",
    "consolidation",
    "pleural effusion",
    "atelectasis",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub split: Split,
    pub classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub id: String,
    pub image: PathBuf,
    /// One flag per entry of [`CLASS_NAMES`].
    pub labels: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxRegion>,
    /// Raw model confidence for the first class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub split: Split,
    pub classes: Vec<String>,
    pub cases: Vec<CaseRecord>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(split: Split, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            split,
            classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            cases: Vec::new(),
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn case(&self, id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.id == id)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn check_record(manifest: &Manifest, rec: &CaseRecord, line: usize) -> Result<()> {
    if rec.id.is_empty() {
        return Err(parse_err(line, "field `id`: must not be empty"));
    }
    if rec.labels.len() != manifest.classes.len() {
        return Err(parse_err(
            line,
            format!(
                "field `labels`: expected {} flags, got {}",
                manifest.classes.len(),
                rec.labels.len()
            ),
        ));
    }
    for (name, v) in [
        ("confidence", rec.confidence),
        ("calibrated", rec.calibrated),
    ] {
        if v.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
            return Err(parse_err(
                line,
                format!("field `{name}`: must lie in [0, 1]"),
            ));
        }
    }
    let image = manifest.resolve(&rec.image);
    let (h, w) = pgm_dimensions(&image)?;
    if let Some(mask) = &rec.mask {
        let dims = pgm_dimensions(&manifest.resolve(mask))?;
        if dims != (h, w) {
            return Err(parse_err(
                line,
                format!(
                    "field `mask`: {}x{} mask for a {h}x{w} image",
                    dims.0, dims.1
                ),
            ));
        }
    }
    if let Some(b) = rec.boxes.iter().find(|b| !b.fits(h, w)) {
        return Err(parse_err(
            line,
            format!("field `boxes`: {b:?} exceeds the {h}x{w} image"),
        ));
    }
    Ok(())
}

/// Parse and fully validate a manifest, including the referenced files.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header line"))?;
    let header: ManifestHeader =
        serde_json::from_str(htext).map_err(|e| parse_err(hline, format!("header: {e}")))?;
    if header.classes != CLASS_NAMES {
        return Err(parse_err(
            hline,
            format!(
                "field `classes`: expected {CLASS_NAMES:?}, got {:?}",
                header.classes
            ),
        ));
    }
    let mut manifest = Manifest {
        split: header.split,
        classes: header.classes,
        cases: Vec::new(),
        base_dir,
    };
    let mut seen = HashSet::new();
    for (line, raw) in lines {
        let rec: CaseRecord =
            serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(parse_err(line, format!("duplicate case id {:?}", rec.id)));
        }
        check_record(&manifest, &rec, line)?;
        manifest.cases.push(rec);
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let header = ManifestHeader {
        split: manifest.split,
        classes: manifest.classes.clone(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for c in &manifest.cases {
        out.push_str(&serde_json::to_string(c)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
