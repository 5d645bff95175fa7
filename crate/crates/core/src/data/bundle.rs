//! On-disk dataset bundle.
//!
//! A bundle directory holds `manifest.json`, `img.f32` and `txt.f32`
//! (row-major little-endian `f32`), and `labels.u8` (one byte per entry,
//! row-major, values 0/1).

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, LabelMatrix, Modality};
use crate::error::{Error, Result};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema_version: u32,
    pub count: usize,
    pub d_img: usize,
    pub d_txt: usize,
    pub classes: usize,
    pub class_names: Vec<String>,
    /// Carried for compatibility with other tools; not read here.
    #[serde(default)]
    pub k: Option<usize>,
    /// Echo of the generator configuration, when synthetic.
    #[serde(default)]
    pub generator: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub img: FeatureMatrix,
    pub txt: FeatureMatrix,
    pub labels: LabelMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RowCountMismatch { image: usize, text: usize, labels: usize },
    NonFinite { modality: Modality, count: usize },
    UnlabeledInstance { row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowCountMismatch { image, text, labels } => write!(
                f,
                "row count mismatch (image {image}, text {text}, labels {labels})"
            ),
            Violation::NonFinite { modality, count } => {
                write!(f, "non-finite entries ({count} in {modality} features)")
            }
            Violation::UnlabeledInstance { row } => write!(f, "unlabeled instance (row {row})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_bundle(img: &FeatureMatrix, txt: &FeatureMatrix, labels: &LabelMatrix) -> ValidationReport {
    let mut violations = Vec::new();
    if img.rows() != txt.rows() || img.rows() != labels.rows() {
        violations.push(Violation::RowCountMismatch {
            image: img.rows(),
            text: txt.rows(),
            labels: labels.rows(),
        });
    }
    for m in [img, txt] {
        let count = m.view().iter().filter(|v| !v.is_finite()).count();
        if count > 0 {
            violations.push(Violation::NonFinite {
                modality: m.modality(),
                count,
            });
        }
    }
    violations.extend(
        (0..labels.rows())
            .filter(|&r| labels.cardinality(r) == 0)
            .map(|row| Violation::UnlabeledInstance { row }),
    );
    ValidationReport { violations }
}

impl Bundle {
    pub fn new(img: FeatureMatrix, txt: FeatureMatrix, labels: LabelMatrix, generator: Option<serde_json::Value>) -> Result<Self> {
        let report = validate_bundle(&img, &txt, &labels);
        if let Some(v) = report.violations.first() {
            return Err(Error::Data(v.to_string()));
        }
        let manifest = BundleManifest {
            schema_version: BUNDLE_SCHEMA_VERSION,
            count: img.rows(),
            d_img: img.dim(),
            d_txt: txt.dim(),
            classes: labels.classes(),
            class_names: (0..labels.classes()).map(|c| format!("class_{c}")).collect(),
            k: None,
            generator,
        };
        Ok(Self {
            manifest,
            img,
            txt,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::json(dir, e))?;
        write(&dir.join("manifest.json"), manifest.as_bytes())?;
        write(&dir.join("img.f32"), &f32_bytes(self.img.values()))?;
        write(&dir.join("txt.f32"), &f32_bytes(self.txt.values()))?;
        let labels: Vec<u8> = self.labels.view().iter().copied().collect();
        write(&dir.join("labels.u8"), &labels)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if manifest.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported bundle schema version {}",
                manifest.schema_version
            )));
        }
        if manifest.class_names.len() != manifest.classes {
            return Err(Error::Data("class_names length differs from classes".into()));
        }
        let img = read_f32(&dir.join("img.f32"), manifest.count, manifest.d_img)?;
        let txt = read_f32(&dir.join("txt.f32"), manifest.count, manifest.d_txt)?;
        let path = dir.join("labels.u8");
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let labels = Array2::from_shape_vec((manifest.count, manifest.classes), raw)
            .map_err(|_| Error::Data(format!("{} does not hold {}x{} bytes", path.display(), manifest.count, manifest.classes)))?;
        let labels = LabelMatrix::new(labels)?;
        let img = FeatureMatrix::new(img, Modality::Image)?;
        let txt = FeatureMatrix::new(txt, Modality::Text)?;
        let report = validate_bundle(&img, &txt, &labels);
        if !report.is_ok() {
            let reasons: Vec<String> = report.violations.iter().take(5).map(|v| v.to_string()).collect();
            return Err(Error::Data(reasons.join("; ")));
        }
        Ok(Self {
            manifest,
            img,
            txt,
            labels,
        })
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32_bytes(values: &Array2<f64>) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn read_f32(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() != rows * cols * 4 {
        return Err(Error::Data(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            raw.len(),
            rows * cols * 4
        )));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn img(rows: usize) -> FeatureMatrix {
        FeatureMatrix::new(Array2::ones((rows, 2)), Modality::Image).unwrap()
    }

    fn txt(rows: usize) -> FeatureMatrix {
        FeatureMatrix::new(Array2::ones((rows, 3)), Modality::Text).unwrap()
    }

    #[test]
    fn clean_bundle_is_ok() {
        let labels = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        assert!(validate_bundle(&img(3), &txt(3), &labels).is_ok());
    }

    #[test]
    fn reports_row_mismatch() {
        let labels = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        let report = validate_bundle(&img(3), &txt(2), &labels);
        assert!(report.violations[0].to_string().starts_with("row count mismatch"));
    }

    #[test]
    fn reports_unlabeled_and_non_finite() {
        let labels = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 0]]).unwrap();
        let bad = FeatureMatrix::new(array![[1.0, f64::NAN], [0.0, 1.0]], Modality::Image).unwrap();
        let report = validate_bundle(&bad, &txt(2), &labels);
        let text: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        assert!(text.iter().any(|t| t.starts_with("non-finite")));
        assert!(text.iter().any(|t| t.starts_with("unlabeled instance")));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let img = FeatureMatrix::new(array![[0.5, -1.25], [2.0, 0.0]], Modality::Image).unwrap();
        let bundle = Bundle::new(img, txt(2), labels, None).unwrap();
        bundle.save(dir.path()).unwrap();
        assert_eq!(Bundle::load(dir.path()).unwrap(), bundle);
        assert_eq!(fs::metadata(dir.path().join("img.f32")).unwrap().len(), 16);
        assert_eq!(fs::read(dir.path().join("labels.u8")).unwrap(), vec![1, 0, 0, 1]);
    }

    #[test]
    fn load_rejects_truncated_features() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        Bundle::new(img(2), txt(2), labels, None).unwrap().save(dir.path()).unwrap();
        fs::write(dir.path().join("txt.f32"), [0u8; 7]).unwrap();
        assert!(matches!(Bundle::load(dir.path()), Err(Error::Data(_))));
    }
}
