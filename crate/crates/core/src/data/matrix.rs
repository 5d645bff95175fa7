use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Text,
    Label,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Text => "text",
            Modality::Label => "label",
        })
    }
}

/// Dense per-instance features of one modality, one instance per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    modality: Modality,
}

impl FeatureMatrix {
    /// Shape is checked here; finiteness is reported by
    /// [`validate_bundle`](super::validate_bundle) so that a bad file can be
    /// described rather than rejected blindly.
    pub fn new(values: Array2<f64>, modality: Modality) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Data(format!(
                "{modality} features must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self { values, modality })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select(ndarray::Axis(0), indices),
            modality: self.modality,
        }
    }
}

/// Multi-hot class membership, one instance per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    values: Array2<u8>,
}

impl LabelMatrix {
    pub fn new(values: Array2<u8>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Data("label matrix has no classes".into()));
        }
        if let Some(bad) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Data(format!("label entry {bad} is not 0 or 1")));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Data("ragged label rows".into()));
        }
        let flat: Vec<u8> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), classes), flat)
            .map_err(|e| Error::Data(e.to_string()))?;
        Self::new(values)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, u8> {
        self.values.view()
    }

    pub fn has(&self, row: usize, class: usize) -> bool {
        self.values[[row, class]] == 1
    }

    pub fn row_classes(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        self.values
            .row(row)
            .into_iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(c, _)| c)
    }

    pub fn cardinality(&self, row: usize) -> usize {
        self.values.row(row).iter().filter(|&&v| v == 1).count()
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select(ndarray::Axis(0), indices),
        }
    }

    /// Zero-pads (or keeps) the class axis to `classes` columns.
    pub fn pad_classes(&self, classes: usize) -> Result<Self> {
        if classes < self.classes() {
            return Err(Error::shape("pad_classes", format!(">= {}", self.classes()), classes));
        }
        let mut values = Array2::zeros((self.rows(), classes));
        values
            .slice_mut(ndarray::s![.., ..self.classes()])
            .assign(&self.values);
        Ok(Self { values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    MultiLabel,
    SingleLabel,
    Representation,
}

/// Supervision targets or representation similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
    kind: SimilarityKind,
}

impl SimilarityMatrix {
    /// Checks the range invariant of `kind`. The raw dot-product label
    /// reading is not range-checked; see [`SimilarityMatrix::unchecked`].
    pub fn new(values: Array2<f64>, kind: SimilarityKind) -> Result<Self> {
        let ok = match kind {
            SimilarityKind::MultiLabel | SimilarityKind::Representation => {
                values.iter().all(|&v| (0.0..=1.0).contains(&v))
            }
            SimilarityKind::SingleLabel => values.iter().all(|&v| v == 0.0 || v == 1.0),
        };
        if !ok {
            return Err(Error::Data(format!("{kind:?} similarity entry out of range")));
        }
        Ok(Self { values, kind })
    }

    pub(crate) fn unchecked(values: Array2<f64>, kind: SimilarityKind) -> Self {
        Self { values, kind }
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}
