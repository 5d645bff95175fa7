//! Label-derived supervision and representation similarities.

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::{ContinuousCodes, LabelMatrix, SimilarityKind, SimilarityMatrix, SimilarityMode};
use crate::error::{Error, Result};

/// Scales every row to unit L2 norm. A zero row is an error.
pub fn normalize_rows(m: ArrayView2<'_, f64>, context: &'static str) -> Result<Array2<f64>> {
    let mut out = m.to_owned();
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm { context, index: i });
        }
        row /= norm;
    }
    Ok(out)
}

/// Row-wise cosine between `u` and `v` (both instance-per-row).
pub fn cosine_matrix(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if u.ncols() != v.ncols() {
        return Err(Error::shape("cosine_matrix", u.ncols(), v.ncols()));
    }
    let un = normalize_rows(u, "cosine lhs")?;
    let vn = normalize_rows(v, "cosine rhs")?;
    Ok(un.dot(&vn.t()))
}

fn check_classes(l1: &LabelMatrix, l2: &LabelMatrix) -> Result<()> {
    if l1.classes() != l2.classes() {
        return Err(Error::shape("label similarity", l1.classes(), l2.classes()));
    }
    Ok(())
}

pub fn multi_label_similarity(l1: &LabelMatrix, l2: &LabelMatrix) -> Result<SimilarityMatrix> {
    check_classes(l1, l2)?;
    let s = cosine_matrix(l1.as_f64().view(), l2.as_f64().view())?;
    // cosine of non-negative vectors can only leave [0, 1] by rounding
    Ok(SimilarityMatrix::unchecked(s.mapv(|v| v.clamp(0.0, 1.0)), SimilarityKind::MultiLabel))
}

pub fn single_label_similarity(l1: &LabelMatrix, l2: &LabelMatrix) -> Result<SimilarityMatrix> {
    check_classes(l1, l2)?;
    let dots = l1.as_f64().dot(&l2.as_f64().t());
    Ok(SimilarityMatrix::unchecked(
        dots.mapv(|d| if d > 0.0 { 1.0 } else { 0.0 }),
        SimilarityKind::SingleLabel,
    ))
}

/// `max(0, cos(U_i, V_j))` for every pair of rows.
pub fn representation_similarity(u: &ContinuousCodes, v: &ContinuousCodes) -> Result<SimilarityMatrix> {
    let c = cosine_matrix(u.view(), v.view())?;
    Ok(SimilarityMatrix::unchecked(
        c.mapv(|x| x.clamp(0.0, 1.0)),
        SimilarityKind::Representation,
    ))
}

/// Label similarity evaluated block by block, so that supervision over
/// large sets never has to be materialized in full.
#[derive(Debug, Clone)]
pub struct LabelSimilarity {
    mode: SimilarityMode,
    prepared: Array2<f64>,
}

impl LabelSimilarity {
    pub fn new(labels: &LabelMatrix, mode: SimilarityMode) -> Result<Self> {
        let raw = labels.as_f64();
        let prepared = match mode {
            SimilarityMode::MultiLabel => normalize_rows(raw.view(), "label row")?,
            SimilarityMode::SingleLabel | SimilarityMode::RawDot => raw,
        };
        Ok(Self { mode, prepared })
    }

    pub fn rows(&self) -> usize {
        self.prepared.nrows()
    }

    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            mode: self.mode,
            prepared: self.prepared.select(Axis(0), rows),
        }
    }

    /// Similarity between `rows` of `self` and `cols` of `other`.
    pub fn block(&self, rows: &[usize], other: &LabelSimilarity, cols: &[usize]) -> Array2<f64> {
        let a = self.prepared.select(Axis(0), rows);
        let b = other.prepared.select(Axis(0), cols);
        self.finish(a.dot(&b.t()))
    }

    /// Similarity between all rows of `self` and `cols` of `other`.
    pub fn against(&self, other: &LabelSimilarity, cols: &[usize]) -> Array2<f64> {
        let b = other.prepared.select(Axis(0), cols);
        self.finish(self.prepared.dot(&b.t()))
    }

    pub fn full(&self, other: &LabelSimilarity) -> Array2<f64> {
        self.finish(self.prepared.dot(&other.prepared.t()))
    }

    fn finish(&self, dots: Array2<f64>) -> Array2<f64> {
        match self.mode {
            SimilarityMode::MultiLabel => dots.mapv(|v| v.clamp(0.0, 1.0)),
            SimilarityMode::SingleLabel => dots.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            SimilarityMode::RawDot => dots,
        }
    }
}
