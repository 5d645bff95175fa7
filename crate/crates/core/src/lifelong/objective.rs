//! Lifelong objective over frozen original codes and learnable incremental
//! codes.
//!
//! Row-major shapes: original codes `m x k`, incremental codes `n x k`,
//! fitted outputs `A` are `a x k`, supervision `S_to` is `m x a` and `S_ti`
//! is `n x a`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::data::{sign, HashCodes};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifelongWeights {
    pub k: f64,
    pub lambda_: f64,
    pub mu: f64,
    /// `false` drops the original-similarity term (ablation).
    pub old: bool,
    /// `false` drops the incremental-similarity term (ablation).
    pub new: bool,
    /// `false` stops the similarity-term gradient at the fitted outputs.
    pub fit_gradient: bool,
}

impl LifelongWeights {
    pub fn new(k: usize, lambda_: f64, mu: f64) -> Self {
        Self {
            k: k as f64,
            lambda_,
            mu,
            old: true,
            new: true,
            fit_gradient: true,
        }
    }
}

/// One modality's view of the lifelong problem.
#[derive(Debug, Clone, Copy)]
pub struct LifelongSide<'a> {
    /// Frozen original codes, `m x k`.
    pub b_old: &'a HashCodes,
    /// Incremental codes, `n x k`.
    pub b_new: &'a HashCodes,
    /// Fitted continuous codes of the training sample, `a x k`.
    pub a: ArrayView2<'a, f64>,
    /// Network outputs on the sampled incremental items, `a2 x k`.
    pub out_new: ArrayView2<'a, f64>,
    /// Row of `b_new` for each row of `out_new`.
    pub sample_map: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifelongLoss {
    pub old: f64,
    pub new: f64,
    pub quan: f64,
    pub balance: f64,
    pub total: f64,
}

fn check_side(side: &LifelongSide<'_>, s_to: ArrayView2<'_, f64>, s_ti: ArrayView2<'_, f64>) -> Result<()> {
    let k = side.a.ncols();
    let a = side.a.nrows();
    if side.b_old.bits() != k || side.b_new.bits() != k || side.out_new.ncols() != k {
        return Err(Error::shape("lifelong code length", k, "mismatched bit counts"));
    }
    if s_to.dim() != (side.b_old.rows(), a) {
        return Err(Error::shape("S_to", format!("{:?}", (side.b_old.rows(), a)), format!("{:?}", s_to.dim())));
    }
    if s_ti.dim() != (side.b_new.rows(), a) {
        return Err(Error::shape("S_ti", format!("{:?}", (side.b_new.rows(), a)), format!("{:?}", s_ti.dim())));
    }
    if side.sample_map.len() != side.out_new.nrows() {
        return Err(Error::shape("sample map", side.out_new.nrows(), side.sample_map.len()));
    }
    if let Some(&bad) = side.sample_map.iter().find(|&&i| i >= side.b_new.rows()) {
        return Err(Error::shape("sample map entry", format!("< {}", side.b_new.rows()), bad));
    }
    Ok(())
}

/// `B A^T - k S` for codes `b` (`rows x k`) against `a` (`cols x k`).
fn residual(b: &HashCodes, a: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>, k: f64) -> Array2<f64> {
    let mut r = b.to_f64().dot(&a.t());
    r.scaled_add(-k, &s);
    r
}

fn sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn side_terms(side: &LifelongSide<'_>, s_to: ArrayView2<'_, f64>, s_ti: ArrayView2<'_, f64>, k: f64) -> (f64, f64, f64, f64) {
    let old = sq(&residual(side.b_old, side.a, s_to, k));
    let new = sq(&residual(side.b_new, side.a, s_ti, k));
    let mut quan = 0.0;
    for (r, &col) in side.sample_map.iter().enumerate() {
        for b in 0..side.out_new.ncols() {
            let d = f64::from(side.b_new.get(col, b)) - side.out_new[[r, b]];
            quan += d * d;
        }
    }
    let sums = side.out_new.sum_axis(Axis(0));
    let balance = sums.dot(&sums);
    (old, new, quan, balance)
}

/// `J_old + J_new + lambda J_quan + mu J_balance`, summed over both
/// modalities. Dropped terms (ablation) are reported as zero.
pub fn lifelong_loss(
    img: LifelongSide<'_>,
    txt: LifelongSide<'_>,
    s_to: ArrayView2<'_, f64>,
    s_ti: ArrayView2<'_, f64>,
    w: LifelongWeights,
) -> Result<LifelongLoss> {
    check_side(&img, s_to, s_ti)?;
    check_side(&txt, s_to, s_ti)?;
    let (o1, n1, q1, b1) = side_terms(&img, s_to, s_ti, w.k);
    let (o2, n2, q2, b2) = side_terms(&txt, s_to, s_ti, w.k);
    let old = if w.old { o1 + o2 } else { 0.0 };
    let new = if w.new { n1 + n2 } else { 0.0 };
    let quan = q1 + q2;
    let balance = b1 + b2;
    Ok(LifelongLoss {
        old,
        new,
        quan,
        balance,
        total: old + new + w.lambda_ * quan + w.mu * balance,
    })
}

/// Gradient of one modality's lifelong objective with respect to the
/// network output over the training sample.
///
/// The output `O` (`a x k`) is both the fitted matrix `A` and, on rows
/// `new_offset..`, the incremental outputs (`F'` or `G'`). `rows` selects
/// which rows of `O` to differentiate; the balance term uses the column
/// sums of the current outputs.
pub fn output_grad_rows(
    rows: &[usize],
    side: LifelongSide<'_>,
    new_offset: usize,
    s_to: ArrayView2<'_, f64>,
    s_ti: ArrayView2<'_, f64>,
    w: LifelongWeights,
) -> Result<Array2<f64>> {
    check_side(&side, s_to, s_ti)?;
    if new_offset + side.out_new.nrows() != side.a.nrows() {
        return Err(Error::shape("incremental offset", side.a.nrows(), new_offset + side.out_new.nrows()));
    }
    let a_rows = side.a.select(Axis(0), rows);
    let mut grad = Array2::zeros(a_rows.dim());
    let similarity_terms = [(w.old, side.b_old, s_to.select(Axis(1), rows)), (w.new, side.b_new, s_ti.select(Axis(1), rows))];
    for (enabled, codes, s) in similarity_terms {
        if !enabled || !w.fit_gradient {
            continue;
        }
        let r = residual(codes, a_rows.view(), s.view(), w.k);
        // d/dA ||B A^T - kS||^2 = 2 (B A^T - kS)^T B
        grad.scaled_add(2.0, &r.t().dot(&codes.to_f64()));
    }
    let sums: Array1<f64> = side.out_new.sum_axis(Axis(0));
    for (g_row, &row) in grad.outer_iter_mut().zip(rows) {
        if row < new_offset {
            continue;
        }
        let col = side.sample_map[row - new_offset];
        let mut g_row = g_row;
        for b in 0..g_row.len() {
            let out = side.a[[row, b]];
            g_row[b] += 2.0 * w.lambda_ * (out - f64::from(side.b_new.get(col, b))) + 2.0 * w.mu * sums[b];
        }
    }
    Ok(grad)
}

/// Full gradient for the image side; ImgNet's output is both `A^x` and `F'`.
pub fn grad_lifelong_imgnet(
    side: LifelongSide<'_>,
    new_offset: usize,
    s_to: ArrayView2<'_, f64>,
    s_ti: ArrayView2<'_, f64>,
    w: LifelongWeights,
) -> Result<Array2<f64>> {
    let rows: Vec<usize> = (0..side.a.nrows()).collect();
    output_grad_rows(&rows, side, new_offset, s_to, s_ti, w)
}

/// Text-side counterpart of [`grad_lifelong_imgnet`].
pub fn grad_lifelong_txtnet(
    side: LifelongSide<'_>,
    new_offset: usize,
    s_to: ArrayView2<'_, f64>,
    s_ti: ArrayView2<'_, f64>,
    w: LifelongWeights,
) -> Result<Array2<f64>> {
    grad_lifelong_imgnet(side, new_offset, s_to, s_ti, w)
}

/// State for one discrete cyclic coordinate descent update of the
/// incremental codes.
#[derive(Debug, Clone)]
pub struct DccWorkspace {
    /// Linear coefficient, `n x k`: `-2k S_ti A - 2 lambda F~'`.
    pub p: Array2<f64>,
    /// Incremental outputs scattered into `n x k`, zero outside sampled rows.
    pub extended: Array2<f64>,
    pub sample_map: Vec<usize>,
}

impl DccWorkspace {
    pub fn new(
        a: ArrayView2<'_, f64>,
        out_new: ArrayView2<'_, f64>,
        sample_map: &[usize],
        s_ti: ArrayView2<'_, f64>,
        k: f64,
        lambda_: f64,
    ) -> Result<Self> {
        let n = s_ti.nrows();
        if s_ti.ncols() != a.nrows() {
            return Err(Error::shape("S_ti", a.nrows(), s_ti.ncols()));
        }
        if out_new.nrows() != sample_map.len() || out_new.ncols() != a.ncols() {
            return Err(Error::shape("incremental outputs", sample_map.len(), out_new.nrows()));
        }
        let mut extended = Array2::zeros((n, a.ncols()));
        for (r, &col) in sample_map.iter().enumerate() {
            if col >= n {
                return Err(Error::shape("sample map entry", format!("< {n}"), col));
            }
            extended.row_mut(col).assign(&out_new.row(r));
        }
        let mut p = s_ti.dot(&a);
        p *= -2.0 * k;
        p.scaled_add(-2.0 * lambda_, &extended);
        Ok(Self {
            p,
            extended,
            sample_map: sample_map.to_vec(),
        })
    }
}

/// `||B A^T||^2 + <B, P>`, the part of the lifelong objective that depends
/// on the incremental codes.
pub fn dcc_objective(b: &HashCodes, a: ArrayView2<'_, f64>, p: ArrayView2<'_, f64>) -> f64 {
    let bf = b.to_f64();
    let ba = bf.dot(&a.t());
    sq(&ba) + Zip::from(&bf).and(p).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// Updates one bit (column of the row-major codes) to its conditional
/// optimum `-sign(2 B_{-r} (A_{-r}^T A_r) + P_r)`.
pub fn dcc_update_bit(b: &mut HashCodes, gram: ArrayView2<'_, f64>, p: ArrayView2<'_, f64>, r: usize) {
    let k = gram.ncols();
    let values = b.values_mut();
    for (mut code, p_row) in values.outer_iter_mut().zip(p.outer_iter()) {
        let mut v = p_row[r];
        for s in 0..k {
            if s != r {
                v += 2.0 * f64::from(code[s]) * gram[[s, r]];
            }
        }
        code[r] = -sign(v);
    }
}

/// `sweeps` full passes over bits `0..k` in order.
pub fn dcc_update(b: &mut HashCodes, a: ArrayView2<'_, f64>, ws: &DccWorkspace, sweeps: usize) -> Result<()> {
    if ws.p.dim() != (b.rows(), b.bits()) || a.ncols() != b.bits() {
        return Err(Error::shape(
            "DCC workspace",
            format!("{:?}", (b.rows(), b.bits())),
            format!("{:?}", ws.p.dim()),
        ));
    }
    let gram = a.t().dot(&a);
    for _ in 0..sweeps {
        for r in 0..b.bits() {
            dcc_update_bit(b, gram.view(), ws.p.view(), r);
        }
    }
    Ok(())
}
