//! Original-phase objective: similarity preservation between network
//! representations and label supervision, plus quantization to codes.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::data::{sign, HashCodes, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::similarity::{normalize_rows, LabelSimilarity};

/// Row chunk used when a full `rows x rows` matrix would be too large.
const LOSS_CHUNK: usize = 512;

/// Which pair of representations a supervision block compares. `Xl` means
/// rows index image instances and columns index label instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimPair {
    Xl,
    Yl,
    Ll,
    Xx,
    Yy,
}

/// Provides blocks of the five supervision matrices. `None` selects every
/// instance.
pub trait Supervision {
    fn block(&self, pair: SimPair, rows: Option<&[usize]>, cols: Option<&[usize]>) -> Array2<f64>;
}

/// Explicit supervision matrices, one per pair.
#[derive(Debug, Clone)]
pub struct SupervisionMatrices {
    pub xl: Array2<f64>,
    pub yl: Array2<f64>,
    pub ll: Array2<f64>,
    pub xx: Array2<f64>,
    pub yy: Array2<f64>,
}

impl SupervisionMatrices {
    /// Every pair uses the same matrix; the case for paired data sharing one
    /// label set.
    pub fn shared(s: Array2<f64>) -> Self {
        Self {
            xl: s.clone(),
            yl: s.clone(),
            ll: s.clone(),
            xx: s.clone(),
            yy: s,
        }
    }
}

fn select_block(m: &Array2<f64>, rows: Option<&[usize]>, cols: Option<&[usize]>) -> Array2<f64> {
    let r = match rows {
        Some(r) => m.select(Axis(0), r),
        None => m.clone(),
    };
    match cols {
        Some(c) => r.select(Axis(1), c),
        None => r,
    }
}

impl Supervision for SupervisionMatrices {
    fn block(&self, pair: SimPair, rows: Option<&[usize]>, cols: Option<&[usize]>) -> Array2<f64> {
        let m = match pair {
            SimPair::Xl => &self.xl,
            SimPair::Yl => &self.yl,
            SimPair::Ll => &self.ll,
            SimPair::Xx => &self.xx,
            SimPair::Yy => &self.yy,
        };
        select_block(m, rows, cols)
    }
}

/// All pairs derive from one label set, so every block is the same label
/// similarity.
impl Supervision for LabelSimilarity {
    fn block(&self, _pair: SimPair, rows: Option<&[usize]>, cols: Option<&[usize]>) -> Array2<f64> {
        let all: Vec<usize>;
        let cols = match cols {
            Some(c) => c,
            None => {
                all = (0..self.rows()).collect();
                &all
            }
        };
        match rows {
            Some(r) => LabelSimilarity::block(self, r, self, cols),
            None => self.against(self, cols),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginalWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `false` removes the inter-modality term (ablation).
    pub inter: bool,
}

impl OriginalWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            inter: true,
        }
    }
}

/// Network outputs over the training set, instance-per-row.
#[derive(Debug, Clone, Copy)]
pub struct Representations<'a> {
    pub f: ArrayView2<'a, f64>,
    pub g: ArrayView2<'a, f64>,
    pub h: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginalLoss {
    pub inter: f64,
    pub intra: f64,
    pub quan: f64,
    pub total: f64,
}

fn frobenius_gap(s: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>) -> Result<f64> {
    if s.dim() != q.dim() {
        return Err(Error::shape("similarity gap", format!("{:?}", s.dim()), format!("{:?}", q.dim())));
    }
    Ok(Zip::from(s).and(q).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b)))
}

/// `||S_xl - Q_xl||^2 + alpha ||S_yl - Q_yl||^2`.
pub fn inter_modality_loss(
    s_xl: &SimilarityMatrix,
    q_xl: &SimilarityMatrix,
    s_yl: &SimilarityMatrix,
    q_yl: &SimilarityMatrix,
    alpha: f64,
) -> Result<f64> {
    Ok(frobenius_gap(s_xl.view(), q_xl.view())? + alpha * frobenius_gap(s_yl.view(), q_yl.view())?)
}

/// Sum of the label, image and text intra-modality gaps.
pub fn intra_modality_loss(
    s_ll: &SimilarityMatrix,
    q_ll: &SimilarityMatrix,
    s_xx: &SimilarityMatrix,
    q_xx: &SimilarityMatrix,
    s_yy: &SimilarityMatrix,
    q_yy: &SimilarityMatrix,
) -> Result<f64> {
    Ok(frobenius_gap(s_ll.view(), q_ll.view())?
        + frobenius_gap(s_xx.view(), q_xx.view())?
        + frobenius_gap(s_yy.view(), q_yy.view())?)
}

fn code_gap(x: ArrayView2<'_, f64>, b: &HashCodes) -> Result<f64> {
    if x.dim() != b.view().dim() {
        return Err(Error::shape(
            "quantization",
            format!("{:?}", b.view().dim()),
            format!("{:?}", x.dim()),
        ));
    }
    Ok(Zip::from(x).and(b.view()).fold(0.0, |acc, &v, &c| {
        let d = v - f64::from(c);
        acc + d * d
    }))
}

/// `||F - Bx||^2 + ||G - By||^2 + (||H - Bx||^2 + ||H - By||^2) / 2`.
pub fn quantization_loss_original(reps: Representations<'_>, bx: &HashCodes, by: &HashCodes) -> Result<f64> {
    Ok(code_gap(reps.f, bx)?
        + code_gap(reps.g, by)?
        + 0.5 * (code_gap(reps.h, bx)? + code_gap(reps.h, by)?))
}

pub fn total_original_loss(inter: f64, intra: f64, quan: f64, beta: f64, gamma: f64) -> f64 {
    inter + beta * intra + gamma * quan
}

/// `sum (S - relu(cos(U_i, V_j)))^2` over all pairs, evaluated in row
/// chunks of `u`.
fn pair_loss(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, sup: &dyn Supervision, pair: SimPair) -> Result<f64> {
    let vn = normalize_rows(v, "representation")?;
    let mut total = 0.0;
    let rows: Vec<usize> = (0..u.nrows()).collect();
    for chunk in rows.chunks(LOSS_CHUNK) {
        let un = normalize_rows(u.slice(s![chunk[0]..chunk[0] + chunk.len(), ..]), "representation")?;
        let q = un.dot(&vn.t()).mapv(|c| c.max(0.0));
        let s = sup.block(pair, Some(chunk), None);
        total += frobenius_gap(s.view(), q.view())?;
    }
    Ok(total)
}

/// Every component of the original objective at the given representations
/// and codes.
pub fn original_loss(
    reps: Representations<'_>,
    bx: &HashCodes,
    by: &HashCodes,
    sup: &dyn Supervision,
    w: OriginalWeights,
) -> Result<OriginalLoss> {
    check_reps(reps)?;
    let inter = if w.inter {
        pair_loss(reps.f, reps.h, sup, SimPair::Xl)? + w.alpha * pair_loss(reps.g, reps.h, sup, SimPair::Yl)?
    } else {
        0.0
    };
    let intra = pair_loss(reps.h, reps.h, sup, SimPair::Ll)?
        + pair_loss(reps.f, reps.f, sup, SimPair::Xx)?
        + pair_loss(reps.g, reps.g, sup, SimPair::Yy)?;
    let quan = quantization_loss_original(reps, bx, by)?;
    Ok(OriginalLoss {
        inter,
        intra,
        quan,
        total: total_original_loss(inter, intra, quan, w.beta, w.gamma),
    })
}

fn check_reps(reps: Representations<'_>) -> Result<()> {
    if reps.f.dim() != reps.h.dim() || reps.g.dim() != reps.h.dim() {
        return Err(Error::shape(
            "representations",
            format!("{:?}", reps.h.dim()),
            format!("F {:?}, G {:?}", reps.f.dim(), reps.g.dim()),
        ));
    }
    Ok(())
}

/// Gradient of `sum_ij (S_ij - relu(cos(U_i, V_j)))^2`. Pairs with negative
/// cosine sit in the clamped region and contribute nothing.
struct PairGrad {
    grad_u: Option<Array2<f64>>,
    grad_v: Option<Array2<f64>>,
}

fn pair_grad(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
    want_u: bool,
    want_v: bool,
) -> Result<PairGrad> {
    if s.dim() != (u.nrows(), v.nrows()) {
        return Err(Error::shape(
            "supervision block",
            format!("{:?}", (u.nrows(), v.nrows())),
            format!("{:?}", s.dim()),
        ));
    }
    let u_norm: Vec<f64> = u.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let v_norm: Vec<f64> = v.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(i) = u_norm.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm { context: "representation", index: i });
    }
    if let Some(j) = v_norm.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm { context: "representation", index: j });
    }
    let un = &u / &ndarray::Array1::from(u_norm.clone()).insert_axis(Axis(1));
    let vn = &v / &ndarray::Array1::from(v_norm.clone()).insert_axis(Axis(1));
    let cos = un.dot(&vn.t());
    // dL/dcos, zero where the clamp is active
    let mut r = Array2::zeros(cos.dim());
    Zip::from(&mut r).and(&cos).and(s).for_each(|r, &c, &t| {
        if c >= 0.0 {
            *r = 2.0 * (c - t);
        }
    });
    let rc = &r * &cos;

    // d cos(u, v) / dv = (u_hat - cos v_hat) / |v|
    let grad_v = want_v.then(|| {
        let mut g = r.t().dot(&un);
        let scale = rc.sum_axis(Axis(0));
        for (j, mut row) in g.outer_iter_mut().enumerate() {
            row.scaled_add(-scale[j], &vn.row(j));
            row /= v_norm[j];
        }
        g
    });
    let grad_u = want_u.then(|| {
        let mut g = r.dot(&vn);
        let scale = rc.sum_axis(Axis(1));
        for (i, mut row) in g.outer_iter_mut().enumerate() {
            row.scaled_add(-scale[i], &un.row(i));
            row /= u_norm[i];
        }
        g
    });
    Ok(PairGrad { grad_u, grad_v })
}

/// Which network output a gradient is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Label,
    Image,
    Text,
}

/// Gradient of the full original objective with respect to `rows` of one
/// network's output, with every other row held at its current value.
///
/// Terms where the output appears on both sides (intra-modality) are
/// differentiated through both arguments.
pub fn output_grad_rows(
    output: Output,
    rows: &[usize],
    reps: Representations<'_>,
    bx: &HashCodes,
    by: &HashCodes,
    sup: &dyn Supervision,
    w: OriginalWeights,
) -> Result<Array2<f64>> {
    check_reps(reps)?;
    let (own, own_pair) = match output {
        Output::Label => (reps.h, SimPair::Ll),
        Output::Image => (reps.f, SimPair::Xx),
        Output::Text => (reps.g, SimPair::Yy),
    };
    let batch = own.select(Axis(0), rows);
    let mut grad = Array2::zeros(batch.dim());

    if w.inter {
        match output {
            Output::Label => {
                let s = sup.block(SimPair::Xl, None, Some(rows));
                let g = pair_grad(reps.f, batch.view(), s.view(), false, true)?;
                grad += &g.grad_v.unwrap();
                if w.alpha != 0.0 {
                    let s = sup.block(SimPair::Yl, None, Some(rows));
                    let g = pair_grad(reps.g, batch.view(), s.view(), false, true)?;
                    grad.scaled_add(w.alpha, &g.grad_v.unwrap());
                }
            }
            Output::Image => {
                let s = sup.block(SimPair::Xl, Some(rows), None);
                let g = pair_grad(batch.view(), reps.h, s.view(), true, false)?;
                grad += &g.grad_u.unwrap();
            }
            Output::Text => {
                if w.alpha != 0.0 {
                    let s = sup.block(SimPair::Yl, Some(rows), None);
                    let g = pair_grad(batch.view(), reps.h, s.view(), true, false)?;
                    grad.scaled_add(w.alpha, &g.grad_u.unwrap());
                }
            }
        }
    }

    if w.beta != 0.0 {
        let s_col = sup.block(own_pair, None, Some(rows));
        let as_col = pair_grad(own, batch.view(), s_col.view(), false, true)?;
        grad.scaled_add(w.beta, &as_col.grad_v.unwrap());
        let s_row = sup.block(own_pair, Some(rows), None);
        let as_row = pair_grad(batch.view(), own, s_row.view(), true, false)?;
        grad.scaled_add(w.beta, &as_row.grad_u.unwrap());
    }

    let bx_rows = bx.select(rows).to_f64();
    let by_rows = by.select(rows).to_f64();
    match output {
        Output::Label => {
            grad.scaled_add(w.gamma, &(&batch - &bx_rows));
            grad.scaled_add(w.gamma, &(&batch - &by_rows));
        }
        Output::Image => grad.scaled_add(2.0 * w.gamma, &(&batch - &bx_rows)),
        Output::Text => grad.scaled_add(2.0 * w.gamma, &(&batch - &by_rows)),
    }
    Ok(grad)
}

fn all_rows(reps: Representations<'_>) -> Vec<usize> {
    (0..reps.h.nrows()).collect()
}

/// Gradient of the original objective with respect to the LabelNet output.
pub fn grad_labelnet_output(
    reps: Representations<'_>,
    bx: &HashCodes,
    by: &HashCodes,
    sup: &dyn Supervision,
    w: OriginalWeights,
) -> Result<Array2<f64>> {
    output_grad_rows(Output::Label, &all_rows(reps), reps, bx, by, sup, w)
}

/// Gradient of the original objective with respect to the ImgNet output.
pub fn grad_imgnet_output(
    reps: Representations<'_>,
    bx: &HashCodes,
    by: &HashCodes,
    sup: &dyn Supervision,
    w: OriginalWeights,
) -> Result<Array2<f64>> {
    output_grad_rows(Output::Image, &all_rows(reps), reps, bx, by, sup, w)
}

/// Gradient of the original objective with respect to the TxtNet output.
pub fn grad_txtnet_output(
    reps: Representations<'_>,
    bx: &HashCodes,
    by: &HashCodes,
    sup: &dyn Supervision,
    w: OriginalWeights,
) -> Result<Array2<f64>> {
    output_grad_rows(Output::Text, &all_rows(reps), reps, bx, by, sup, w)
}

/// Closed-form code update `sign(2 gamma X + gamma H)`, minimizing
/// `gamma ||X - B||^2 + gamma/2 ||H - B||^2` over sign matrices.
pub fn update_codes_original(x: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>, gamma: f64) -> Result<HashCodes> {
    if x.dim() != h.dim() {
        return Err(Error::shape("code update", format!("{:?}", h.dim()), format!("{:?}", x.dim())));
    }
    let mut values = Array2::zeros(x.dim());
    Zip::from(&mut values)
        .and(x)
        .and(h)
        .for_each(|b, &xv, &hv| *b = sign(2.0 * gamma * xv + gamma * hv));
    HashCodes::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SimilarityKind;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sim(m: Array2<f64>, kind: SimilarityKind) -> SimilarityMatrix {
        SimilarityMatrix::new(m, kind).unwrap()
    }

    #[test]
    fn inter_loss_examples() {
        let s = sim(array![[1.0, 0.0], [0.0, 1.0]], SimilarityKind::MultiLabel);
        let q = sim(array![[0.5, 0.0], [0.0, 0.5]], SimilarityKind::Representation);
        assert_abs_diff_eq!(inter_modality_loss(&s, &q, &s, &q, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inter_modality_loss(&s, &s, &s, &q, 0.0).unwrap(), 0.0);
        let s_rep = sim(s.view().to_owned(), SimilarityKind::Representation);
        assert_eq!(inter_modality_loss(&s, &s_rep, &s, &s_rep, 3.0).unwrap(), 0.0);
        let wide = sim(Array2::zeros((2, 3)), SimilarityKind::Representation);
        assert!(inter_modality_loss(&s, &wide, &s, &q, 1.0).is_err());
    }

    #[test]
    fn intra_loss_single_entry_gap() {
        let s = sim(array![[1.0, 0.2], [0.2, 1.0]], SimilarityKind::MultiLabel);
        let q = sim(array![[1.0, 0.2], [0.2, 1.0]], SimilarityKind::Representation);
        let q_off = sim(array![[1.0, 0.5], [0.2, 1.0]], SimilarityKind::Representation);
        assert_eq!(intra_modality_loss(&s, &q, &s, &q, &s, &q).unwrap(), 0.0);
        assert_abs_diff_eq!(intra_modality_loss(&s, &q_off, &s, &q, &s, &q).unwrap(), 0.09, epsilon = 1e-15);
    }

    #[test]
    fn intra_loss_matches_elementwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut mats = Vec::new();
        for _ in 0..6 {
            mats.push(Array2::from_shape_simple_fn((3, 3), || rng.gen::<f64>()));
        }
        let mut oracle = 0.0;
        for p in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    oracle += (mats[2 * p][[i, j]] - mats[2 * p + 1][[i, j]]).powi(2);
                }
            }
        }
        let s: Vec<_> = mats.into_iter().map(|m| sim(m, SimilarityKind::Representation)).collect();
        let got = intra_modality_loss(&s[0], &s[1], &s[2], &s[3], &s[4], &s[5]).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-12);
    }

    #[test]
    fn quantization_examples() {
        let b = HashCodes::new(array![[1, -1], [-1, 1]]).unwrap();
        let exact = b.to_f64();
        let reps = Representations { f: exact.view(), g: exact.view(), h: exact.view() };
        assert_eq!(quantization_loss_original(reps, &b, &b).unwrap(), 0.0);
        let mut f = exact.clone();
        f[[1, 0]] += 0.1;
        let reps = Representations { f: f.view(), g: exact.view(), h: exact.view() };
        assert_abs_diff_eq!(quantization_loss_original(reps, &b, &b).unwrap(), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn total_is_weighted_sum() {
        assert_eq!(total_original_loss(2.0, 3.0, 5.0, 0.0, 0.0), 2.0);
        assert_eq!(total_original_loss(2.0, 3.0, 5.0, 10.0, 0.5), 34.5);
    }

    #[test]
    fn code_update_tie_and_sign() {
        let f = array![[0.5, -0.25], [0.1, 0.3]];
        let h = array![[0.2, 0.5], [0.7, 0.1]];
        let b = update_codes_original(f.view(), h.view(), 1.0).unwrap();
        assert_eq!(b.view(), array![[1, 1], [1, 1]]);
        let f = array![[-1.0]];
        let h = array![[-2.0]];
        assert_eq!(update_codes_original(f.view(), h.view(), 0.7).unwrap().view(), array![[-1]]);
        let f = array![[0.5]];
        let h = array![[-1.0]];
        assert_eq!(update_codes_original(f.view(), h.view(), 2.0).unwrap().view(), array![[1]]);
    }

    #[test]
    fn zero_gradient_when_everything_is_clamped() {
        // F and G point away from H, S = 0, H equals both codes
        let h = array![[1.0, 1.0], [1.0, -1.0]];
        let f = -&h;
        let b = HashCodes::new(array![[1, 1], [1, -1]]).unwrap();
        let reps = Representations { f: f.view(), g: f.view(), h: h.view() };
        let mut s = Array2::zeros((2, 2));
        // cos(H_0, H_1) = 0 lies on the active side; keep the diagonal exact
        s[[0, 0]] = 1.0;
        s[[1, 1]] = 1.0;
        let sup = SupervisionMatrices::shared(s);
        let g = grad_labelnet_output(reps, &b, &b, &sup, OriginalWeights::new(1.0, 1.0, 1.0)).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15), "{g}");
    }

    #[test]
    fn gamma_only_label_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Array2::from_shape_simple_fn((3, 4), || rng.gen_range(-1.0..1.0));
        let f = Array2::from_shape_simple_fn((3, 4), || rng.gen_range(-1.0..1.0));
        let bx = HashCodes::random(3, 4, &mut rng);
        let by = HashCodes::random(3, 4, &mut rng);
        let reps = Representations { f: f.view(), g: f.view(), h: h.view() };
        let sup = SupervisionMatrices::shared(Array2::zeros((3, 3)));
        let w = OriginalWeights { alpha: 0.0, beta: 0.0, gamma: 0.5, inter: false };
        let g = grad_labelnet_output(reps, &bx, &by, &sup, w).unwrap();
        let expected = (&h - &bx.to_f64()) * 0.5 + (&h - &by.to_f64()) * 0.5;
        assert!(g.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
        let g = grad_imgnet_output(reps, &bx, &by, &sup, w).unwrap();
        let expected = (&f - &bx.to_f64()) * 1.0;
        assert!(g.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn zero_norm_representation_is_an_error() {
        let h = array![[0.0, 0.0], [1.0, 0.0]];
        let b = HashCodes::new(array![[1, 1], [1, 1]]).unwrap();
        let reps = Representations { f: h.view(), g: h.view(), h: h.view() };
        let sup = SupervisionMatrices::shared(Array2::zeros((2, 2)));
        let err = grad_labelnet_output(reps, &b, &b, &sup, OriginalWeights::new(1.0, 1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { .. }));
    }
}
