//! Independent reference implementations for the integration tests. These
//! use plain loops over `Vec`s and never call the library's loss code.

#![allow(dead_code)]

pub mod checks;

use lifelong_hash::data::HashCodes;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn codes_mat(b: &HashCodes) -> Mat {
    b.view().outer_iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect()
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Cosine between label indicator vectors, clamped to [0, 1].
pub fn multi_label_sim(l1: &[Vec<u8>], l2: &[Vec<u8>]) -> Mat {
    let f = |v: &Vec<u8>| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    l1.iter()
        .map(|a| l2.iter().map(|b| cos(&f(a), &f(b)).clamp(0.0, 1.0)).collect())
        .collect()
}

pub fn random_labels(rows: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    (0..rows)
        .map(|_| {
            let mut row = vec![0u8; classes];
            row[rng.gen_range(0..classes)] = 1;
            for c in row.iter_mut() {
                if rng.gen_bool(0.3) {
                    *c = 1;
                }
            }
            row
        })
        .collect()
}

/// `sum_ij (S_ij - max(0, cos(U_i, V_j)))^2`
fn pair_term(u: &Mat, v: &Mat, s: &Mat) -> f64 {
    let mut total = 0.0;
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            let d = s[i][j] - cos(ui, vj).max(0.0);
            total += d * d;
        }
    }
    total
}

fn gap(x: &Mat, b: &Mat) -> f64 {
    x.iter()
        .zip(b)
        .flat_map(|(r, q)| r.iter().zip(q).map(|(a, c)| (a - c) * (a - c)))
        .sum()
}

pub struct OriginalInstance {
    pub h: Mat,
    pub f: Mat,
    pub g: Mat,
    pub bx: Mat,
    pub by: Mat,
    pub s: Mat,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub inter: bool,
}

/// Full original objective by direct evaluation.
pub fn original_objective(p: &OriginalInstance) -> f64 {
    let inter = if p.inter {
        pair_term(&p.f, &p.h, &p.s) + p.alpha * pair_term(&p.g, &p.h, &p.s)
    } else {
        0.0
    };
    let intra = pair_term(&p.h, &p.h, &p.s) + pair_term(&p.f, &p.f, &p.s) + pair_term(&p.g, &p.g, &p.s);
    let quan = gap(&p.f, &p.bx) + gap(&p.g, &p.by) + 0.5 * (gap(&p.h, &p.bx) + gap(&p.h, &p.by));
    inter + p.beta * intra + p.gamma * quan
}

/// Smallest |cos| over every pair the objective touches; finite
/// differences are meaningless next to the clamp's kink.
pub fn min_abs_cos(mats: &[&Mat]) -> f64 {
    let mut best = f64::INFINITY;
    for u in mats {
        for v in mats {
            for a in u.iter() {
                for b in v.iter() {
                    best = best.min(cos(a, b).abs());
                }
            }
        }
    }
    best
}

pub struct LifelongInstance {
    pub b_old: Mat,
    pub b_new: Mat,
    /// Network output over the sample; rows `a1..` are the incremental ones.
    pub out: Mat,
    pub a1: usize,
    pub sample_map: Vec<usize>,
    pub s_to: Mat,
    pub s_ti: Mat,
    pub k: f64,
    pub lambda: f64,
    pub mu: f64,
}

/// One modality's lifelong objective by direct evaluation.
pub fn lifelong_objective(p: &LifelongInstance) -> f64 {
    let fit = |b: &Mat, s: &Mat| -> f64 {
        let mut t = 0.0;
        for (i, bi) in b.iter().enumerate() {
            for (j, aj) in p.out.iter().enumerate() {
                let d = dot(bi, aj) - p.k * s[i][j];
                t += d * d;
            }
        }
        t
    };
    let mut quan = 0.0;
    let bits = p.out[0].len();
    let mut sums = vec![0.0; bits];
    for (r, &col) in p.sample_map.iter().enumerate() {
        let row = &p.out[p.a1 + r];
        for b in 0..bits {
            quan += (p.b_new[col][b] - row[b]).powi(2);
            sums[b] += row[b];
        }
    }
    fit(&p.b_old, &p.s_to) + fit(&p.b_new, &p.s_ti) + p.lambda * quan + p.mu * dot(&sums, &sums)
}

/// Central differences with step `eps` of `f` at `x`.
pub fn finite_difference(x: &Array2<f64>, eps: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut grad = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + eps;
        let up = f(&probe);
        probe[idx] = orig - eps;
        let down = f(&probe);
        probe[idx] = orig;
        grad[idx] = (up - down) / (2.0 * eps);
    }
    grad
}

/// `||a - b|| / max(||b||, 1e-8)`
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

/// Every ±1 assignment of `len` entries, in counting order.
pub fn all_signs(len: usize) -> impl Iterator<Item = Vec<f64>> {
    (0u64..1 << len).map(move |mask| (0..len).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
}

/// `gamma ||X - B||^2 + gamma/2 ||H - B||^2`
pub fn code_update_objective(x: &Mat, h: &Mat, b: &Mat, gamma: f64) -> f64 {
    gamma * gap(x, b) + 0.5 * gamma * gap(h, b)
}

/// `||B A^T||^2 + <B, P>` with row-major B (`n x k`), A (`a x k`), P (`n x k`).
pub fn dcc_objective(b: &Mat, a: &Mat, p: &Mat) -> f64 {
    let mut total = 0.0;
    for (bi, pi) in b.iter().zip(p) {
        for aj in a {
            total += dot(bi, aj).powi(2);
        }
        total += dot(bi, pi);
    }
    total
}
