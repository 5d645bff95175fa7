//! Randomized checks shared by the focused tests and the acceptance suite.

#![allow(dead_code)]

use lifelong_hash::data::{HashCodes, Modality};
use lifelong_hash::lifelong::{dcc_update_bit, grad_lifelong_imgnet, grad_lifelong_txtnet, DccWorkspace, LifelongSide, LifelongWeights};
use lifelong_hash::network::NetworkParams;
use lifelong_hash::original::{
    grad_imgnet_output, grad_labelnet_output, grad_txtnet_output, update_codes_original, OriginalWeights, Representations,
    SupervisionMatrices,
};
use ndarray::{s, Array2};
use rand::Rng;

use super::*;

#[derive(Debug, Clone, Copy, Default)]
pub struct Outcome {
    pub instances: usize,
    pub violations: usize,
    /// Largest relative error or objective excess observed.
    pub worst: f64,
}

impl Outcome {
    fn record(&mut self, value: f64, bad: bool) {
        self.instances += 1;
        self.worst = self.worst.max(value);
        self.violations += usize::from(bad);
    }
}

pub const FD_EPS: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Label,
    Image,
    Text,
}

struct Drawn {
    h: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    bx: HashCodes,
    by: HashCodes,
    s: Array2<f64>,
    w: OriginalWeights,
}

fn draw_original(seed: u64) -> Drawn {
    let mut r = rng(seed);
    loop {
        let m = r.gen_range(2..=16);
        let k = r.gen_range(2..=8);
        let labels = random_labels(m, 4, &mut r);
        let s = multi_label_sim(&labels, &labels);
        let h = uniform(m, k, &mut r);
        let f = uniform(m, k, &mut r);
        let g = uniform(m, k, &mut r);
        if min_abs_cos(&[&to_mat(&h), &to_mat(&f), &to_mat(&g)]) < 1e-3 {
            continue;
        }
        let mut w = OriginalWeights::new(r.gen_range(0.1..10.0), r.gen_range(0.1..10.0), r.gen_range(0.1..10.0));
        w.inter = r.gen_bool(0.8);
        return Drawn {
            bx: HashCodes::random(m, k, &mut r),
            by: HashCodes::random(m, k, &mut r),
            s: Array2::from_shape_fn((m, m), |(i, j)| s[i][j]),
            h,
            f,
            g,
            w,
        };
    }
}

fn oracle_at(d: &Drawn, which: Which, x: &Array2<f64>) -> f64 {
    let pick = |own: Which, m: &Array2<f64>| if own == which { to_mat(x) } else { to_mat(m) };
    original_objective(&OriginalInstance {
        h: pick(Which::Label, &d.h),
        f: pick(Which::Image, &d.f),
        g: pick(Which::Text, &d.g),
        bx: codes_mat(&d.bx),
        by: codes_mat(&d.by),
        s: to_mat(&d.s),
        alpha: d.w.alpha,
        beta: d.w.beta,
        gamma: d.w.gamma,
        inter: d.w.inter,
    })
}

/// Output gradients of the original objective against central differences
/// of the loop oracle.
pub fn original_gradient_check(which: Which, instances: usize, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    for t in 0..instances {
        let d = draw_original(seed.wrapping_mul(1_000).wrapping_add(t as u64));
        let reps = Representations { f: d.f.view(), g: d.g.view(), h: d.h.view() };
        let sup = SupervisionMatrices::shared(d.s.clone());
        let (analytic, x) = match which {
            Which::Label => (grad_labelnet_output(reps, &d.bx, &d.by, &sup, d.w).unwrap(), &d.h),
            Which::Image => (grad_imgnet_output(reps, &d.bx, &d.by, &sup, d.w).unwrap(), &d.f),
            Which::Text => (grad_txtnet_output(reps, &d.bx, &d.by, &sup, d.w).unwrap(), &d.g),
        };
        let numeric = finite_difference(x, FD_EPS, |p| oracle_at(&d, which, p));
        let err = relative_error(&analytic, &numeric);
        out.record(err, err.is_nan() || err > FD_TOL);
    }
    out
}

fn sim_block(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: &[Vec<u8>]) -> Array2<f64> {
    let labels = random_labels(rows, 4, r);
    let s = multi_label_sim(&labels, cols);
    Array2::from_shape_fn((rows, cols.len()), |(i, j)| s[i][j])
}

struct LifelongDrawn {
    b_old: HashCodes,
    b_new: HashCodes,
    out: Array2<f64>,
    a1: usize,
    sample_map: Vec<usize>,
    s_to: Array2<f64>,
    s_ti: Array2<f64>,
    w: LifelongWeights,
}

fn draw_lifelong(seed: u64) -> LifelongDrawn {
    let mut r = rng(seed);
    let k = r.gen_range(1..=8);
    let m = r.gen_range(1..=10);
    let n = r.gen_range(1..=8);
    let a1 = r.gen_range(0..=m);
    let a2 = r.gen_range(usize::from(a1 == 0)..=n);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut sample_map = Vec::new();
    for _ in 0..a2 {
        sample_map.push(pool.remove(r.gen_range(0..pool.len())));
    }
    let sample_labels = random_labels(a1 + a2, 4, &mut r);
    LifelongDrawn {
        b_old: HashCodes::random(m, k, &mut r),
        b_new: HashCodes::random(n, k, &mut r),
        out: uniform(a1 + a2, k, &mut r),
        s_to: sim_block(&mut r, m, &sample_labels),
        s_ti: sim_block(&mut r, n, &sample_labels),
        w: LifelongWeights::new(k, r.gen_range(0.1..10.0), r.gen_range(0.1..10.0)),
        a1,
        sample_map,
    }
}

fn lifelong_oracle_at(d: &LifelongDrawn, out: &Array2<f64>) -> f64 {
    lifelong_objective(&LifelongInstance {
        b_old: codes_mat(&d.b_old),
        b_new: codes_mat(&d.b_new),
        out: to_mat(out),
        a1: d.a1,
        sample_map: d.sample_map.clone(),
        s_to: to_mat(&d.s_to),
        s_ti: to_mat(&d.s_ti),
        k: d.w.k,
        lambda: d.w.lambda_,
        mu: d.w.mu,
    })
}

fn lifelong_side<'a>(d: &'a LifelongDrawn, out: &'a Array2<f64>) -> LifelongSide<'a> {
    LifelongSide {
        b_old: &d.b_old,
        b_new: &d.b_new,
        a: out.view(),
        out_new: out.slice(s![d.a1.., ..]),
        sample_map: &d.sample_map,
    }
}

/// Output gradient of one modality's lifelong objective against central
/// differences of the loop oracle.
pub fn lifelong_gradient_check(text: bool, instances: usize, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    for t in 0..instances {
        let d = draw_lifelong(seed.wrapping_mul(1_000).wrapping_add(t as u64));
        let side = lifelong_side(&d, &d.out);
        let grad = if text { grad_lifelong_txtnet } else { grad_lifelong_imgnet };
        let analytic = grad(side, d.a1, d.s_to.view(), d.s_ti.view(), d.w).unwrap();
        let numeric = finite_difference(&d.out, FD_EPS, |p| lifelong_oracle_at(&d, p));
        let err = relative_error(&analytic, &numeric);
        out.record(err, err.is_nan() || err > FD_TOL);
    }
    out
}

/// Parameter gradients through a small tanh network: backward of the
/// analytic output gradient against differences of the oracle objective
/// evaluated on the network's forward output.
pub fn network_chain_check(instances: usize, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    for t in 0..instances {
        let tseed = seed.wrapping_mul(1_000).wrapping_add(t as u64);
        let d = draw_lifelong(tseed);
        let k = d.w.k as usize;
        let mut r = rng(tseed ^ 0x5eed);
        let input = uniform(d.out.nrows(), 5, &mut r);
        let net = NetworkParams::init(&[5, 6, k], Modality::Image, tseed).unwrap();
        let cache = net.forward_cached(input.view()).unwrap();
        let output = cache.output().clone();
        let side = lifelong_side(&d, &output);
        let upstream = grad_lifelong_imgnet(side, d.a1, d.s_to.view(), d.s_ti.view(), d.w).unwrap();
        let grads = net.backward(&cache, upstream.view()).unwrap();
        for (l, layer) in grads.layers.iter().enumerate() {
            let numeric = finite_difference(&net.layers()[l].weights, FD_EPS, |w| {
                let mut probe = net.clone();
                probe.layers_mut()[l].weights.assign(w);
                lifelong_oracle_at(&d, &probe.forward(input.view()).unwrap().into_inner())
            });
            let err = relative_error(&layer.weights, &numeric);
            out.record(err, err.is_nan() || err > FD_TOL);
        }
    }
    out
}

/// Closed-form code update against exhaustive search over all sign
/// matrices, `k <= 3`, `m <= 4`.
pub fn sign_update_check(instances: usize, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    for t in 0..instances {
        let mut r = rng(seed.wrapping_mul(1_000).wrapping_add(t as u64));
        let (m, k) = (r.gen_range(1..=4), r.gen_range(1..=3));
        let x = uniform(m, k, &mut r);
        let h = uniform(m, k, &mut r);
        let gamma = r.gen_range(0.01..10.0);
        let got = codes_mat(&update_codes_original(x.view(), h.view(), gamma).unwrap());
        let (xm, hm) = (to_mat(&x), to_mat(&h));
        let got_value = code_update_objective(&xm, &hm, &got, gamma);
        let best = all_signs(m * k)
            .map(|flat| {
                let b: Mat = flat.chunks(k).map(|c| c.to_vec()).collect();
                code_update_objective(&xm, &hm, &b, gamma)
            })
            .fold(f64::INFINITY, f64::min);
        let excess = got_value - best;
        out.record(excess, excess > 1e-12 * best.abs().max(1.0));
    }
    out
}

/// Each single-bit DCC update against the exhaustive minimum over that
/// bit's column (others fixed), plus monotone non-increase of the
/// objective, `n <= 10`.
pub fn dcc_check(instances: usize, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    for t in 0..instances {
        let mut r = rng(seed.wrapping_mul(1_000).wrapping_add(t as u64));
        let n = r.gen_range(1..=10);
        let k = r.gen_range(1..=6);
        let a2 = r.gen_range(0..=n);
        let a1 = r.gen_range(usize::from(a2 == 0)..=6);
        let a = uniform(a1 + a2, k, &mut r);
        let sample_map: Vec<usize> = (0..a2).collect();
        let labels = random_labels(a1 + a2, 4, &mut r);
        let s_ti = sim_block(&mut r, n, &labels);
        let lambda = r.gen_range(0.1..10.0);
        let ws = DccWorkspace::new(a.view(), a.slice(s![a1.., ..]), &sample_map, s_ti.view(), k as f64, lambda).unwrap();
        let gram = a.t().dot(&a);
        let mut b = HashCodes::random(n, k, &mut r);
        let (am, pm) = (to_mat(&a), to_mat(&ws.p));
        let mut worst_bad = false;
        let mut worst = 0.0f64;
        for bit in 0..k {
            let before = dcc_objective(&codes_mat(&b), &am, &pm);
            dcc_update_bit(&mut b, gram.view(), ws.p.view(), bit);
            let after_codes = codes_mat(&b);
            let after = dcc_objective(&after_codes, &am, &pm);
            let best = all_signs(n)
                .map(|col| {
                    let mut trial = after_codes.clone();
                    for (row, v) in trial.iter_mut().zip(&col) {
                        row[bit] = *v;
                    }
                    dcc_objective(&trial, &am, &pm)
                })
                .fold(f64::INFINITY, f64::min);
            let tol = 1e-9 * best.abs().max(1.0);
            worst = worst.max(after - best).max(after - before);
            worst_bad |= after - best > tol || after - before > tol;
        }
        out.record(worst, worst_bad);
    }
    out
}

/// Popcount Hamming distance against `(k - <a, b>) / 2` on random pairs.
pub fn hamming_formula_check(pairs: usize, bits: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    let a = HashCodes::random(pairs, bits, &mut r);
    let b = HashCodes::random(pairs, bits, &mut r);
    let (pa, pb) = (a.pack(), b.pack());
    let mut out = Outcome::default();
    for i in 0..pairs {
        let inner: i64 = a.view().row(i).iter().zip(b.view().row(i)).map(|(&x, &y)| i64::from(x) * i64::from(y)).sum();
        let formula = (bits as i64 - inner) / 2;
        let got = i64::from(lifelong_hash::retrieval::hamming_distance(pa.row(i), pb.row(i)).unwrap());
        out.record((got - formula).abs() as f64, got != formula);
    }
    out
}

/// Hand-enumerated metric cases, compared exactly.
pub fn metric_hand_cases() -> Vec<(&'static str, bool)> {
    use lifelong_hash::retrieval::*;
    use ndarray::array;
    let codes = |rows: &[&[i8]]| {
        let flat: Vec<i8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        HashCodes::new(Array2::from_shape_vec((rows.len(), rows[0].len()), flat).unwrap()).unwrap()
    };
    let mut cases = Vec::new();

    let ap = mean_average_precision(&[vec![0, 1, 2]], &array![[true, false, true]]).unwrap();
    cases.push(("AP of [rel, irrel, rel] is (1 + 2/3) / 2", ap == (1.0 + 2.0 / 3.0) / 2.0));

    let perfect = mean_average_precision(&[vec![2, 0, 1, 3]], &array![[true, false, true, false]]).unwrap();
    cases.push(("relevant items first gives MAP 1", perfect == 1.0));

    let curve = precision_recall_curve(&[vec![0, 1, 2, 3, 4]], &array![[true, false, true, false, true]]).unwrap();
    let expected = [
        (0.0, 1.0),
        (1.0 / 3.0, 1.0),
        (1.0 / 3.0, 0.5),
        (2.0 / 3.0, 2.0 / 3.0),
        (2.0 / 3.0, 0.5),
        (1.0, 0.6),
    ];
    let pr_ok = curve.len() == expected.len()
        && curve.iter().zip(expected).all(|(p, (r, q))| p.recall == r && p.precision == q);
    cases.push(("5-item PR curve matches hand points", pr_ok));

    let q = codes(&[&[1, 1, 1, 1]]);
    let db = codes(&[&[1, 1, 1, 1], &[-1, 1, 1, 1], &[-1, -1, 1, 1], &[-1, -1, -1, 1], &[-1, -1, -1, -1]]);
    let rel = array![[true, false, true, true, false]];
    let lookup = hash_lookup_precision(&q, &db, &rel, 2).unwrap();
    cases.push(("radius-2 lookup includes distance 2 (2 of 3)", lookup == 2.0 / 3.0));
    let far = hash_lookup_precision(&codes(&[&[-1, -1, -1, -1]]), &codes(&[&[1, 1, 1, 1]]), &array![[true]], 2).unwrap();
    cases.push(("empty lookup candidate set scores 0", far == 0.0));

    let ranked = rank_database(&q, &codes(&[&[-1, -1, 1, 1], &[1, 1, 1, -1], &[1, 1, 1, 1], &[-1, 1, 1, -1]])).unwrap();
    // distances 2, 1, 0, 2 sorted with index tie-break
    cases.push(("4-item ranking matches exhaustive sort", ranked == vec![vec![2, 1, 0, 3]]));

    let radius = radius_precision_recall(&q, &db, &rel).unwrap();
    let radius_ok = radius.len() == 5
        && radius[0].precision == 1.0
        && radius[0].recall == 1.0 / 3.0
        && radius[2].precision == 2.0 / 3.0
        && radius[2].recall == 2.0 / 3.0
        && radius[4].precision == 0.6
        && radius[4].recall == 1.0;
    cases.push(("radius PR curve matches hand points", radius_ok));
    cases
}

/// MAP of uniformly random rankings minus the relevant fraction.
pub fn random_ranking_map_gap(trials: usize, items: usize, relevant: usize, seed: u64) -> f64 {
    use rand::seq::SliceRandom;
    let mut r = rng(seed);
    let mut rel = Array2::from_elem((trials, items), false);
    let mut rankings = Vec::with_capacity(trials);
    for t in 0..trials {
        for j in 0..relevant {
            rel[[t, j]] = true;
        }
        let mut order: Vec<usize> = (0..items).collect();
        order.shuffle(&mut r);
        rankings.push(order);
    }
    let map = lifelong_hash::retrieval::mean_average_precision(&rankings, &rel).unwrap();
    map - relevant as f64 / items as f64
}
