use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{dcc_update, lifelong_loss, output_grad_rows, DccWorkspace, LifelongLoss, LifelongSide, LifelongWeights};
use crate::data::{Bundle, DatasetSplit, HashCodes, HyperParams, LabelMatrix};
use crate::error::{Error, Result};
use crate::network::{NetworkParams, Sgd};
use crate::original::{OriginalModel, TrainingSet};
use crate::similarity::LabelSimilarity;

/// Lifelong training sample: `a1` original items followed by `a2`
/// incremental items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Positions within the split's original items, ascending.
    pub original: Vec<usize>,
    /// Positions within the split's incremental items, ascending.
    pub incremental: Vec<usize>,
    /// Bundle row indices, originals first.
    pub indices: Vec<usize>,
}

impl TrainingSample {
    pub fn a1(&self) -> usize {
        self.original.len()
    }

    pub fn a2(&self) -> usize {
        self.incremental.len()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform sampling without replacement from each pool. Labels come back in
/// the bundle's unified class space, padded to `classes` if it is wider.
pub fn sample_training_set(
    split: &DatasetSplit,
    labels: &LabelMatrix,
    classes: usize,
    a1: usize,
    a2: usize,
    seed: u64,
) -> Result<(TrainingSample, LabelMatrix)> {
    if a1 > split.m() {
        return Err(Error::Data(format!("original pool exhausted: a1 = {a1} > m = {}", split.m())));
    }
    if a2 > split.n() {
        return Err(Error::Data(format!("incremental pool exhausted: a2 = {a2} > n = {}", split.n())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut original = index::sample(&mut rng, split.m(), a1).into_vec();
    let mut incremental = index::sample(&mut rng, split.n(), a2).into_vec();
    original.sort_unstable();
    incremental.sort_unstable();
    let indices: Vec<usize> = original
        .iter()
        .map(|&p| split.original_indices[p])
        .chain(incremental.iter().map(|&p| split.incremental_indices[p]))
        .collect();
    let sampled = labels.select(&indices).pad_classes(classes)?;
    Ok((
        TrainingSample {
            original,
            incremental,
            indices,
        },
        sampled,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LifelongTraceRow {
    pub iteration: usize,
    pub old: f64,
    pub new: f64,
    pub quan: f64,
    pub balance: f64,
    pub total: f64,
}

impl LifelongTraceRow {
    fn new(iteration: usize, l: LifelongLoss) -> Self {
        Self {
            iteration,
            old: l.old,
            new: l.new,
            quan: l.quan,
            balance: l.balance,
            total: l.total,
        }
    }
}

pub fn write_lifelong_trace<W: Write>(mut out: W, trace: &[LifelongTraceRow]) -> std::io::Result<()> {
    writeln!(out, "iteration,J_old,J_new,J_quan,J_balance,total")?;
    for r in trace {
        writeln!(out, "{},{},{},{},{},{}", r.iteration, r.old, r.new, r.quan, r.balance, r.total)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LifelongModel {
    pub img_net: NetworkParams,
    pub txt_net: NetworkParams,
    /// Codes of the incremental items, `n x k`.
    pub bx_new: HashCodes,
    pub by_new: HashCodes,
    pub sample: TrainingSample,
    pub trace: Vec<LifelongTraceRow>,
    /// Checksum of the original codes before and after the phase.
    pub frozen_checksum_before: (u64, u64),
    pub frozen_checksum_after: (u64, u64),
    /// Wall time of the alternating updates, excluding sampling and
    /// similarity setup.
    pub update_time: Duration,
}

/// Runs the lifelong phase on the bundle rows named by `split`, starting
/// ImgNet and TxtNet from the original model. The original codes are only
/// read.
pub fn train_lifelong(bundle: &Bundle, split: &DatasetSplit, original: &OriginalModel, hp: &HyperParams) -> Result<LifelongModel> {
    train_lifelong_with(bundle, split, original, hp, true)
}

pub fn train_lifelong_with(
    bundle: &Bundle,
    split: &DatasetSplit,
    original: &OriginalModel,
    hp: &HyperParams,
    record_trace: bool,
) -> Result<LifelongModel> {
    hp.validate()?;
    let (m, n, k) = (split.m(), split.n(), hp.k);
    if n == 0 {
        return Err(Error::Data("incremental set is empty".into()));
    }
    if original.bx.rows() != m || original.by.rows() != m || original.bx.bits() != k || original.by.bits() != k {
        return Err(Error::shape(
            "original codes",
            format!("{m} x {k}"),
            format!("{} x {}", original.bx.rows(), original.bx.bits()),
        ));
    }
    let bx: &HashCodes = &original.bx;
    let by: &HashCodes = &original.by;
    let frozen_checksum_before = (bx.checksum(), by.checksum());

    let (a1, a2) = hp.sample_counts(m, n)?;
    let classes = bundle.labels.classes();
    let (sample, sample_labels) = sample_training_set(split, &bundle.labels, classes, a1, a2, hp.seed.wrapping_add(10))?;
    let a = sample.len();
    let sample_map = sample.incremental.clone();

    let data = TrainingSet::from_bundle(bundle, &sample.indices);
    let sample_sim = LabelSimilarity::new(&sample_labels, hp.similarity)?;
    let old_sim = LabelSimilarity::new(&bundle.labels.select(&split.original_indices), hp.similarity)?;
    let new_sim = LabelSimilarity::new(&bundle.labels.select(&split.incremental_indices), hp.similarity)?;
    // column-major, so that selecting sample columns per batch reads contiguous memory
    let s_to = sample_sim.full(&old_sim).reversed_axes();
    let s_ti = sample_sim.full(&new_sim).reversed_axes();

    let weights = LifelongWeights {
        k: k as f64,
        lambda_: hp.lambda_,
        mu: hp.mu,
        old: !hp.drop_old,
        new: !hp.drop_new,
        fit_gradient: !hp.detach_fit,
    };

    let mut img_net = original.img_net.clone();
    let mut txt_net = original.txt_net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(20));
    let mut bx_new = HashCodes::random(n, k, &mut rng);
    let mut by_new = HashCodes::random(n, k, &mut rng);

    let mut ax = img_net.forward(data.img.view())?.into_inner();
    let mut ay = txt_net.forward(data.txt.view())?.into_inner();

    let loss_at = |ax: &Array2<f64>, ay: &Array2<f64>, bxn: &HashCodes, byn: &HashCodes, iteration: usize| -> Result<LifelongTraceRow> {
        let img = side(bx, bxn, ax.view(), a1, &sample_map);
        let txt = side(by, byn, ay.view(), a1, &sample_map);
        let loss = lifelong_loss(img, txt, s_to.view(), s_ti.view(), weights)?;
        checked(loss, iteration).map(|l| LifelongTraceRow::new(iteration, l))
    };

    let mut trace = Vec::new();
    if record_trace {
        trace.push(loss_at(&ax, &ay, &bx_new, &by_new, 0)?);
    }

    let started = Instant::now();
    let mut opt_img = Sgd::new(hp.lr_lifelong, hp.momentum, hp.weight_decay);
    let mut opt_txt = Sgd::new(hp.lr_lifelong, hp.momentum, hp.weight_decay);

    for iteration in 1..=hp.epochs_lifelong {
        for text in [false, true] {
            let (net, opt, input, out, frozen, codes, batch) = if text {
                (&mut txt_net, &mut opt_txt, data.txt.view(), &mut ay, by, &by_new, hp.batch_text)
            } else {
                (&mut img_net, &mut opt_img, data.img.view(), &mut ax, bx, &bx_new, hp.batch_image)
            };
            let mut order: Vec<usize> = (0..a).collect();
            order.shuffle(&mut rng);
            for rows in order.chunks(batch) {
                let cache = net.forward_cached(input.select(Axis(0), rows).view())?;
                for (r, &row) in rows.iter().enumerate() {
                    out.row_mut(row).assign(&cache.output().row(r));
                }
                let s = side(frozen, codes, out.view(), a1, &sample_map);
                let upstream = output_grad_rows(rows, s, a1, s_to.view(), s_ti.view(), weights)?;
                let grads = net.backward(&cache, upstream.view())?;
                opt.step(net, grads)?;
            }
            *out = net.forward(input)?.into_inner();
        }
        for (codes, out) in [(&mut bx_new, &ax), (&mut by_new, &ay)] {
            let ws = DccWorkspace::new(out.view(), out.slice(ndarray::s![a1.., ..]), &sample_map, s_ti.view(), k as f64, hp.lambda_)?;
            dcc_update(codes, out.view(), &ws, hp.dcc_sweeps)?;
        }
        if record_trace {
            trace.push(loss_at(&ax, &ay, &bx_new, &by_new, iteration)?);
        }
    }

    let update_time = started.elapsed();
    let frozen_checksum_after = (bx.checksum(), by.checksum());
    Ok(LifelongModel {
        img_net,
        txt_net,
        bx_new,
        by_new,
        sample,
        trace,
        frozen_checksum_before,
        frozen_checksum_after,
        update_time,
    })
}

fn side<'a>(b_old: &'a HashCodes, b_new: &'a HashCodes, out: ArrayView2<'a, f64>, a1: usize, sample_map: &'a [usize]) -> LifelongSide<'a> {
    LifelongSide {
        b_old,
        b_new,
        a: out,
        out_new: out.slice_move(ndarray::s![a1.., ..]),
        sample_map,
    }
}

fn checked(loss: LifelongLoss, iteration: usize) -> Result<LifelongLoss> {
    if [loss.old, loss.new, loss.quan, loss.balance, loss.total].iter().all(|v| v.is_finite()) {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!(
            "lifelong objective at iteration {iteration} (old {}, new {}, quan {}, balance {})",
            loss.old, loss.new, loss.quan, loss.balance
        )))
    }
}
