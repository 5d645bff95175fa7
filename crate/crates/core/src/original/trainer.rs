use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::objective::{
    original_loss, output_grad_rows, update_codes_original, OriginalLoss, OriginalWeights, Output, Representations,
};
use crate::data::{Bundle, HashCodes, HyperParams, LabelMatrix, Modality};
use crate::error::{Error, Result};
use crate::network::{NetworkParams, Sgd};
use crate::similarity::LabelSimilarity;

/// Paired training data, instance-per-row, labels in the unified class
/// space.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub img: Array2<f64>,
    pub txt: Array2<f64>,
    pub labels: LabelMatrix,
}

impl TrainingSet {
    /// The bundle rows at `indices`, in that order.
    pub fn from_bundle(bundle: &Bundle, indices: &[usize]) -> Self {
        Self {
            img: bundle.img.view().select(Axis(0), indices),
            txt: bundle.txt.view().select(Axis(0), indices),
            labels: bundle.labels.select(indices),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.rows() == 0
    }

    fn check(&self) -> Result<()> {
        if self.img.nrows() != self.len() || self.txt.nrows() != self.len() {
            return Err(Error::shape(
                "training set",
                self.len(),
                format!("image {} / text {}", self.img.nrows(), self.txt.nrows()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OriginalTraceRow {
    pub iteration: usize,
    pub inter: f64,
    pub intra: f64,
    pub quan: f64,
    pub total: f64,
}

impl OriginalTraceRow {
    fn new(iteration: usize, l: OriginalLoss) -> Self {
        Self {
            iteration,
            inter: l.inter,
            intra: l.intra,
            quan: l.quan,
            total: l.total,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OriginalModel {
    pub label_net: NetworkParams,
    pub img_net: NetworkParams,
    pub txt_net: NetworkParams,
    pub bx: HashCodes,
    pub by: HashCodes,
    /// Row 0 is the objective at initialization.
    pub trace: Vec<OriginalTraceRow>,
}

pub fn write_original_trace<W: Write>(mut out: W, trace: &[OriginalTraceRow]) -> std::io::Result<()> {
    writeln!(out, "iteration,inter,intra,quan,total")?;
    for r in trace {
        writeln!(out, "{},{},{},{},{}", r.iteration, r.inter, r.intra, r.quan, r.total)?;
    }
    Ok(())
}

fn layer_dims(input: usize, hidden: &[usize], k: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(k)).collect()
}

/// Options that do not change the learned result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    /// Evaluate the full objective after every outer iteration.
    pub record_trace: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { record_trace: true }
    }
}

pub fn train_original(data: &TrainingSet, hp: &HyperParams) -> Result<OriginalModel> {
    train_original_with(data, hp, TrainOptions::default())
}

/// Alternates LabelNet, ImgNet and TxtNet SGD passes with the closed-form
/// code updates, `hp.epochs_original` times.
pub fn train_original_with(data: &TrainingSet, hp: &HyperParams, opts: TrainOptions) -> Result<OriginalModel> {
    hp.validate()?;
    data.check()?;
    if data.is_empty() {
        return Err(Error::Data("original training set is empty".into()));
    }
    let m = data.len();
    let k = hp.k;
    let label_in = data.labels.as_f64();
    let sup = LabelSimilarity::new(&data.labels, hp.similarity)?;
    let weights = OriginalWeights {
        alpha: hp.alpha,
        beta: hp.beta,
        gamma: hp.gamma,
        inter: !hp.drop_inter,
    };
    // The code update's sign is invariant to positive scaling of gamma, so a
    // zero-gamma ablation still gets a usable update.
    let code_gamma = if hp.gamma > 0.0 { hp.gamma } else { 1.0 };

    let mut label_net = NetworkParams::init(
        &layer_dims(data.labels.classes(), &hp.hidden_label, k),
        Modality::Label,
        hp.seed.wrapping_add(1),
    )?;
    let mut img_net = NetworkParams::init(&layer_dims(data.img.ncols(), &hp.hidden_image, k), Modality::Image, hp.seed.wrapping_add(2))?;
    let mut txt_net = NetworkParams::init(&layer_dims(data.txt.ncols(), &hp.hidden_text, k), Modality::Text, hp.seed.wrapping_add(3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut bx = HashCodes::random(m, k, &mut rng);
    let mut by = HashCodes::random(m, k, &mut rng);

    let mut h = label_net.forward(label_in.view())?.into_inner();
    let mut f = img_net.forward(data.img.view())?.into_inner();
    let mut g = txt_net.forward(data.txt.view())?.into_inner();

    let mut trace = Vec::new();
    if opts.record_trace {
        let reps = Representations { f: f.view(), g: g.view(), h: h.view() };
        trace.push(OriginalTraceRow::new(0, checked(original_loss(reps, &bx, &by, &sup, weights)?, 0)?));
    }

    let mut opt_label = Sgd::new(hp.lr_original, hp.momentum, hp.weight_decay);
    let mut opt_img = Sgd::new(hp.lr_original, hp.momentum, hp.weight_decay);
    let mut opt_txt = Sgd::new(hp.lr_original, hp.momentum, hp.weight_decay);

    for iteration in 1..=hp.epochs_original {
        let steps = [
            (Output::Label, hp.batch_label),
            (Output::Image, hp.batch_image),
            (Output::Text, hp.batch_text),
        ];
        for (output, batch) in steps {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            for rows in order.chunks(batch) {
                let (net, opt, input): (&mut NetworkParams, &mut Sgd, ArrayView2<f64>) = match output {
                    Output::Label => (&mut label_net, &mut opt_label, label_in.view()),
                    Output::Image => (&mut img_net, &mut opt_img, data.img.view()),
                    Output::Text => (&mut txt_net, &mut opt_txt, data.txt.view()),
                };
                let cache = net.forward_cached(input.select(Axis(0), rows).view())?;
                let snapshot = match output {
                    Output::Label => &mut h,
                    Output::Image => &mut f,
                    Output::Text => &mut g,
                };
                for (r, &row) in rows.iter().enumerate() {
                    snapshot.row_mut(row).assign(&cache.output().row(r));
                }
                let reps = Representations { f: f.view(), g: g.view(), h: h.view() };
                let upstream = output_grad_rows(output, rows, reps, &bx, &by, &sup, weights)?;
                let grads = net.backward(&cache, upstream.view())?;
                opt.step(net, grads)?;
            }
            match output {
                Output::Label => h = label_net.forward(label_in.view())?.into_inner(),
                Output::Image => f = img_net.forward(data.img.view())?.into_inner(),
                Output::Text => g = txt_net.forward(data.txt.view())?.into_inner(),
            }
        }
        bx = update_codes_original(f.view(), h.view(), code_gamma)?;
        by = update_codes_original(g.view(), h.view(), code_gamma)?;

        if opts.record_trace {
            let reps = Representations { f: f.view(), g: g.view(), h: h.view() };
            let loss = checked(original_loss(reps, &bx, &by, &sup, weights)?, iteration)?;
            trace.push(OriginalTraceRow::new(iteration, loss));
        }
    }

    Ok(OriginalModel {
        label_net,
        img_net,
        txt_net,
        bx,
        by,
        trace,
    })
}

fn checked(loss: OriginalLoss, iteration: usize) -> Result<OriginalLoss> {
    if [loss.inter, loss.intra, loss.quan, loss.total].iter().all(|v| v.is_finite()) {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!(
            "original objective at iteration {iteration} (inter {}, intra {}, quan {})",
            loss.inter, loss.intra, loss.quan
        )))
    }
}
