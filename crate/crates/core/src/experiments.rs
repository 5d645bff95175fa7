//! Desk-scale experiment protocols: forgetting across class stages, loss
//! ablations, lifelong versus retraining time, and hyperparameter sweeps.
//!
//! Every cell derives its randomness from the configured seeds, so equal
//! inputs give equal tables regardless of `jobs`.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_split, Bundle, DatasetSplit, HashCodes, HyperParams, Modality, SimilarityMode};
use crate::error::{Error, Result};
use crate::lifelong::{train_lifelong, train_lifelong_with};
use crate::network::NetworkParams;
use crate::original::{train_original, train_original_with, OriginalModel, TrainOptions, TrainingSet};
use crate::retrieval::{evaluate, relevance_from_labels};
use crate::synth::{generate, SynthConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How the bundle is divided before an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub incremental_classes: usize,
    pub query_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            incremental_classes: 1,
            query_fraction: 0.1,
            seed: 0,
        }
    }
}

/// FNV-1a of the canonical JSON of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).unwrap_or_default();
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn encode(net: &NetworkParams, bundle: &Bundle, rows: &[usize]) -> Result<HashCodes> {
    let features = match net.modality() {
        Modality::Image => bundle.img.view(),
        Modality::Text => bundle.txt.view(),
        Modality::Label => return Err(Error::Config("label network cannot encode queries".into())),
    };
    let out = net.forward(features.select(ndarray::Axis(0), rows).view())?;
    Ok(HashCodes::from_signs(out.view()))
}

/// Cross-modal MAP pair for explicit query rows and database codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MapPair {
    pub i2t: f64,
    pub t2i: f64,
}

impl MapPair {
    pub fn mean(&self) -> f64 {
        0.5 * (self.i2t + self.t2i)
    }
}

pub fn cross_modal_map(
    bundle: &Bundle,
    queries: &[usize],
    img_net: &NetworkParams,
    txt_net: &NetworkParams,
    database: &[usize],
    db_x: &HashCodes,
    db_y: &HashCodes,
) -> Result<MapPair> {
    if queries.is_empty() {
        return Err(Error::Data("no queries for this evaluation".into()));
    }
    let relevance = relevance_from_labels(&bundle.labels.select(queries), &bundle.labels.select(database))?;
    let q_img = encode(img_net, bundle, queries)?;
    let q_txt = encode(txt_net, bundle, queries)?;
    Ok(MapPair {
        i2t: evaluate(&q_img, db_y, &relevance, 2)?.map,
        t2i: evaluate(&q_txt, db_x, &relevance, 2)?.map,
    })
}

fn queries_within(bundle: &Bundle, split: &DatasetSplit, classes: &BTreeSet<usize>) -> Vec<usize> {
    split
        .query_indices
        .iter()
        .copied()
        .filter(|&q| bundle.labels.row_classes(q).all(|c| classes.contains(&c)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRow {
    pub stage: usize,
    pub new_classes: usize,
    pub classes_seen: usize,
    pub database_size: usize,
    /// Original-class queries against the original items' frozen codes.
    pub original: MapPair,
    /// Queries over every class seen so far against every item seen so far.
    pub seen: MapPair,
    /// Same as `seen`, but with no lifelong updates: the original networks
    /// code every later item and every query.
    pub frozen_control: MapPair,
    /// `original` at stage 0 minus `original` now.
    pub drop: MapPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub schema_version: u32,
    pub fingerprint: String,
    pub schedule: Vec<usize>,
    pub split: SplitConfig,
    pub hyper: HyperParams,
    pub rows: Vec<ForgettingRow>,
}

/// Trains the original phase on the classes outside the schedule, then one
/// lifelong phase per schedule entry, each adding that many classes. An
/// item joins at the stage of its latest class. Earlier codes stay frozen
/// across all later stages.
pub fn forgetting_protocol(bundle: &Bundle, schedule: &[usize], split_cfg: SplitConfig, hp: &HyperParams) -> Result<ForgettingReport> {
    let total: usize = schedule.iter().sum();
    let classes = bundle.labels.classes();
    if total >= classes {
        return Err(Error::Config(format!("schedule adds {total} classes but the bundle has only {classes}")));
    }
    let split = make_split(&bundle.labels, total, split_cfg.query_fraction, split_cfg.seed)?;
    let first = classes - total;
    let mut group_of = vec![0usize; classes];
    let mut next = first;
    for (stage, &count) in schedule.iter().enumerate() {
        for g in group_of.iter_mut().skip(next).take(count) {
            *g = stage + 1;
        }
        next += count;
    }
    let stage_of = |row: usize| bundle.labels.row_classes(row).map(|c| group_of[c]).max().unwrap_or(0);

    let original_rows = split.original_indices.clone();
    let original = train_original(&TrainingSet::from_bundle(bundle, &original_rows), hp)?;
    let mut seen: BTreeSet<usize> = (0..first).collect();
    let original_queries = queries_within(bundle, &split, &seen);

    let mut known = original_rows.clone();
    let (mut codes_x, mut codes_y) = (original.bx.clone(), original.by.clone());
    let (mut img_net, mut txt_net) = (original.img_net.clone(), original.txt_net.clone());
    let mut rows = Vec::new();
    let base = cross_modal_map(bundle, &original_queries, &img_net, &txt_net, &original_rows, &original.bx, &original.by)?;
    rows.push(ForgettingRow {
        stage: 0,
        new_classes: 0,
        classes_seen: seen.len(),
        database_size: known.len(),
        original: base,
        seen: base,
        frozen_control: base,
        drop: MapPair { i2t: 0.0, t2i: 0.0 },
    });

    for (s, &count) in schedule.iter().enumerate() {
        let stage = s + 1;
        let new_rows: Vec<usize> = split.incremental_indices.iter().copied().filter(|&r| stage_of(r) == stage).collect();
        let stage_classes: Vec<usize> = (0..classes).filter(|&c| group_of[c] == stage).collect();
        seen.extend(stage_classes.iter().copied());
        if !new_rows.is_empty() {
            let stage_split = DatasetSplit {
                original_indices: known.clone(),
                incremental_indices: new_rows.clone(),
                original_classes: (0..classes).filter(|&c| group_of[c] < stage).collect(),
                incremental_classes: stage_classes,
                mixed_label_instances: 0,
                ..split.clone()
            };
            let frozen = OriginalModel {
                label_net: original.label_net.clone(),
                img_net: img_net.clone(),
                txt_net: txt_net.clone(),
                bx: codes_x.clone(),
                by: codes_y.clone(),
                trace: Vec::new(),
            };
            let stage_hp = HyperParams {
                seed: hp.seed.wrapping_add(100 * stage as u64),
                ..hp.clone()
            };
            let ll = train_lifelong_with(bundle, &stage_split, &frozen, &stage_hp, false)?;
            codes_x = codes_x.concat(&ll.bx_new)?;
            codes_y = codes_y.concat(&ll.by_new)?;
            img_net = ll.img_net;
            txt_net = ll.txt_net;
            known.extend_from_slice(&new_rows);
        }
        let seen_queries = queries_within(bundle, &split, &seen);
        let now = cross_modal_map(bundle, &original_queries, &img_net, &txt_net, &original_rows, &original.bx, &original.by)?;
        let all = cross_modal_map(bundle, &seen_queries, &img_net, &txt_net, &known, &codes_x, &codes_y)?;
        let later = &known[original_rows.len()..];
        let control_x = original.bx.concat(&encode(&original.img_net, bundle, later)?)?;
        let control_y = original.by.concat(&encode(&original.txt_net, bundle, later)?)?;
        let control = cross_modal_map(bundle, &seen_queries, &original.img_net, &original.txt_net, &known, &control_x, &control_y)?;
        rows.push(ForgettingRow {
            stage,
            new_classes: count,
            classes_seen: seen.len(),
            database_size: known.len(),
            original: now,
            seen: all,
            frozen_control: control,
            drop: MapPair {
                i2t: base.i2t - now.i2t,
                t2i: base.t2i - now.t2i,
            },
        });
    }
    Ok(ForgettingReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fingerprint: fingerprint(&(schedule, split_cfg, hp)),
        schedule: schedule.to_vec(),
        split: split_cfg,
        hyper: hp.clone(),
        rows,
    })
}

pub fn write_forgetting_csv<W: Write>(mut out: W, report: &ForgettingReport) -> std::io::Result<()> {
    writeln!(
        out,
        "stage,new_classes,classes_seen,database_size,original_i2t,original_t2i,seen_i2t,seen_t2i,control_i2t,control_t2i,drop_i2t,drop_t2i"
    )?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.stage,
            r.new_classes,
            r.classes_seen,
            r.database_size,
            r.original.i2t,
            r.original.t2i,
            r.seen.i2t,
            r.seen.t2i,
            r.frozen_control.i2t,
            r.frozen_control.t2i,
            r.drop.i2t,
            r.drop.t2i
        )?;
    }
    Ok(())
}

/// A loss-term or supervision variant of the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    /// No intra-modality similarity loss.
    Intra,
    /// No inter-modality similarity loss.
    Inter,
    /// No quantization loss in the original phase.
    Quant,
    /// No original-similarity term in the lifelong phase.
    O,
    /// No incremental-similarity term in the lifelong phase.
    I,
    /// No lifelong quantization loss.
    Q,
    /// No bit balance loss.
    B,
    SingleLabel,
    MultiLabel,
}

impl Variant {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "full" => Variant::Full,
            "intra" => Variant::Intra,
            "inter" => Variant::Inter,
            "quant" => Variant::Quant,
            "O" | "o" => Variant::O,
            "I" | "i" | "L" | "l" => Variant::I,
            "Q" | "q" => Variant::Q,
            "B" | "b" => Variant::B,
            "single_label" | "single" => Variant::SingleLabel,
            "multi_label" | "multi" => Variant::MultiLabel,
            other => return Err(Error::Config(format!("unknown ablation variant '{other}'"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Intra => "intra",
            Variant::Inter => "inter",
            Variant::Quant => "quant",
            Variant::O => "O",
            Variant::I => "I",
            Variant::Q => "Q",
            Variant::B => "B",
            Variant::SingleLabel => "single_label",
            Variant::MultiLabel => "multi_label",
        }
    }

    /// `hp` with this variant's term removed or supervision swapped.
    pub fn apply(self, hp: &HyperParams) -> HyperParams {
        let mut v = hp.clone();
        match self {
            Variant::Full => {}
            Variant::Intra => v.beta = 0.0,
            Variant::Inter => v.drop_inter = true,
            Variant::Quant => v.gamma = 0.0,
            Variant::O => v.drop_old = true,
            Variant::I => v.drop_new = true,
            Variant::Q => v.lambda_ = 0.0,
            Variant::B => v.mu = 0.0,
            Variant::SingleLabel => v.similarity = SimilarityMode::SingleLabel,
            Variant::MultiLabel => v.similarity = SimilarityMode::MultiLabel,
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// After the original phase: original-class queries, original items.
    pub original: MapPair,
    /// After the lifelong phase: all queries, all retrieval items.
    pub all: MapPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub fingerprint: String,
    pub split: SplitConfig,
    pub hyper: HyperParams,
    pub rows: Vec<AblationRow>,
}

/// Runs the original and lifelong phases once per variant, all with the
/// same split, seeds and data order.
pub fn run_pipeline(bundle: &Bundle, split: &DatasetSplit, hp: &HyperParams) -> Result<(MapPair, MapPair)> {
    let original = train_original_with(&TrainingSet::from_bundle(bundle, &split.original_indices), hp, TrainOptions { record_trace: false })?;
    let original_queries = split.original_class_queries(&bundle.labels);
    let before = cross_modal_map(
        bundle,
        &original_queries,
        &original.img_net,
        &original.txt_net,
        &split.original_indices,
        &original.bx,
        &original.by,
    )?;
    let after = if split.n() == 0 {
        before
    } else {
        let ll = train_lifelong_with(bundle, split, &original, hp, false)?;
        let mut rows = split.original_indices.clone();
        rows.extend_from_slice(&split.incremental_indices);
        cross_modal_map(
            bundle,
            &split.query_indices,
            &ll.img_net,
            &ll.txt_net,
            &rows,
            &original.bx.concat(&ll.bx_new)?,
            &original.by.concat(&ll.by_new)?,
        )?
    };
    Ok((before, after))
}

pub fn ablation_runner(
    bundle: &Bundle,
    hp: &HyperParams,
    variants: &[Variant],
    split_cfg: SplitConfig,
    jobs: usize,
) -> Result<AblationReport> {
    let split = make_split(&bundle.labels, split_cfg.incremental_classes, split_cfg.query_fraction, split_cfg.seed)?;
    let mut cells = vec![Variant::Full];
    for &v in variants {
        if !cells.contains(&v) {
            cells.push(v);
        }
    }
    let rows = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&v| {
                let (original, all) = run_pipeline(bundle, &split, &v.apply(hp))?;
                Ok(AblationRow {
                    variant: v.name().to_string(),
                    original,
                    all,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(AblationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fingerprint: fingerprint(&(&cells, split_cfg, hp)),
        split: split_cfg,
        hyper: hp.clone(),
        rows,
    })
}

pub fn write_ablation_csv<W: Write>(mut out: W, report: &AblationReport) -> std::io::Result<()> {
    writeln!(out, "variant,original_i2t,original_t2i,all_i2t,all_t2i")?;
    for r in &report.rows {
        writeln!(out, "{},{},{},{},{}", r.variant, r.original.i2t, r.original.t2i, r.all.i2t, r.all.t2i)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub m: usize,
    pub lifelong_seconds: f64,
    pub retrain_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub schema_version: u32,
    pub fingerprint: String,
    pub include_setup: bool,
    pub hyper: HyperParams,
    pub rows: Vec<TimingRow>,
    /// Least-squares slope of log time against log n; `None` with fewer
    /// than two sizes.
    pub lifelong_exponent: Option<f64>,
    pub retrain_exponent: Option<f64>,
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Settings of the timing benchmark's synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Original items per incremental item (`m = ratio * n`).
    pub ratio: usize,
    pub d_img: usize,
    pub d_txt: usize,
    pub seed: u64,
    pub include_setup: bool,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            ratio: 4,
            d_img: 64,
            d_txt: 32,
            seed: 0,
            include_setup: false,
        }
    }
}

/// For each `n`, a single-label bundle with `ratio` original classes and one
/// incremental class of `n` items each. Times the lifelong phase on it,
/// and, as the control, the original phase retrained from scratch on all
/// `m + n` items for `hp.epochs_original` epochs. The lifelong sample sizes
/// come from `hp.a1`/`hp.a2` and should be fixed for an `O(n)` comparison.
pub fn timing_bench(sizes: &[usize], hp: &HyperParams, cfg: TimingConfig) -> Result<TimingReport> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("timing sizes must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let bundle = generate(&SynthConfig {
            classes: cfg.ratio + 1,
            per_class: n,
            d_img: cfg.d_img,
            d_txt: cfg.d_txt,
            seed: cfg.seed,
            ..SynthConfig::single_label(cfg.ratio + 1, n, cfg.seed)
        })?;
        let split = make_split(&bundle.labels, 1, 1.0 / n as f64, cfg.seed)?;
        let original = train_original_with(
            &TrainingSet::from_bundle(&bundle, &split.original_indices),
            &HyperParams { epochs_original: 0, ..hp.clone() },
            TrainOptions { record_trace: false },
        )?;
        let started = Instant::now();
        let ll = train_lifelong_with(&bundle, &split, &original, hp, false)?;
        let lifelong_seconds = if cfg.include_setup {
            started.elapsed().as_secs_f64()
        } else {
            ll.update_time.as_secs_f64()
        };
        let started = Instant::now();
        train_original_with(
            &TrainingSet::from_bundle(&bundle, &split.retrieval_indices),
            hp,
            TrainOptions { record_trace: false },
        )?;
        rows.push(TimingRow {
            n: split.n(),
            m: split.m(),
            lifelong_seconds,
            retrain_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let fit = |f: fn(&TimingRow) -> f64| log_log_slope(&rows.iter().map(|r| (r.n as f64, f(r))).collect::<Vec<_>>());
    Ok(TimingReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fingerprint: fingerprint(&(sizes, cfg, hp)),
        include_setup: cfg.include_setup,
        hyper: hp.clone(),
        lifelong_exponent: fit(|r| r.lifelong_seconds),
        retrain_exponent: fit(|r| r.retrain_seconds),
        rows,
    })
}

pub fn write_timing_csv<W: Write>(mut out: W, report: &TimingReport) -> std::io::Result<()> {
    let fmt = |e: Option<f64>| e.map_or_else(|| "undefined".to_string(), |v| v.to_string());
    writeln!(out, "n,m,lifelong_seconds,retrain_seconds,lifelong_exponent,retrain_exponent")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            r.m,
            r.lifelong_seconds,
            r.retrain_seconds,
            fmt(report.lifelong_exponent),
            fmt(report.retrain_exponent)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Vary one parameter at a time around the base configuration.
    PerAxis,
    /// Every combination of the axis values.
    Factorial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub mode: SweepMode,
    /// Parameter name (`alpha`, `beta`, `gamma`, `lambda`, `mu`) and values.
    pub axes: Vec<(String, Vec<f64>)>,
}

/// `10^-2, 10^-1, ..., 10^5`.
pub fn default_axis_values() -> Vec<f64> {
    (-2..=5).map(|e| 10f64.powi(e)).collect()
}

impl SweepGrid {
    pub fn per_axis(names: &[&str]) -> Self {
        Self {
            mode: SweepMode::PerAxis,
            axes: names.iter().map(|n| (n.to_string(), default_axis_values())).collect(),
        }
    }

    fn points(&self, base: &HyperParams) -> Result<Vec<HyperParams>> {
        for (name, values) in &self.axes {
            set_param(&mut base.clone(), name, 1.0)?;
            if values.is_empty() {
                return Err(Error::Config(format!("sweep axis '{name}' has no values")));
            }
        }
        if self.axes.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        let mut out = Vec::new();
        match self.mode {
            SweepMode::PerAxis => {
                for (name, values) in &self.axes {
                    for &v in values {
                        let mut hp = base.clone();
                        set_param(&mut hp, name, v)?;
                        out.push(hp);
                    }
                }
            }
            SweepMode::Factorial => {
                out.push(base.clone());
                for (name, values) in &self.axes {
                    let mut next = Vec::with_capacity(out.len() * values.len());
                    for hp in &out {
                        for &v in values {
                            let mut h = hp.clone();
                            set_param(&mut h, name, v)?;
                            next.push(h);
                        }
                    }
                    out = next;
                }
            }
        }
        Ok(out)
    }
}

fn set_param(hp: &mut HyperParams, name: &str, value: f64) -> Result<()> {
    match name {
        "alpha" => hp.alpha = value,
        "beta" => hp.beta = value,
        "gamma" => hp.gamma = value,
        "lambda" => hp.lambda_ = value,
        "mu" => hp.mu = value,
        other => return Err(Error::Config(format!("unknown sweep parameter '{other}'"))),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub mu: f64,
    pub all: MapPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub fingerprint: String,
    pub grid: SweepGrid,
    pub split: SplitConfig,
    pub hyper: HyperParams,
    pub rows: Vec<SweepRow>,
}

/// All-class MAP after both phases at every grid point.
pub fn sensitivity_sweep(bundle: &Bundle, hp: &HyperParams, grid: &SweepGrid, split_cfg: SplitConfig, jobs: usize) -> Result<SweepReport> {
    let split = make_split(&bundle.labels, split_cfg.incremental_classes, split_cfg.query_fraction, split_cfg.seed)?;
    let points = grid.points(hp)?;
    let rows = pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|p| {
                let (_, all) = run_pipeline(bundle, &split, p)?;
                Ok(SweepRow {
                    alpha: p.alpha,
                    beta: p.beta,
                    gamma: p.gamma,
                    lambda: p.lambda_,
                    mu: p.mu,
                    all,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fingerprint: fingerprint(&(grid, split_cfg, hp)),
        grid: grid.clone(),
        split: split_cfg,
        hyper: hp.clone(),
        rows,
    })
}

pub fn write_sweep_csv<W: Write>(mut out: W, report: &SweepReport) -> std::io::Result<()> {
    writeln!(out, "alpha,beta,gamma,lambda,mu,i2t,t2i")?;
    for r in &report.rows {
        writeln!(out, "{},{},{},{},{},{},{}", r.alpha, r.beta, r.gamma, r.lambda, r.mu, r.all.i2t, r.all.t2i)?;
    }
    Ok(())
}

/// The lifelong trainer and the frozen-code invariant on one random small
/// configuration; returns the checksums before and after.
pub fn frozen_code_probe(seed: u64) -> Result<((u64, u64), (u64, u64))> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.gen_range(3..=6);
    let bundle = generate(&SynthConfig {
        classes,
        per_class: rng.gen_range(6..=15),
        d_img: rng.gen_range(4..=16),
        d_txt: rng.gen_range(4..=16),
        seed,
        ..SynthConfig::default()
    })?;
    let split = make_split(&bundle.labels, rng.gen_range(1..classes), 0.2, seed)?;
    let hp = HyperParams {
        k: [8, 16, 32][rng.gen_range(0..3)],
        epochs_original: rng.gen_range(0..=2),
        epochs_lifelong: rng.gen_range(1..=3),
        hidden_label: vec![8],
        hidden_image: vec![8],
        hidden_text: vec![8],
        batch_image: rng.gen_range(4..=32),
        batch_text: rng.gen_range(4..=32),
        lr_lifelong: 10f64.powi(rng.gen_range(-7..=-3)),
        seed,
        ..HyperParams::default()
    };
    let original = train_original(&TrainingSet::from_bundle(&bundle, &split.original_indices), &hp)?;
    let before = (original.bx.checksum(), original.by.checksum());
    let ll = train_lifelong(&bundle, &split, &original, &hp)?;
    let after = (original.bx.checksum(), original.by.checksum());
    if ll.frozen_checksum_before != before || ll.frozen_checksum_after != after {
        return Err(Error::Data("trainer checksum log disagrees with the caller's".into()));
    }
    Ok((before, after))
}
