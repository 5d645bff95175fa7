//! Synthetic paired image/text data with controllable multi-label
//! structure.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Bundle, FeatureMatrix, LabelMatrix, Modality};
use crate::error::{Error, Result};
use crate::retrieval::average_precision;
use crate::similarity::normalize_rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    /// Instances whose primary class is each class.
    pub per_class: usize,
    pub d_img: usize,
    pub d_txt: usize,
    pub noise_sigma: f64,
    /// Probability of each label-set size.
    pub label_cardinality_probs: BTreeMap<usize, f64>,
    /// Probability that an extra label is the next class after the previous
    /// one (cyclically) rather than a uniformly drawn one.
    pub co_occurrence: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 100,
            d_img: 128,
            d_txt: 64,
            noise_sigma: 0.1,
            label_cardinality_probs: BTreeMap::from([(1, 0.5), (2, 0.3), (3, 0.2)]),
            co_occurrence: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn single_label(classes: usize, per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            label_cardinality_probs: BTreeMap::from([(1, 1.0)]),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("classes must be >= 2, got {}", self.classes)));
        }
        if self.d_img < 2 || self.d_txt < 2 {
            return Err(Error::Config(format!("feature dims must be >= 2, got {} and {}", self.d_img, self.d_txt)));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.co_occurrence) {
            return Err(Error::Config(format!("co_occurrence must be in [0, 1], got {}", self.co_occurrence)));
        }
        let probs = &self.label_cardinality_probs;
        if probs.is_empty() {
            return Err(Error::Config("label_cardinality_probs is empty".into()));
        }
        for (&size, &p) in probs {
            if size == 0 || size > self.classes {
                return Err(Error::Config(format!("label set size {size} outside 1..={}", self.classes)));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Config(format!("probability for size {size} is {p}")));
            }
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("label_cardinality_probs sum to {total}, expected 1")));
        }
        Ok(())
    }
}

fn prototypes(classes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut p = Array2::from_shape_simple_fn((classes, dim), || rng.sample::<f64, _>(StandardNormal));
    let orthogonal = dim >= classes;
    for i in 0..classes {
        if orthogonal {
            for j in 0..i {
                let proj = p.row(i).dot(&p.row(j));
                let pj = p.row(j).to_owned();
                p.row_mut(i).scaled_add(-proj, &pj);
            }
        }
        let norm = p.row(i).dot(&p.row(i)).sqrt();
        p.row_mut(i).mapv_inplace(|v| v / norm);
    }
    p
}

fn label_set(primary: usize, size: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut set = vec![primary];
    while set.len() < size {
        let last = *set.last().expect("non-empty");
        let next = (last + 1) % cfg.classes;
        let pick = if rng.gen_bool(cfg.co_occurrence) && !set.contains(&next) {
            next
        } else {
            let rest: Vec<usize> = (0..cfg.classes).filter(|c| !set.contains(c)).collect();
            *rest.choose(rng).expect("size <= classes")
        };
        set.push(pick);
    }
    set
}

fn feature(classes: &[usize], protos: &Array2<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let mut x = Array1::zeros(protos.ncols());
    for &c in classes {
        x += &protos.row(c);
    }
    let norm = x.dot(&x).sqrt();
    x.mapv_inplace(|v| v / norm);
    if sigma > 0.0 {
        x.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
    }
    x
}

/// Instance `i` has primary class `i / per_class`; each instance draws from
/// its own RNG stream, so output does not depend on generation order.
pub fn generate(cfg: &SynthConfig) -> Result<Bundle> {
    cfg.validate()?;
    let mut proto_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    proto_rng.set_stream(u64::MAX);
    let img_protos = prototypes(cfg.classes, cfg.d_img, &mut proto_rng);
    let txt_protos = prototypes(cfg.classes, cfg.d_txt, &mut proto_rng);
    let (sizes, weights): (Vec<usize>, Vec<f64>) = cfg.label_cardinality_probs.iter().map(|(&s, &p)| (s, p)).unzip();
    let size_dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("label_cardinality_probs: {e}")))?;

    let count = cfg.classes * cfg.per_class;
    let mut img = Array2::zeros((count, cfg.d_img));
    let mut txt = Array2::zeros((count, cfg.d_txt));
    let mut labels = Array2::<u8>::zeros((count, cfg.classes));
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let size = sizes[size_dist.sample(&mut rng)];
        let mut set = label_set(i / cfg.per_class, size, cfg, &mut rng);
        set.sort_unstable();
        for &c in &set {
            labels[[i, c]] = 1;
        }
        img.row_mut(i).assign(&feature(&set, &img_protos, cfg.noise_sigma, &mut rng));
        txt.row_mut(i).assign(&feature(&set, &txt_protos, cfg.noise_sigma, &mut rng));
    }
    let echo = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    Bundle::new(
        FeatureMatrix::new(img, Modality::Image)?,
        FeatureMatrix::new(txt, Modality::Text)?,
        LabelMatrix::new(labels)?,
        Some(echo),
    )
}

/// Per-class mean feature over the instances carrying the class.
fn class_means(features: &FeatureMatrix, labels: &LabelMatrix) -> Result<Array2<f64>> {
    let mut means = Array2::zeros((labels.classes(), features.dim()));
    let mut counts = vec![0usize; labels.classes()];
    for i in 0..labels.rows() {
        for c in labels.row_classes(i) {
            means.row_mut(c).scaled_add(1.0, &features.view().row(i));
            counts[c] += 1;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::Data(format!("class {c} has no instances")));
        }
        means.row_mut(c).mapv_inplace(|v| v / n as f64);
    }
    Ok(means)
}

/// Cosine of each instance to each class mean of its own modality.
fn affinities(features: &FeatureMatrix, labels: &LabelMatrix) -> Result<Array2<f64>> {
    let means = normalize_rows(class_means(features, labels)?.view(), "class mean")?;
    let x = normalize_rows(features.view(), "feature row")?;
    Ok(x.dot(&means.t()))
}

/// Fraction of instances whose closest class mean (by cosine) is one of
/// their labels, the lower of the two modalities.
pub fn nearest_prototype_accuracy(bundle: &Bundle) -> Result<f64> {
    let mut worst = 1.0f64;
    for features in [&bundle.img, &bundle.txt] {
        let aff = affinities(features, &bundle.labels)?;
        let correct = aff
            .outer_iter()
            .enumerate()
            .filter(|(i, row)| bundle.labels.has(*i, argmax(*row)))
            .count();
        worst = worst.min(correct as f64 / bundle.len() as f64);
    }
    Ok(worst)
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMap {
    pub i2t: f64,
    pub t2i: f64,
}

impl OracleMap {
    pub fn min(&self) -> f64 {
        self.i2t.min(self.t2i)
    }
}

/// Cross-modal MAP of a real-valued ranking that needs no training: each
/// modality is mapped to its cosine affinities with the class means, and
/// items are ranked by cosine between affinity vectors. Relevance is a
/// shared class; queries and database are bundle row indices.
pub fn feature_space_oracle(bundle: &Bundle, queries: &[usize], database: &[usize]) -> Result<OracleMap> {
    if queries.is_empty() || database.is_empty() {
        return Err(Error::Data("oracle needs queries and a database".into()));
    }
    let img = normalize_rows(affinities(&bundle.img, &bundle.labels)?.view(), "affinity row")?;
    let txt = normalize_rows(affinities(&bundle.txt, &bundle.labels)?.view(), "affinity row")?;
    let q_labels = bundle.labels.select(queries);
    let d_labels = bundle.labels.select(database);
    let relevance = crate::retrieval::relevance_from_labels(&q_labels, &d_labels)?;
    let map = |q: &Array2<f64>, d: &Array2<f64>| -> Result<f64> {
        let scores = q.select(Axis(0), queries).dot(&d.select(Axis(0), database).t());
        let mut total = 0.0;
        for (i, row) in scores.outer_iter().enumerate() {
            if !relevance.row(i).iter().any(|&r| r) {
                return Err(Error::Data(format!("query {} has no relevant database item", queries[i])));
            }
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            total += average_precision(&order, |j| relevance[[i, j]]);
        }
        Ok(total / queries.len() as f64)
    };
    Ok(OracleMap {
        i2t: map(&img, &txt)?,
        t2i: map(&txt, &img)?,
    })
}
