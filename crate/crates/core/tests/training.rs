mod common;

use common::*;
use lifelong_hash::data::{make_split, Bundle, HashCodes, HyperParams, Modality};
use lifelong_hash::lifelong::{lifelong_loss, sample_training_set, train_lifelong, LifelongSide, LifelongWeights};
use lifelong_hash::model::{DatabaseScope, HashModel, QueryScope, Task};
use lifelong_hash::network::NetworkParams;
use lifelong_hash::original::{train_original, TrainingSet};
use lifelong_hash::synth::{generate, SynthConfig};
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_bundle(classes: usize, per_class: usize, seed: u64) -> Bundle {
    generate(&SynthConfig {
        d_img: 12,
        d_txt: 10,
        ..SynthConfig::single_label(classes, per_class, seed)
    })
    .unwrap()
}

fn small_hp(seed: u64) -> HyperParams {
    HyperParams {
        k: 8,
        batch_label: 16,
        batch_image: 16,
        batch_text: 16,
        epochs_original: 5,
        epochs_lifelong: 3,
        hidden_label: vec![8],
        hidden_image: vec![16],
        hidden_text: vec![16],
        seed,
        ..HyperParams::default()
    }
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let bundle = small_bundle(3, 10, 0);
    let data = TrainingSet::from_bundle(&bundle, &(0..bundle.len()).collect::<Vec<_>>());
    let hp = HyperParams { epochs_original: 0, ..small_hp(11) };
    let model = train_original(&data, &hp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    assert_eq!(model.bx, HashCodes::random(30, 8, &mut rng));
    assert_eq!(model.by, HashCodes::random(30, 8, &mut rng));
    assert_eq!(model.img_net, NetworkParams::init(&[12, 16, 8], Modality::Image, 13).unwrap());
    assert_eq!(model.trace.len(), 1);
}

#[test]
fn separable_three_class_loss_decreases() {
    let bundle = small_bundle(3, 20, 1);
    let data = TrainingSet::from_bundle(&bundle, &(0..bundle.len()).collect::<Vec<_>>());
    let hp = HyperParams { epochs_original: 20, ..small_hp(2) };
    let model = train_original(&data, &hp).unwrap();
    let (first, last) = (model.trace[0].total, model.trace.last().unwrap().total);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn original_training_is_deterministic() {
    let bundle = small_bundle(3, 10, 2);
    let data = TrainingSet::from_bundle(&bundle, &(0..bundle.len()).collect::<Vec<_>>());
    let a = train_original(&data, &small_hp(5)).unwrap();
    let b = train_original(&data, &small_hp(5)).unwrap();
    assert_eq!((a.bx, a.by), (b.bx, b.by));
}

#[test]
fn sampling_degenerate_cases() {
    let bundle = small_bundle(4, 10, 3);
    let split = make_split(&bundle.labels, 1, 0.2, 0).unwrap();
    let (m, n) = (split.m(), split.n());
    let (full, labels) = sample_training_set(&split, &bundle.labels, 4, m, n, 9).unwrap();
    assert_eq!(full.original, (0..m).collect::<Vec<_>>());
    assert_eq!(full.incremental, (0..n).collect::<Vec<_>>());
    assert_eq!(labels.rows(), m + n);
    let (only_old, _) = sample_training_set(&split, &bundle.labels, 4, 3, 0, 9).unwrap();
    assert!(only_old.incremental.is_empty());
    assert_eq!(only_old.len(), 3);
    let again = sample_training_set(&split, &bundle.labels, 4, 3, 2, 1).unwrap();
    assert_eq!(again, sample_training_set(&split, &bundle.labels, 4, 3, 2, 1).unwrap());
    assert!(sample_training_set(&split, &bundle.labels, 4, m + 1, 0, 9).is_err());
    let (_, padded) = sample_training_set(&split, &bundle.labels, 6, 2, 2, 9).unwrap();
    assert_eq!(padded.classes(), 6);
}

#[test]
fn lifelong_loss_matches_elementwise_oracle() {
    let mut r = rng(21);
    let (k, m, n, a1, a2) = (4, 6, 3, 2, 2);
    let bx = HashCodes::random(m, k, &mut r);
    let by = HashCodes::random(m, k, &mut r);
    let bxn = HashCodes::random(n, k, &mut r);
    let byn = HashCodes::random(n, k, &mut r);
    let ax = uniform(a1 + a2, k, &mut r);
    let ay = uniform(a1 + a2, k, &mut r);
    let sample_labels = random_labels(a1 + a2, 3, &mut r);
    let to = multi_label_sim(&random_labels(m, 3, &mut r), &sample_labels);
    let ti = multi_label_sim(&random_labels(n, 3, &mut r), &sample_labels);
    let s_to = Array2::from_shape_fn((m, a1 + a2), |(i, j)| to[i][j]);
    let s_ti = Array2::from_shape_fn((n, a1 + a2), |(i, j)| ti[i][j]);
    let map = [2, 0];
    let w = LifelongWeights::new(k, 0.7, 1.3);
    let img = LifelongSide { b_old: &bx, b_new: &bxn, a: ax.view(), out_new: ax.slice(s![a1.., ..]), sample_map: &map };
    let txt = LifelongSide { b_old: &by, b_new: &byn, a: ay.view(), out_new: ay.slice(s![a1.., ..]), sample_map: &map };
    let loss = lifelong_loss(img, txt, s_to.view(), s_ti.view(), w).unwrap();
    let oracle = |b_old: &HashCodes, b_new: &HashCodes, out: &Array2<f64>| {
        lifelong_objective(&LifelongInstance {
            b_old: codes_mat(b_old),
            b_new: codes_mat(b_new),
            out: to_mat(out),
            a1,
            sample_map: map.to_vec(),
            s_to: to.clone(),
            s_ti: ti.clone(),
            k: k as f64,
            lambda: 0.7,
            mu: 1.3,
        })
    };
    let expected = oracle(&bx, &bxn, &ax) + oracle(&by, &byn, &ay);
    assert!((loss.total - expected).abs() <= 1e-10 * expected, "{} vs {expected}", loss.total);
    assert!(loss.old >= 0.0 && loss.new >= 0.0 && loss.quan >= 0.0 && loss.balance >= 0.0);
    assert_eq!(loss.total, loss.old + loss.new + 0.7 * loss.quan + 1.3 * loss.balance);
}

fn lifelong_setup(seed: u64) -> (Bundle, lifelong_hash::data::DatasetSplit, lifelong_hash::original::OriginalModel) {
    let bundle = small_bundle(4, 12, seed);
    let split = make_split(&bundle.labels, 1, 0.2, seed).unwrap();
    let data = TrainingSet::from_bundle(&bundle, &split.original_indices);
    let original = train_original(&data, &small_hp(seed)).unwrap();
    (bundle, split, original)
}

#[test]
fn zero_lifelong_epochs_keep_random_codes() {
    let (bundle, split, original) = lifelong_setup(4);
    let hp = HyperParams { epochs_lifelong: 0, ..small_hp(4) };
    let before = (original.bx.clone(), original.by.clone());
    let ll = train_lifelong(&bundle, &split, &original, &hp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    assert_eq!(ll.bx_new, HashCodes::random(split.n(), 8, &mut rng));
    assert_eq!(ll.by_new, HashCodes::random(split.n(), 8, &mut rng));
    assert_eq!((original.bx, original.by), before);
    assert_eq!(ll.frozen_checksum_before, ll.frozen_checksum_after);
}

#[test]
fn lifelong_training_is_deterministic() {
    let (bundle, split, original) = lifelong_setup(5);
    let a = train_lifelong(&bundle, &split, &original, &small_hp(5)).unwrap();
    let b = train_lifelong(&bundle, &split, &original, &small_hp(5)).unwrap();
    assert_eq!((a.bx_new, a.by_new, a.img_net), (b.bx_new, b.by_new, b.img_net));
    assert_eq!(a.trace.len(), 4);
}

#[test]
fn model_directory_round_trip() {
    let (bundle, split, original) = lifelong_setup(6);
    let hp = small_hp(6);
    let ll = train_lifelong(&bundle, &split, &original, &hp).unwrap();
    let model = HashModel::from_original(original, split, hp.clone()).with_lifelong(ll, hp);
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path(), false).unwrap();
    assert!(model.save(dir.path(), false).is_err());
    model.save(dir.path(), true).unwrap();
    let loaded = HashModel::load(dir.path()).unwrap();
    assert_eq!((&loaded.bx, &loaded.by, &loaded.incremental), (&model.bx, &model.by, &model.incremental));
    assert_eq!(loaded.meta, model.meta);
    let a = model.evaluate(&bundle, Task::I2t, QueryScope::All, DatabaseScope::All, 2).unwrap();
    let b = loaded.evaluate(&bundle, Task::I2t, QueryScope::All, DatabaseScope::All, 2).unwrap();
    assert!((a.report.map - b.report.map).abs() < 0.05);
}

#[test]
fn label_derived_codes_retrieve_perfectly() {
    let bundle = small_bundle(4, 12, 7);
    let rows: Vec<usize> = (0..bundle.len()).collect();
    // One code per class; distinct classes sit exactly 2 bits apart.
    let flat: Vec<i8> = rows
        .iter()
        .flat_map(|&r| {
            let class = bundle.labels.row_classes(r).next().unwrap();
            (0..8).map(move |b| if b == class { 1 } else { -1 })
        })
        .collect();
    let codes = HashCodes::new(Array2::from_shape_vec((rows.len(), 8), flat).unwrap()).unwrap();
    let rel = lifelong_hash::retrieval::relevance_from_labels(&bundle.labels, &bundle.labels).unwrap();
    let r = lifelong_hash::retrieval::evaluate(&codes, &codes, &rel, 1).unwrap();
    assert_eq!(r.map, 1.0);
    assert_eq!(r.lookup_precision, 1.0);
}
