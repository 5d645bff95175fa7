//! Hamming ranking over packed codes and the retrieval metrics computed on
//! top of it.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{HashCodes, LabelMatrix, PackedCodes};
use crate::error::{Error, Result};

const EVAL_CHUNK: usize = 32;

/// Number of differing bits between two packed code rows.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::shape("packed code row", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum())
}

fn check_bits(query: &PackedCodes, database: &PackedCodes) -> Result<()> {
    if query.bits() != database.bits() {
        return Err(Error::shape("code length", database.bits(), query.bits()));
    }
    Ok(())
}

fn distances_from(q: &[u64], database: &PackedCodes) -> Vec<u32> {
    (0..database.rows())
        .map(|j| q.iter().zip(database.row(j)).map(|(x, y)| (x ^ y).count_ones()).sum())
        .collect()
}

/// Stable counting sort by distance: ties keep ascending database order.
fn rank_by_distance(dist: &[u32], bits: usize) -> Vec<usize> {
    let mut starts = vec![0usize; bits + 2];
    for &d in dist {
        starts[d as usize + 1] += 1;
    }
    for i in 1..starts.len() {
        starts[i] += starts[i - 1];
    }
    let mut order = vec![0usize; dist.len()];
    for (j, &d) in dist.iter().enumerate() {
        order[starts[d as usize]] = j;
        starts[d as usize] += 1;
    }
    order
}

/// Per query, database indices by ascending Hamming distance, ties by
/// ascending index.
pub fn rank_database(query: &HashCodes, database: &HashCodes) -> Result<Vec<Vec<usize>>> {
    let (q, db) = (query.pack(), database.pack());
    check_bits(&q, &db)?;
    if db.rows() == 0 {
        return Err(Error::Data("empty retrieval database".into()));
    }
    Ok((0..q.rows())
        .into_par_iter()
        .map(|i| rank_by_distance(&distances_from(q.row(i), &db), db.bits()))
        .collect())
}

/// `relevance[[i, j]]` is true when query `i` and item `j` share a class.
pub fn relevance_from_labels(query_labels: &LabelMatrix, db_labels: &LabelMatrix) -> Result<Array2<bool>> {
    if query_labels.classes() != db_labels.classes() {
        return Err(Error::shape("label classes", db_labels.classes(), query_labels.classes()));
    }
    let (q, d) = (query_labels.view(), db_labels.view());
    Ok(Array2::from_shape_fn((q.nrows(), d.nrows()), |(i, j)| {
        q.row(i).iter().zip(d.row(j)).any(|(&a, &b)| a == 1 && b == 1)
    }))
}

fn check_relevance(rankings: &[Vec<usize>], relevance: &Array2<bool>) -> Result<()> {
    if rankings.len() != relevance.nrows() {
        return Err(Error::shape("relevance rows", rankings.len(), relevance.nrows()));
    }
    for (i, row) in relevance.outer_iter().enumerate() {
        if !row.iter().any(|&r| r) {
            return Err(Error::Data(format!("query {i} has no relevant database item")));
        }
    }
    Ok(())
}

pub fn average_precision(ranking: &[usize], relevant: impl Fn(usize) -> bool) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &j) in ranking.iter().enumerate() {
        if relevant(j) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Mean over queries of average precision over the full ranking.
pub fn mean_average_precision(rankings: &[Vec<usize>], relevance: &Array2<bool>) -> Result<f64> {
    check_relevance(rankings, relevance)?;
    if rankings.is_empty() {
        return Err(Error::Data("no queries".into()));
    }
    let aps: Vec<f64> = rankings
        .par_iter()
        .enumerate()
        .map(|(i, r)| average_precision(r, |j| relevance[[i, j]]))
        .collect();
    Ok(aps.iter().sum::<f64>() / rankings.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

fn add_curve(acc: &mut [(f64, f64)], ranking: &[usize], relevant: impl Fn(usize) -> bool) {
    let total = ranking.iter().filter(|&&j| relevant(j)).count() as f64;
    let mut hits = 0usize;
    for (pos, &j) in ranking.iter().enumerate() {
        if relevant(j) {
            hits += 1;
        }
        acc[pos].0 += hits as f64 / total;
        acc[pos].1 += hits as f64 / (pos + 1) as f64;
    }
}

fn finish_curve(acc: Vec<(f64, f64)>, queries: usize) -> Vec<PrPoint> {
    let q = queries as f64;
    let mut points = Vec::with_capacity(acc.len() + 1);
    if let Some(&(_, p1)) = acc.first() {
        points.push(PrPoint { recall: 0.0, precision: p1 / q });
    }
    points.extend(acc.into_iter().map(|(r, p)| PrPoint {
        recall: r / q,
        precision: p / q,
    }));
    points
}

/// Precision and recall at every cutoff, averaged over queries, preceded by
/// the recall-0 point whose precision is precision@1.
pub fn precision_recall_curve(rankings: &[Vec<usize>], relevance: &Array2<bool>) -> Result<Vec<PrPoint>> {
    check_relevance(rankings, relevance)?;
    let mut acc = vec![(0.0, 0.0); relevance.ncols()];
    for (i, r) in rankings.iter().enumerate() {
        if r.len() != relevance.ncols() {
            return Err(Error::shape("ranking length", relevance.ncols(), r.len()));
        }
        add_curve(&mut acc, r, |j| relevance[[i, j]]);
    }
    Ok(finish_curve(acc, rankings.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusPoint {
    pub radius: u32,
    pub recall: f64,
    pub precision: f64,
}

fn radius_counts(dist: &[u32], bits: usize, relevant: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    // (retrieved, relevant retrieved) at exactly each distance
    let mut at = vec![(0usize, 0usize); bits + 1];
    for (j, &d) in dist.iter().enumerate() {
        at[d as usize].0 += 1;
        if relevant(j) {
            at[d as usize].1 += 1;
        }
    }
    at
}

/// Precision and recall of the items within each Hamming radius `0..=k`,
/// averaged over queries. An empty candidate set has precision 0.
pub fn radius_precision_recall(query: &HashCodes, database: &HashCodes, relevance: &Array2<bool>) -> Result<Vec<RadiusPoint>> {
    let (q, db) = (query.pack(), database.pack());
    check_bits(&q, &db)?;
    check_shape(&q, &db, relevance)?;
    let bits = db.bits();
    let mut acc = vec![(0.0, 0.0); bits + 1];
    for i in 0..q.rows() {
        let dist = distances_from(q.row(i), &db);
        let at = radius_counts(&dist, bits, |j| relevance[[i, j]]);
        let total: usize = at.iter().map(|c| c.1).sum();
        let (mut retrieved, mut hits) = (0usize, 0usize);
        for (r, (n, h)) in at.into_iter().enumerate() {
            retrieved += n;
            hits += h;
            if total > 0 {
                acc[r].0 += hits as f64 / total as f64;
            }
            if retrieved > 0 {
                acc[r].1 += hits as f64 / retrieved as f64;
            }
        }
    }
    let nq = q.rows().max(1) as f64;
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(r, (rec, prec))| RadiusPoint {
            radius: r as u32,
            recall: rec / nq,
            precision: prec / nq,
        })
        .collect())
}

fn check_shape(q: &PackedCodes, db: &PackedCodes, relevance: &Array2<bool>) -> Result<()> {
    if relevance.dim() != (q.rows(), db.rows()) {
        return Err(Error::shape(
            "relevance matrix",
            format!("{:?}", (q.rows(), db.rows())),
            format!("{:?}", relevance.dim()),
        ));
    }
    Ok(())
}

/// Mean precision of hash lookup within `radius`; queries with no
/// candidate contribute 0.
pub fn hash_lookup_precision(query: &HashCodes, database: &HashCodes, relevance: &Array2<bool>, radius: u32) -> Result<f64> {
    let (q, db) = (query.pack(), database.pack());
    check_bits(&q, &db)?;
    check_shape(&q, &db, relevance)?;
    if q.rows() == 0 {
        return Ok(0.0);
    }
    let precisions: Vec<f64> = (0..q.rows())
        .into_par_iter()
        .map(|i| {
            let dist = distances_from(q.row(i), &db);
            let (mut n, mut hits) = (0usize, 0usize);
            for (j, &d) in dist.iter().enumerate() {
                if d <= radius {
                    n += 1;
                    hits += usize::from(relevance[[i, j]]);
                }
            }
            if n == 0 {
                0.0
            } else {
                hits as f64 / n as f64
            }
        })
        .collect();
    Ok(precisions.iter().sum::<f64>() / q.rows() as f64)
}

/// Every metric for one retrieval task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub map: f64,
    pub lookup_radius: u32,
    pub lookup_precision: f64,
    pub queries: usize,
    pub database: usize,
    pub pr_curve: Vec<PrPoint>,
    pub radius_curve: Vec<RadiusPoint>,
}

/// Ranks each query once and accumulates MAP and the PR curve without
/// holding all rankings in memory.
pub fn evaluate(query: &HashCodes, database: &HashCodes, relevance: &Array2<bool>, radius: u32) -> Result<RetrievalReport> {
    let (q, db) = (query.pack(), database.pack());
    check_bits(&q, &db)?;
    check_shape(&q, &db, relevance)?;
    if db.rows() == 0 {
        return Err(Error::Data("empty retrieval database".into()));
    }
    if q.rows() == 0 {
        return Err(Error::Data("no queries".into()));
    }
    for (i, row) in relevance.outer_iter().enumerate() {
        if !row.iter().any(|&r| r) {
            return Err(Error::Data(format!("query {i} has no relevant database item")));
        }
    }
    // Fixed chunks summed in order keep the floating-point result
    // independent of scheduling.
    let rows: Vec<usize> = (0..q.rows()).collect();
    let partials: Vec<(f64, Vec<(f64, f64)>)> = rows
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let mut acc = vec![(0.0, 0.0); db.rows()];
            let mut ap = 0.0;
            for &i in chunk {
                let ranking = rank_by_distance(&distances_from(q.row(i), &db), db.bits());
                let rel = |j: usize| relevance[[i, j]];
                add_curve(&mut acc, &ranking, rel);
                ap += average_precision(&ranking, rel);
            }
            (ap, acc)
        })
        .collect();
    let mut ap_sum = 0.0;
    let mut acc = vec![(0.0, 0.0); db.rows()];
    for (ap, part) in partials {
        ap_sum += ap;
        for (x, y) in acc.iter_mut().zip(part) {
            x.0 += y.0;
            x.1 += y.1;
        }
    }
    Ok(RetrievalReport {
        map: ap_sum / q.rows() as f64,
        lookup_radius: radius,
        lookup_precision: hash_lookup_precision(query, database, relevance, radius)?,
        queries: q.rows(),
        database: db.rows(),
        pr_curve: finish_curve(acc, q.rows()),
        radius_curve: radius_precision_recall(query, database, relevance)?,
    })
}

pub fn write_pr_csv<W: std::io::Write>(mut out: W, curve: &[PrPoint]) -> std::io::Result<()> {
    writeln!(out, "recall,precision")?;
    for p in curve {
        writeln!(out, "{},{}", p.recall, p.precision)?;
    }
    Ok(())
}
