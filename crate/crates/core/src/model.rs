//! Trained model directory and the retrieval evaluation built on it.
//!
//! Layout: `params_{label,img,txt}.bin`, `codes_{bx,by}.bin`, after the
//! lifelong phase also `codes_{bxp,byp}.bin`, and `meta.json`.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Bundle, DatasetSplit, HashCodes, HyperParams, Modality, PackedCodes};
use crate::error::{Error, Result};
use crate::lifelong::{LifelongModel, TrainingSample};
use crate::network::{NetworkManifest, NetworkParams};
use crate::original::OriginalModel;
use crate::retrieval::{evaluate, relevance_from_labels, RetrievalReport};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifelongMeta {
    pub sample: TrainingSample,
    pub frozen_checksum_before: (u64, u64),
    pub frozen_checksum_after: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub schema_version: u32,
    pub k: usize,
    pub hyper: HyperParams,
    pub split: DatasetSplit,
    pub label_net: NetworkManifest,
    pub img_net: NetworkManifest,
    pub txt_net: NetworkManifest,
    pub lifelong: Option<LifelongMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    pub meta: ModelMeta,
    pub label_net: NetworkParams,
    pub img_net: NetworkParams,
    pub txt_net: NetworkParams,
    /// Codes of the original items, in `split.original_indices` order.
    pub bx: HashCodes,
    pub by: HashCodes,
    /// Codes of the incremental items once the lifelong phase has run.
    pub incremental: Option<(HashCodes, HashCodes)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Image queries against text database codes.
    I2t,
    T2i,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::I2t => "i2t",
            Task::T2i => "t2i",
        })
    }
}

/// Which queries to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryScope {
    /// Queries carrying only original classes.
    OriginalClasses,
    /// Queries carrying at least one incremental class.
    IncrementalClasses,
    All,
}

/// Which retrieval items form the database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatabaseScope {
    Original,
    /// Original items followed by incremental items. Without lifelong codes
    /// the incremental items are coded by the current networks.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub queries: QueryScope,
    pub database: DatabaseScope,
    #[serde(flatten)]
    pub report: RetrievalReport,
}

impl HashModel {
    pub fn from_original(original: OriginalModel, split: DatasetSplit, hyper: HyperParams) -> Self {
        let meta = ModelMeta {
            schema_version: MODEL_SCHEMA_VERSION,
            k: hyper.k,
            hyper,
            split,
            label_net: original.label_net.manifest(),
            img_net: original.img_net.manifest(),
            txt_net: original.txt_net.manifest(),
            lifelong: None,
        };
        Self {
            meta,
            label_net: original.label_net,
            img_net: original.img_net,
            txt_net: original.txt_net,
            bx: original.bx,
            by: original.by,
            incremental: None,
        }
    }

    /// The original-phase view the lifelong trainer starts from. Traces are
    /// not stored in the model directory and come back empty.
    pub fn original(&self) -> OriginalModel {
        OriginalModel {
            label_net: self.label_net.clone(),
            img_net: self.img_net.clone(),
            txt_net: self.txt_net.clone(),
            bx: self.bx.clone(),
            by: self.by.clone(),
            trace: Vec::new(),
        }
    }

    pub fn with_lifelong(mut self, lifelong: LifelongModel, hyper: HyperParams) -> Self {
        self.meta.img_net = lifelong.img_net.manifest();
        self.meta.txt_net = lifelong.txt_net.manifest();
        self.meta.hyper = hyper;
        self.meta.lifelong = Some(LifelongMeta {
            sample: lifelong.sample,
            frozen_checksum_before: lifelong.frozen_checksum_before,
            frozen_checksum_after: lifelong.frozen_checksum_after,
        });
        self.img_net = lifelong.img_net;
        self.txt_net = lifelong.txt_net;
        self.incremental = Some((lifelong.bx_new, lifelong.by_new));
        self
    }

    /// `sign` of the network output for every row of `features`.
    pub fn encode(&self, modality: Modality, features: ndarray::ArrayView2<'_, f64>) -> Result<HashCodes> {
        let net = match modality {
            Modality::Image => &self.img_net,
            Modality::Text => &self.txt_net,
            Modality::Label => &self.label_net,
        };
        Ok(HashCodes::from_signs(net.forward(features)?.view()))
    }

    /// Database codes of both modalities and the bundle rows they stand for.
    pub fn database(&self, bundle: &Bundle, scope: DatabaseScope) -> Result<(HashCodes, HashCodes, Vec<usize>)> {
        let split = &self.meta.split;
        let mut rows = split.original_indices.clone();
        if scope == DatabaseScope::Original {
            return Ok((self.bx.clone(), self.by.clone(), rows));
        }
        let inc = &split.incremental_indices;
        let (bxp, byp) = match &self.incremental {
            Some((x, y)) => (x.clone(), y.clone()),
            None => (
                self.encode(Modality::Image, bundle.img.view().select(ndarray::Axis(0), inc).view())?,
                self.encode(Modality::Text, bundle.txt.view().select(ndarray::Axis(0), inc).view())?,
            ),
        };
        rows.extend_from_slice(inc);
        Ok((self.bx.concat(&bxp)?, self.by.concat(&byp)?, rows))
    }

    pub fn evaluate(
        &self,
        bundle: &Bundle,
        task: Task,
        queries: QueryScope,
        database: DatabaseScope,
        radius: u32,
    ) -> Result<TaskReport> {
        let split = &self.meta.split;
        if bundle.len() != split.query_indices.len() + split.retrieval_indices.len() {
            return Err(Error::Data(format!(
                "bundle has {} rows but the model's split covers {}",
                bundle.len(),
                split.query_indices.len() + split.retrieval_indices.len()
            )));
        }
        let q_rows = match queries {
            QueryScope::All => split.query_indices.clone(),
            QueryScope::OriginalClasses => split.original_class_queries(&bundle.labels),
            QueryScope::IncrementalClasses => {
                let original = split.original_class_queries(&bundle.labels);
                split.query_indices.iter().copied().filter(|q| !original.contains(q)).collect()
            }
        };
        let (db_x, db_y, db_rows) = self.database(bundle, database)?;
        let (q_codes, db_codes) = match task {
            Task::I2t => (self.encode(Modality::Image, bundle.img.view().select(ndarray::Axis(0), &q_rows).view())?, db_y),
            Task::T2i => (self.encode(Modality::Text, bundle.txt.view().select(ndarray::Axis(0), &q_rows).view())?, db_x),
        };
        let relevance = relevance_from_labels(&bundle.labels.select(&q_rows), &bundle.labels.select(&db_rows))?;
        Ok(TaskReport {
            task,
            queries,
            database,
            report: evaluate(&q_codes, &db_codes, &relevance, radius)?,
        })
    }

    pub fn save(&self, dir: &Path, force: bool) -> Result<()> {
        prepare_output_dir(dir, force)?;
        write(&dir.join("params_label.bin"), &self.label_net.to_bytes())?;
        write(&dir.join("params_img.bin"), &self.img_net.to_bytes())?;
        write(&dir.join("params_txt.bin"), &self.txt_net.to_bytes())?;
        write(&dir.join("codes_bx.bin"), &self.bx.pack().to_bytes())?;
        write(&dir.join("codes_by.bin"), &self.by.pack().to_bytes())?;
        for name in ["codes_bxp.bin", "codes_byp.bin"] {
            let path = dir.join(name);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        if let Some((x, y)) = &self.incremental {
            write(&dir.join("codes_bxp.bin"), &x.pack().to_bytes())?;
            write(&dir.join("codes_byp.bin"), &y.pack().to_bytes())?;
        }
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json(dir, e))?;
        write(&dir.join("meta.json"), meta.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("meta.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if meta.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Data(format!("unsupported model schema version {}", meta.schema_version)));
        }
        let net = |name: &str, manifest: &NetworkManifest| -> Result<NetworkParams> {
            NetworkParams::from_bytes(manifest, &read(&dir.join(name))?)
        };
        let codes = |name: &str, rows: usize| -> Result<HashCodes> {
            let packed = PackedCodes::from_bytes(&read(&dir.join(name))?)?;
            if packed.rows() != rows || packed.bits() != meta.k {
                return Err(Error::Data(format!(
                    "{name} holds {} x {} codes, expected {rows} x {}",
                    packed.rows(),
                    packed.bits(),
                    meta.k
                )));
            }
            Ok(packed.unpack())
        };
        let (m, n) = (meta.split.m(), meta.split.n());
        let incremental = if meta.lifelong.is_some() {
            Some((codes("codes_bxp.bin", n)?, codes("codes_byp.bin", n)?))
        } else {
            None
        };
        Ok(Self {
            label_net: net("params_label.bin", &meta.label_net)?,
            img_net: net("params_img.bin", &meta.img_net)?,
            txt_net: net("params_txt.bin", &meta.txt_net)?,
            bx: codes("codes_bx.bin", m)?,
            by: codes("codes_by.bin", m)?,
            incremental,
            meta,
        })
    }
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if occupied && !force {
            return Err(Error::Config(format!("{} exists and is not empty (use --force to overwrite)", dir.display())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
