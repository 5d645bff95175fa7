use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which label relation supervises training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Cosine of multi-hot label rows.
    #[default]
    MultiLabel,
    /// 1 when two instances share at least one class, else 0.
    SingleLabel,
    /// Unnormalized label dot product (can exceed 1).
    RawDot,
}

/// Every tunable of both training phases. The config file is a flat JSON
/// object using these field names; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "lambda")]
    pub lambda_: f64,
    pub mu: f64,
    pub k: usize,
    pub batch_label: usize,
    pub batch_image: usize,
    pub batch_text: usize,
    pub lr_original: f64,
    pub lr_lifelong: f64,
    pub epochs_original: usize,
    pub epochs_lifelong: usize,
    /// Lifelong training samples drawn from the original set; `None` picks
    /// `min(m, n, 2000)`.
    pub a1: Option<usize>,
    /// Lifelong training samples drawn from the incremental set.
    pub a2: Option<usize>,
    pub dcc_sweeps: usize,
    pub seed: u64,
    pub hidden_label: Vec<usize>,
    pub hidden_image: Vec<usize>,
    pub hidden_text: Vec<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub similarity: SimilarityMode,
    /// Ablation: drop the inter-modality similarity loss.
    pub drop_inter: bool,
    /// Ablation: drop the original-similarity term of the lifelong loss.
    pub drop_old: bool,
    /// Ablation: drop the incremental-similarity term of the lifelong loss.
    pub drop_new: bool,
    /// Lifelong phase: stop the similarity-term gradient at the fitted
    /// outputs, leaving only the quantization and balance paths.
    pub detach_fit: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda_: 1.0,
            mu: 1.0,
            k: 16,
            batch_label: 128,
            batch_image: 128,
            batch_text: 128,
            lr_original: 1e-4,
            lr_lifelong: 1e-6,
            epochs_original: 50,
            epochs_lifelong: 20,
            a1: None,
            a2: None,
            dcc_sweeps: 1,
            seed: 0,
            hidden_label: vec![256],
            hidden_image: vec![512],
            hidden_text: vec![512],
            momentum: 0.0,
            weight_decay: 0.0,
            similarity: SimilarityMode::MultiLabel,
            drop_inter: false,
            drop_old: false,
            drop_new: false,
            detach_fit: false,
        }
    }
}

/// Loss weights tuned per benchmark and task direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_: f64,
    pub mu: f64,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "mirflickr-t2i", alpha: 10.0, beta: 10.0, gamma: 1.0, lambda_: 10.0, mu: 10.0 },
    Preset { name: "mirflickr-i2t", alpha: 10.0, beta: 100.0, gamma: 1.0, lambda_: 10.0, mu: 100.0 },
    Preset { name: "nuswide-t2i", alpha: 10000.0, beta: 12.0, gamma: 1.0, lambda_: 200.0, mu: 50.0 },
    Preset { name: "nuswide-i2t", alpha: 10000.0, beta: 10.0, gamma: 1.0, lambda_: 200.0, mu: 50.0 },
    Preset { name: "wiki-t2i", alpha: 10000.0, beta: 7.0, gamma: 0.6, lambda_: 1000.0, mu: 1.0 },
    Preset { name: "wiki-i2t", alpha: 10000.0, beta: 9.0, gamma: 0.8, lambda_: 200.0, mu: 1.0 },
];

impl HyperParams {
    pub fn preset(name: &str) -> Result<Self> {
        let p = PRESETS
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
        Ok(Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            lambda_: p.lambda_,
            mu: p.mu,
            ..Self::default()
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let hp: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda_),
            ("mu", self.mu),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        for (name, lr) in [("lr_original", self.lr_original), ("lr_lifelong", self.lr_lifelong)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.batch_label == 0 || self.batch_image == 0 || self.batch_text == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.dcc_sweeps == 0 {
            return Err(Error::Config("dcc_sweeps must be >= 1".into()));
        }
        if self.momentum >= 1.0 {
            return Err(Error::Config("momentum must be < 1".into()));
        }
        let hidden = [&self.hidden_label, &self.hidden_image, &self.hidden_text];
        if hidden.iter().any(|h| h.contains(&0)) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Resolves the lifelong sample counts against pool sizes `m` and `n`.
    pub fn sample_counts(&self, m: usize, n: usize) -> Result<(usize, usize)> {
        let default = m.min(n).min(2000);
        let a1 = self.a1.unwrap_or(default);
        let a2 = self.a2.unwrap_or(default);
        if a1 > m || a2 > n {
            return Err(Error::Config(format!(
                "sample counts a1={a1}, a2={a2} exceed pools m={m}, n={n}"
            )));
        }
        Ok((a1, a2))
    }
}
