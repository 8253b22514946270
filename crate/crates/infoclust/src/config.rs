//! Experiment configuration: one JSON document describing the loss
//! composition, transform bindings, head layout, optimizer, and schedule of
//! a run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::math::{LossTerm, LossTermKind};
use crate::model::AdamParams;
use crate::transforms::TransformSpec;

/// Default weight on `H(Y)` inside `mi_xy`; the minimum that keeps clusters
/// evenly filled is dataset-dependent, so this is a tunable.
pub const DEFAULT_LAMBDA: f64 = 4.0;

/// Head layout: `n_primary` heads at the class count plus `n_over`
/// over-clustering heads at `over_k` clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadLayout {
    pub n_primary: usize,
    #[serde(default)]
    pub n_over: usize,
    #[serde(default)]
    pub over_k: usize,
}

impl Default for HeadLayout {
    fn default() -> Self {
        Self {
            n_primary: 1,
            n_over: 0,
            over_k: 0,
        }
    }
}

impl HeadLayout {
    /// Head widths given the dataset's class count: primary heads first.
    pub fn head_widths(&self, n_classes: usize) -> Vec<usize> {
        let mut widths = vec![n_classes; self.n_primary];
        widths.extend(std::iter::repeat(self.over_k).take(self.n_over));
        widths
    }
}

/// Encoder shape knobs (the head stack comes from [`HeadLayout`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub conv_channels: Vec<usize>,
    pub fc_hidden: Option<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![32, 64],
            fc_hidden: Some(128),
        }
    }
}

/// One full experiment: a row of the loss/transform matrix plus plumbing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Vec<LossTerm>,
    /// Named transform chains referenced by `mi_yy`/`kl_reg` terms.
    #[serde(default)]
    pub transforms: BTreeMap<String, Vec<TransformSpec>>,
    #[serde(default)]
    pub heads: HeadLayout,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub optimizer: AdamParams,
    /// Whether the `mi_yy` joint is symmetrized (`(P+Pᵀ)/2`) before the MI.
    #[serde(default = "default_true")]
    pub symmetrize_joint: bool,
    /// Evaluate every this many epochs; the final epoch is always evaluated.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_true() -> bool {
    true
}

fn default_eval_every() -> usize {
    5
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// λ for a `mi_xy` term (explicit value or the default).
    pub fn lambda_for(term: &LossTerm) -> f64 {
        term.lambda.unwrap_or(DEFAULT_LAMBDA)
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss.is_empty() {
            return Err(Error::Config("no loss terms configured".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".to_string()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be ≥ 1".to_string()));
        }
        if self.heads.n_primary == 0 {
            return Err(Error::Config("at least one primary head is required".to_string()));
        }
        if self.heads.n_over > 0 && self.heads.over_k < 2 {
            return Err(Error::Config(
                "over-clustering heads need over_k ≥ 2".to_string(),
            ));
        }

        let mut keys = BTreeSet::new();
        for term in &self.loss {
            if !(term.weight.is_finite() && term.weight >= 0.0) {
                return Err(Error::Config(format!(
                    "term {} has weight {}, expected ≥ 0",
                    term.key(),
                    term.weight
                )));
            }
            if let Some(l) = term.lambda {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(Error::Config(format!("lambda {l} must be ≥ 0")));
                }
            }
            match term.term {
                LossTermKind::MiXy => {
                    if term.transform.is_some() {
                        return Err(Error::Config(
                            "mi_xy takes no transform binding".to_string(),
                        ));
                    }
                }
                LossTermKind::MiYy | LossTermKind::KlReg => {
                    let name = term.transform.as_ref().ok_or_else(|| {
                        Error::Config(format!("term {:?} needs a transform binding", term.term))
                    })?;
                    if !self.transforms.contains_key(name) {
                        return Err(Error::Config(format!(
                            "term references undeclared transform '{name}'"
                        )));
                    }
                }
            }
            if !keys.insert(term.key()) {
                return Err(Error::Config(format!(
                    "duplicate loss term '{}'",
                    term.key()
                )));
            }
        }

        for (name, chain) in &self.transforms {
            if chain.is_empty() {
                return Err(Error::Config(format!("transform '{name}' is empty")));
            }
            for (i, spec) in chain.iter().enumerate() {
                spec.validate()
                    .map_err(|e| Error::Config(format!("transform '{name}': {e}")))?;
                if matches!(spec, TransformSpec::Mixup { .. }) && i + 1 != chain.len() {
                    return Err(Error::Config(format!(
                        "transform '{name}': mixup must be the last step of a chain"
                    )));
                }
            }
        }
        Ok(())
    }
}
