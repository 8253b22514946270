//! The experiment matrix: presets (a)–(w) plus the best-model variants.
//!
//! Each preset names one loss/transform combination:
//!
//! | rows  | loss                                                  |
//! |-------|-------------------------------------------------------|
//! | a–i   | MI(Y,Ỹ) with Geo / VAT / IVAT / Mixup and compositions |
//! | j–n   | MI(Y,Ỹ) on Geo plus KL regularizers                    |
//! | o–v   | MI(X,Y) alone or plus KL regularizers                  |
//! | w     | MI(X,Y) + MI(Y,Ỹ)_Geo + KL(Y‖Y_Geo)                    |
//!
//! `best_1h1o` is row (w); `best_5h5o` is row (w) with 5 primary + 5
//! over-clustering heads. Presets default to MNIST at desk scale (100
//! epochs, batch 256); dataset and schedule are ordinary config fields and
//! can be overridden.

use std::collections::BTreeMap;

use crate::config::{ArchConfig, ExperimentConfig, HeadLayout};
use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::math::{LossTerm, LossTermKind};
use crate::model::AdamParams;
use crate::transforms::TransformSpec;

/// All preset names, in table order.
pub const PRESET_NAMES: [&str; 25] = [
    "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r",
    "s", "t", "u", "v", "w", "best_1h1o", "best_5h5o",
];

/// Default VAT/IVAT radius for MNIST-scale inputs.
pub const DEFAULT_VAT_EPSILON: f64 = 2.5;

fn geo() -> TransformSpec {
    TransformSpec::geometric_default(false)
}

fn vat() -> TransformSpec {
    TransformSpec::Vat {
        epsilon: DEFAULT_VAT_EPSILON,
        power_iterations: 1,
        xi: None,
    }
}

fn ivat() -> TransformSpec {
    TransformSpec::Ivat {
        epsilon: DEFAULT_VAT_EPSILON,
        power_iterations: 1,
        xi: None,
    }
}

fn mix() -> TransformSpec {
    TransformSpec::Mixup { alpha: 0.2 }
}

fn mi_yy(transform: &str) -> LossTerm {
    LossTerm {
        term: LossTermKind::MiYy,
        weight: 1.0,
        transform: Some(transform.to_string()),
        lambda: None,
    }
}

fn mi_xy() -> LossTerm {
    LossTerm {
        term: LossTermKind::MiXy,
        weight: 1.0,
        transform: None,
        lambda: None,
    }
}

fn kl(transform: &str) -> LossTerm {
    LossTerm {
        term: LossTermKind::KlReg,
        weight: 1.0,
        transform: Some(transform.to_string()),
        lambda: None,
    }
}

/// Builds the named preset. Unknown names are an error.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut transforms: BTreeMap<String, Vec<TransformSpec>> = BTreeMap::new();
    let mut bind = |key: &str, chain: Vec<TransformSpec>| {
        transforms.insert(key.to_string(), chain);
    };

    let loss = match name {
        "a" => {
            bind("geo", vec![geo()]);
            vec![mi_yy("geo")]
        }
        "b" => {
            bind("vat", vec![vat()]);
            vec![mi_yy("vat")]
        }
        "c" => {
            bind("ivat", vec![ivat()]);
            vec![mi_yy("ivat")]
        }
        "d" => {
            bind("mixup", vec![mix()]);
            vec![mi_yy("mixup")]
        }
        "e" => {
            bind("geo_vat", vec![geo(), vat()]);
            vec![mi_yy("geo_vat")]
        }
        "f" => {
            bind("geo_ivat", vec![geo(), ivat()]);
            vec![mi_yy("geo_ivat")]
        }
        "g" => {
            bind("geo_mixup", vec![geo(), mix()]);
            vec![mi_yy("geo_mixup")]
        }
        "h" => {
            bind("geo_vat_mixup", vec![geo(), vat(), mix()]);
            vec![mi_yy("geo_vat_mixup")]
        }
        "i" => {
            bind("geo_ivat_mixup", vec![geo(), ivat(), mix()]);
            vec![mi_yy("geo_ivat_mixup")]
        }
        "j" => {
            bind("geo", vec![geo()]);
            bind("vat", vec![vat()]);
            vec![mi_yy("geo"), kl("vat")]
        }
        "k" => {
            bind("geo", vec![geo()]);
            bind("mixup", vec![mix()]);
            vec![mi_yy("geo"), kl("mixup")]
        }
        "l" => {
            bind("geo", vec![geo()]);
            bind("vat", vec![vat()]);
            bind("mixup", vec![mix()]);
            vec![mi_yy("geo"), kl("vat"), kl("mixup")]
        }
        "m" => {
            bind("geo", vec![geo()]);
            bind("ivat", vec![ivat()]);
            bind("mixup", vec![mix()]);
            vec![mi_yy("geo"), kl("ivat"), kl("mixup")]
        }
        "n" => {
            bind("geo", vec![geo()]);
            bind("vat", vec![vat()]);
            bind("vat_geo", vec![geo(), vat()]);
            vec![mi_yy("geo"), kl("vat"), kl("vat_geo")]
        }
        "o" => vec![mi_xy()],
        "p" => {
            bind("geo", vec![geo()]);
            vec![mi_xy(), kl("geo")]
        }
        "q" => {
            bind("vat", vec![vat()]);
            vec![mi_xy(), kl("vat")]
        }
        "r" => {
            bind("mixup", vec![mix()]);
            vec![mi_xy(), kl("mixup")]
        }
        "s" => {
            bind("geo", vec![geo()]);
            bind("vat", vec![vat()]);
            vec![mi_xy(), kl("geo"), kl("vat")]
        }
        "t" => {
            bind("geo", vec![geo()]);
            bind("mixup", vec![mix()]);
            vec![mi_xy(), kl("geo"), kl("mixup")]
        }
        "u" => {
            bind("vat", vec![vat()]);
            bind("mixup", vec![mix()]);
            vec![mi_xy(), kl("vat"), kl("mixup")]
        }
        "v" => {
            bind("geo", vec![geo()]);
            bind("vat", vec![vat()]);
            bind("mixup", vec![mix()]);
            vec![mi_xy(), kl("geo"), kl("vat"), kl("mixup")]
        }
        "w" | "best_1h1o" | "best_5h5o" => {
            bind("geo", vec![geo()]);
            vec![mi_xy(), mi_yy("geo"), kl("geo")]
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };

    let heads = if name == "best_5h5o" {
        HeadLayout {
            n_primary: 5,
            n_over: 5,
            over_k: 50,
        }
    } else {
        HeadLayout::default()
    };

    let cfg = ExperimentConfig {
        name: name.to_string(),
        dataset: DatasetConfig::Mnist,
        seed: 0,
        epochs: 100,
        batch_size: 256,
        loss,
        transforms,
        heads,
        arch: ArchConfig::default(),
        optimizer: AdamParams::default(),
        symmetrize_joint: true,
        eval_every: 5,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Row (a) adapted to the synthetic blob dataset: the fast end-to-end
/// sanity configuration. Blob images are reshaped Gaussian vectors, so the
/// crops stay gentle and photometric jitter stays off; over-clustering
/// heads push past the two-cluster local optimum.
pub fn blob_oracle() -> ExperimentConfig {
    let mut cfg = preset("a").expect("row (a) exists");
    cfg.name = "a-blobs".to_string();
    cfg.dataset = DatasetConfig::default_blobs();
    cfg.epochs = 50;
    cfg.batch_size = 32;
    cfg.arch = ArchConfig {
        conv_channels: vec![16, 32],
        fc_hidden: Some(64),
    };
    cfg.heads = HeadLayout {
        n_primary: 5,
        n_over: 5,
        over_k: 6,
    };
    cfg.optimizer.learning_rate = 5e-3;
    cfg.transforms.insert(
        "geo".to_string(),
        vec![TransformSpec::Geometric {
            crop_min: 0.9,
            crop_max: 1.0,
            scale_set: Vec::new(),
            flip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
        }],
    );
    cfg
}
