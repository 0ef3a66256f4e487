//! Desk-scale transformer encoder classifier with hand-written gradients.
//!
//! Inputs of `d_feature` values are cut into `seq_len` tokens, embedded,
//! passed through pre-norm encoder blocks (multi-head attention, GELU MLP)
//! and a final layer norm; the flattened token states feed a two-layer
//! binary head. In the low-rank regime every attention projection carries
//! a [`LoraAdapter`] and the backbone is frozen.

mod features;
mod io;
mod model;
mod optim;
mod train;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adapt::lora_init;
use crate::error::{invalid, Error, Result};
use crate::seeds;
use crate::{LoraAdapter, Matrix};

pub use features::{export_features, pca_2d, silhouette_score, FeatureExport};
pub use io::{load_checkpoint, save_checkpoint, CheckpointManifest, ManifestEntry, MANIFEST_FILE};
pub use model::{backward, forward, predict_scores, ForwardCache, Grads};
pub use optim::AdamW;
pub use train::{
    cosine_lr, evaluate, pretrain_backbone, train, Pretrained, TrainLogRow, TrainSpec,
};

pub const ATTN_PROJECTIONS: [&str; 4] = ["q", "k", "v", "o"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_feature: usize,
    pub seq_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub mlp_hidden: usize,
    pub head_hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_feature: 128,
            seq_len: 8,
            d_model: 32,
            n_heads: 4,
            n_layers: 2,
            mlp_hidden: 64,
            head_hidden: 32,
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.d_feature,
            self.seq_len,
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.mlp_hidden,
            self.head_hidden,
        ];
        if positive.contains(&0) {
            return invalid("model dimensions must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return invalid(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            ));
        }
        if self.d_feature % self.seq_len != 0 {
            return invalid(format!(
                "d_feature {} not divisible into {} tokens",
                self.d_feature, self.seq_len
            ));
        }
        Ok(())
    }

    pub fn token_dim(&self) -> usize {
        self.d_feature / self.seq_len
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Width of the flattened token states fed to the head.
    pub fn feature_width(&self) -> usize {
        self.seq_len * self.d_model
    }

    /// Expected shape of every backbone and head parameter.
    pub fn parameter_shapes(&self) -> BTreeMap<String, (usize, usize)> {
        let (d, t, s, h) = (
            self.d_model,
            self.token_dim(),
            self.seq_len,
            self.mlp_hidden,
        );
        let mut m = BTreeMap::new();
        m.insert("embed.weight".into(), (d, t));
        m.insert("embed.bias".into(), (1, d));
        m.insert("pos".into(), (s, d));
        for l in 0..self.n_layers {
            let p = |x: &str| format!("layers.{l}.{x}");
            for ln in ["ln1", "ln2"] {
                m.insert(p(&format!("{ln}.gain")), (1, d));
                m.insert(p(&format!("{ln}.bias")), (1, d));
            }
            for proj in ATTN_PROJECTIONS {
                m.insert(p(&format!("attn.{proj}")), (d, d));
            }
            m.insert(p("mlp.fc1.weight"), (h, d));
            m.insert(p("mlp.fc1.bias"), (1, h));
            m.insert(p("mlp.fc2.weight"), (d, h));
            m.insert(p("mlp.fc2.bias"), (1, d));
        }
        m.insert("final_ln.gain".into(), (1, d));
        m.insert("final_ln.bias".into(), (1, d));
        m.insert(
            "head.fc1.weight".into(),
            (self.head_hidden, self.feature_width()),
        );
        m.insert("head.fc1.bias".into(), (1, self.head_hidden));
        m.insert("head.fc2.weight".into(), (1, self.head_hidden));
        m.insert("head.fc2.bias".into(), (1, 1));
        m
    }

    /// Names of the attention projections, the matrix set adapters attach to.
    pub fn attention_matrices(&self) -> Vec<String> {
        (0..self.n_layers)
            .flat_map(|l| {
                ATTN_PROJECTIONS
                    .iter()
                    .map(move |p| format!("layers.{l}.attn.{p}"))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Every weight trains.
    Fft,
    /// Frozen backbone, trainable adapters, layer norms and head.
    Sica,
    /// Only the head trains.
    Probe,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fft" => Ok(Regime::Fft),
            "sica" => Ok(Regime::Sica),
            "probe" => Ok(Regime::Probe),
            other => invalid(format!("unknown regime {other:?}")),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Fft => "fft",
            Regime::Sica => "sica",
            Regime::Probe => "probe",
        })
    }
}

/// Parameter groups, used to decide what a regime trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Norm,
    Head,
    Adapter,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.ends_with(".lora_a") || name.ends_with(".lora_b") {
        ParamGroup::Adapter
    } else if name.starts_with("head.") {
        ParamGroup::Head
    } else if name.contains("ln1.") || name.contains("ln2.") || name.starts_with("final_ln.") {
        ParamGroup::Norm
    } else {
        ParamGroup::Backbone
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub regime: Regime,
    pub params: BTreeMap<String, Matrix>,
    /// Keyed by attention projection name, e.g. `layers.0.attn.q`.
    pub adapters: BTreeMap<String, LoraAdapter>,
    /// Keep layer norms frozen in the low-rank regime.
    pub freeze_norms: bool,
}

/// Low-rank settings for a new adapted checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub rank: usize,
    pub alpha: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            alpha: 16.0,
        }
    }
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("valid std");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

fn init_param(name: &str, shape: (usize, usize), rng: &mut impl Rng) -> Matrix {
    let (r, c) = shape;
    if name.ends_with(".gain") {
        Matrix::from_fn(r, c, |_, _| 1.0)
    } else if name.ends_with(".bias") {
        Matrix::zeros(r, c)
    } else if name == "pos" {
        normal_matrix(r, c, 0.1, rng)
    } else {
        normal_matrix(r, c, 1.0 / (c as f64).sqrt(), rng)
    }
}

impl Checkpoint {
    /// Freshly initialized network, used as the starting point of backbone
    /// pretraining.
    pub fn init(config: &ModelConfig, regime: Regime) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds::rng(seeds::derive(config.seed, "init/backbone"));
        let mut params = BTreeMap::new();
        for (name, shape) in config.parameter_shapes() {
            if name.starts_with("head.") {
                continue;
            }
            params.insert(name.clone(), init_param(&name, shape, &mut rng));
        }
        let mut ck = Self {
            config: config.clone(),
            regime,
            params,
            adapters: BTreeMap::new(),
            freeze_norms: false,
        };
        ck.reset_head(seeds::derive(config.seed, "init/head"));
        Ok(ck)
    }

    /// Re-draws the binary head from `seed`.
    pub fn reset_head(&mut self, seed: u64) {
        let mut rng = seeds::rng(seed);
        for (name, shape) in self.config.parameter_shapes() {
            if name.starts_with("head.") {
                let m = init_param(&name, shape, &mut rng);
                self.params.insert(name, m);
            }
        }
    }

    /// New checkpoint for `regime` on top of a pretrained backbone: fresh
    /// head from `seed`, plus fresh adapters on every attention projection
    /// for the low-rank regime.
    pub fn adapt_from(
        backbone: &Checkpoint,
        regime: Regime,
        adapter: AdapterConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut ck = Checkpoint {
            config: backbone.config.clone(),
            regime,
            params: backbone.params.clone(),
            adapters: BTreeMap::new(),
            freeze_norms: false,
        };
        ck.reset_head(seeds::derive(seed, "head"));
        if regime == Regime::Sica {
            let d = ck.config.d_model;
            for (i, name) in ck.config.attention_matrices().into_iter().enumerate() {
                let ad = lora_init(
                    d,
                    d,
                    adapter.rank,
                    adapter.alpha,
                    seeds::derive_ints(seeds::derive(seed, "adapters"), &[i as u64]),
                )?;
                ck.adapters.insert(name, ad);
            }
        }
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let shapes = self.config.parameter_shapes();
        for (name, &shape) in &shapes {
            match self.params.get(name) {
                None => return invalid(format!("checkpoint is missing {name}")),
                Some(m) if m.shape() != shape => {
                    return invalid(format!(
                        "{name} has shape {:?}, expected {shape:?}",
                        m.shape()
                    ))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.params.keys().find(|k| !shapes.contains_key(*k)) {
            return invalid(format!("unexpected parameter {extra}"));
        }
        let attn = self.config.attention_matrices();
        for (name, ad) in &self.adapters {
            if !attn.contains(name) {
                return invalid(format!("adapter {name} is not on an attention projection"));
            }
            let d = self.config.d_model;
            if ad.dims() != (d, d) {
                return invalid(format!("adapter {name} has dims {:?}", ad.dims()));
            }
        }
        if self.regime == Regime::Sica && self.adapters.len() != attn.len() {
            return invalid("low-rank regime needs an adapter on every attention projection");
        }
        Ok(())
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        match (self.regime, param_group(name)) {
            (_, ParamGroup::Head) => true,
            (Regime::Fft, ParamGroup::Backbone | ParamGroup::Norm) => true,
            (Regime::Sica, ParamGroup::Adapter) => true,
            (Regime::Sica, ParamGroup::Norm) => !self.freeze_norms,
            _ => false,
        }
    }

    /// Names of the trainable parameters in deterministic order.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .params
            .keys()
            .filter(|n| self.is_trainable(n))
            .cloned()
            .collect();
        for proj in self.adapters.keys() {
            for suffix in ["lora_a", "lora_b"] {
                let n = format!("{proj}.{suffix}");
                if self.is_trainable(&n) {
                    names.push(n);
                }
            }
        }
        names.sort();
        names
    }

    /// Any parameter by name, including `<proj>.lora_a` / `<proj>.lora_b`.
    pub fn param(&self, name: &str) -> Option<&Matrix> {
        if let Some(proj) = name.strip_suffix(".lora_a") {
            return self.adapters.get(proj).map(|a| &a.a);
        }
        if let Some(proj) = name.strip_suffix(".lora_b") {
            return self.adapters.get(proj).map(|a| &a.b);
        }
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        if let Some(proj) = name.strip_suffix(".lora_a") {
            return self.adapters.get_mut(proj).map(|a| &mut a.a);
        }
        if let Some(proj) = name.strip_suffix(".lora_b") {
            return self.adapters.get_mut(proj).map(|a| &mut a.b);
        }
        self.params.get_mut(name)
    }

    /// Frozen attention weights, the matrix set analyzed spectrally.
    pub fn attention_weights(&self) -> BTreeMap<String, Matrix> {
        self.config
            .attention_matrices()
            .into_iter()
            .filter_map(|n| self.params.get(&n).map(|m| (n, m.clone())))
            .collect()
    }
}
