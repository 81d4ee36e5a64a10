//! Online learners: the learner interface, the expert-pool meta-learner in its three
//! instantiations, majority trees, and sampling-based pruning.

pub mod majority;
pub mod meta;
pub mod prune;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ts_upper_bound, PointD};
use crate::perceptron::{Embedding, ManualNeuron, ManualVector};
use crate::{ceil_tol, sign, Label};

pub use majority::{majority_tree_eval, MajorityTree};
pub use meta::{everywhere_margin_learner, general_learner, multi_index_learner, MetaLearner};
pub use prune::{canonicalize_nonneg_output, prune_deep, prune_shallow, uc_sample_size, DeepPrune, PrunedLeaf};

/// A deterministic online learner. `receive` is called once per round, after `predict`.
pub trait Learner {
    fn predict(&mut self, x: &PointD) -> Result<Label>;
    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()>;
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        (**self).predict(x)
    }

    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        (**self).receive(x, y_true)
    }
}

/// Which meta-learner instantiation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    General,
    MultiIndex,
    EverywhereMargin,
}

fn default_depth() -> usize {
    1
}

fn default_labels() -> usize {
    2
}

fn default_cap() -> u128 {
    1_000_000
}

/// Parameters shared by the three instantiations.
///
/// `gamma` is the first-layer margin for `general` and `multi_index`, and the margin over all
/// neurons for `everywhere_margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaLearnerConfig {
    pub mode: Mode,
    pub gamma: f64,
    pub d: usize,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(rename = "L", default = "default_depth")]
    pub depth: usize,
    #[serde(rename = "Y", default = "default_labels")]
    pub labels: usize,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    #[serde(default)]
    pub g_override: Option<usize>,
    #[serde(default = "default_cap")]
    pub class_cap: u128,
    #[serde(default)]
    pub seed: u64,
    /// Run the expert neurons on `(x, 1)/sqrt(2)` so biased first-layer neurons are covered.
    #[serde(default)]
    pub homogenize: bool,
}

impl MetaLearnerConfig {
    pub fn new(mode: Mode, gamma: f64, d: usize, t_max: usize) -> Self {
        MetaLearnerConfig {
            mode,
            gamma,
            d,
            k: None,
            depth: 1,
            labels: 2,
            t_max,
            g_override: None,
            class_cap: default_cap(),
            seed: 0,
            homogenize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.t_max == 0 {
            return bad("T_max must be at least 1".into());
        }
        if self.depth == 0 {
            return bad("L must be at least 1".into());
        }
        if self.labels == 0 {
            return bad("Y must be at least 1".into());
        }
        if self.g_override == Some(0) {
            return bad("g_override must be at least 1".into());
        }
        match (self.mode, self.k) {
            (Mode::MultiIndex, None) => bad("multi_index mode needs k".into()),
            (_, Some(k)) if k == 0 || k > self.d => bad(format!("k = {k} must lie in [1, d = {}]", self.d)),
            _ => Ok(()),
        }
    }

    pub fn embedding(&self) -> Embedding {
        if self.homogenize {
            Embedding::Homogenized
        } else {
            Embedding::Raw
        }
    }

    /// Number of output bits, `ceil(log2 Y)` and at least 1.
    pub fn output_bits(&self) -> usize {
        output_bits(self.labels)
    }

    /// Neurons per expert (per output block in everywhere-margin mode).
    pub fn g(&self) -> usize {
        if let Some(g) = self.g_override {
            return g;
        }
        match self.mode {
            Mode::General => ts_g(self.d, self.gamma),
            Mode::MultiIndex => ts_g(self.k.unwrap_or(self.d), self.gamma),
            Mode::EverywhereMargin => everywhere_g(self.labels, self.gamma, self.depth),
        }
    }
}

pub(crate) fn output_bits(labels: usize) -> usize {
    let mut bits = 0;
    while (1usize << bits) < labels {
        bits += 1;
    }
    bits.max(1)
}

/// `ceil((1.5/gamma)^dim)`, the packing upper bound standing in for the uncomputable packing number.
fn ts_g(dim: usize, gamma: f64) -> usize {
    let v = ceil_tol(ts_upper_bound(dim, gamma));
    if v >= usize::MAX as f64 {
        usize::MAX
    } else {
        v.max(1.0) as usize
    }
}

/// `max(1, ceil(log2 Y / gamma^{4L} * log2(1/gamma^L)))`, the block size with unit constant.
pub fn everywhere_g(labels: usize, gamma: f64, depth: usize) -> usize {
    let l = depth as f64;
    let y = (labels.max(2) as f64).log2();
    let v = ceil_tol(y / gamma.powf(4.0 * l) * (1.0 / gamma.powf(l)).log2());
    if v >= usize::MAX as f64 {
        usize::MAX
    } else {
        v.max(1.0) as usize
    }
}

/// Builds the learner the config describes.
pub fn build_learner(cfg: &MetaLearnerConfig) -> Result<MetaLearner> {
    match cfg.mode {
        Mode::General => general_learner(cfg),
        Mode::MultiIndex => multi_index_learner(cfg),
        Mode::EverywhereMargin => everywhere_margin_learner(cfg),
    }
}

/// Always predicts the same label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantLearner(pub Label);

impl Learner for ConstantLearner {
    fn predict(&mut self, _x: &PointD) -> Result<Label> {
        Ok(self.0)
    }

    fn receive(&mut self, _x: &PointD, _y: Label) -> Result<()> {
        Ok(())
    }
}

/// Binary perceptron on labels `{1, 2}`: predicts 2 when `<w, x> >= 0`, updates on mistakes.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronLearner {
    w: Vec<f64>,
    embedding: Embedding,
    mistakes: usize,
}

impl PerceptronLearner {
    pub fn new(dim: usize, embedding: Embedding) -> Self {
        PerceptronLearner { w: vec![0.0; embedding.dim(dim)], embedding, mistakes: 0 }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn mistakes(&self) -> usize {
        self.mistakes
    }

    fn side(&self, x: &PointD) -> Result<i8> {
        let x = self.embedding.apply(x);
        if x.dim() != self.w.len() {
            return Err(Error::DimensionMismatch { expected: self.w.len(), got: x.dim() });
        }
        Ok(sign(crate::dot(&self.w, x.coords())))
    }
}

impl Learner for PerceptronLearner {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        Ok(if self.side(x)? > 0 { 2 } else { 1 })
    }

    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        let y = match y_true {
            1 => -1.0,
            2 => 1.0,
            other => return Err(Error::NonBinaryLabel(other)),
        };
        if f64::from(self.side(x)?) != y {
            self.mistakes += 1;
            let ex = self.embedding.apply(x);
            for (wi, xi) in self.w.iter_mut().zip(ex.coords()) {
                *wi += y * xi;
            }
        }
        Ok(())
    }
}

/// One manual neuron wrapped as a binary learner. Handy for replaying a fixed update schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ManualLearner {
    neuron: ManualNeuron,
    embedding: Embedding,
}

impl ManualLearner {
    pub fn new(manual: ManualVector, dim: usize, embedding: Embedding) -> Self {
        ManualLearner { neuron: ManualNeuron::new(manual, embedding.dim(dim)), embedding }
    }
}

impl Learner for ManualLearner {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        let s = self.neuron.predict(self.embedding.apply(x).coords())?;
        Ok(if s > 0 { 2 } else { 1 })
    }

    fn receive(&mut self, x: &PointD, _y: Label) -> Result<()> {
        self.neuron.step(self.embedding.apply(x).coords())?;
        Ok(())
    }
}
