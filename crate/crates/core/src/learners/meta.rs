//! Weighted majority over a representing class of region-labeling experts.
//!
//! Experts built from the same manual vector run identical neurons, so the pool keeps one
//! neuron per vector in a shared bank and each expert only stores indices into it.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::experts::{enumerate_class_with_layout, ClassLayout, LabelRule, RegionLabeler, RepresentingClass, DEFAULT_LABEL};
use crate::geometry::PointD;
use crate::learners::{Learner, MajorityTree, MetaLearnerConfig, Mode};
use crate::network::RegionVector;
use crate::perceptron::{Embedding, ManualNeuron};
use crate::wm::{WmRound, WmState};
use crate::Label;

enum PoolRule {
    /// One learned table per expert.
    Tables(Vec<RegionLabeler>),
    /// One frozen rule shared by every expert.
    Shared(LabelRule),
}

pub struct MetaLearner {
    config: MetaLearnerConfig,
    class: RepresentingClass,
    bank: Vec<ManualNeuron>,
    members: Vec<Vec<usize>>,
    rule: PoolRule,
    embedding: Embedding,
    wm: WmState,
    expert_mistakes: Vec<usize>,
    pending: Option<Vec<Label>>,
    round: usize,
}

impl std::fmt::Debug for MetaLearner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetaLearner")
            .field("mode", &self.config.mode)
            .field("experts", &self.members.len())
            .field("round", &self.round)
            .field("mistakes", &self.wm.mistakes())
            .finish()
    }
}

/// Multisets of `g` neurons, learned table labelers.
pub fn general_learner(cfg: &MetaLearnerConfig) -> Result<MetaLearner> {
    expect_mode(cfg, Mode::General)?;
    MetaLearner::with_tables(cfg)
}

/// As [`general_learner`]; the default `g` depends on `k` rather than `d`.
pub fn multi_index_learner(cfg: &MetaLearnerConfig) -> Result<MetaLearner> {
    expect_mode(cfg, Mode::MultiIndex)?;
    MetaLearner::with_tables(cfg)
}

/// One block of `g'^L` neurons per output bit and a frozen majority-tree labeler.
pub fn everywhere_margin_learner(cfg: &MetaLearnerConfig) -> Result<MetaLearner> {
    expect_mode(cfg, Mode::EverywhereMargin)?;
    cfg.validate()?;
    let g = cfg.g();
    let tree = MajorityTree::new(g, cfg.depth)?;
    let blocks = cfg.output_bits();
    let layout = ClassLayout { blocks, block_size: tree.leaves(), ordered: cfg.depth > 1 };
    let class = enumerate_class_with_layout(layout, cfg.t_max, cfg.gamma, cfg.class_cap)?;
    MetaLearner::assemble(cfg, class, PoolRule::Shared(LabelRule::BlockMajority { tree, blocks }))
}

fn expect_mode(cfg: &MetaLearnerConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::InvalidConfig(format!("expected mode {mode:?}, got {:?}", cfg.mode)));
    }
    Ok(())
}

impl MetaLearner {
    fn with_tables(cfg: &MetaLearnerConfig) -> Result<Self> {
        cfg.validate()?;
        let class = enumerate_class_with_layout(ClassLayout::multiset(cfg.g()), cfg.t_max, cfg.gamma, cfg.class_cap)?;
        let n = usize::try_from(class.count()).map_err(|_| Error::ClassTooLarge { count: class.count(), cap: cfg.class_cap })?;
        MetaLearner::assemble(cfg, class, PoolRule::Tables(vec![RegionLabeler::new(DEFAULT_LABEL); n]))
    }

    fn assemble(cfg: &MetaLearnerConfig, class: RepresentingClass, rule: PoolRule) -> Result<Self> {
        let embedding = cfg.embedding();
        let dim = embedding.dim(cfg.d);
        let bank = class.vectors().iter().map(|v| ManualNeuron::new(v.clone(), dim)).collect();
        let members: Vec<Vec<usize>> = class.members().collect();
        let wm = WmState::new(members.len())?;
        Ok(MetaLearner {
            config: cfg.clone(),
            expert_mistakes: vec![0; members.len()],
            class,
            bank,
            members,
            rule,
            embedding,
            wm,
            pending: None,
            round: 0,
        })
    }

    pub fn config(&self) -> &MetaLearnerConfig {
        &self.config
    }

    pub fn class(&self) -> &RepresentingClass {
        &self.class
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Mistakes of the weighted vote.
    pub fn mistakes(&self) -> usize {
        self.wm.mistakes()
    }

    pub fn wm(&self) -> &WmState {
        &self.wm
    }

    /// Per-expert mistake counts so far.
    pub fn expert_mistakes(&self) -> &[usize] {
        &self.expert_mistakes
    }

    /// `L*`: fewest mistakes of any expert so far.
    pub fn best_expert_mistakes(&self) -> usize {
        self.expert_mistakes.iter().copied().min().unwrap_or(0)
    }

    /// Bank neuron indices of expert `i`.
    pub fn member(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    /// Every bank neuron's current position: `t` for each neuron equals [`Self::round`].
    pub fn bank_rounds(&self) -> impl Iterator<Item = usize> + '_ {
        self.bank.iter().map(ManualNeuron::round)
    }

    fn bank_signs(&self, x: &PointD) -> Result<Vec<i8>> {
        if x.dim() != self.config.d {
            return Err(Error::DimensionMismatch { expected: self.config.d, got: x.dim() });
        }
        let ex = self.embedding.apply(x);
        self.bank.iter().map(|n| n.predict(ex.coords())).collect()
    }

    fn region(&self, signs: &[i8], i: usize) -> RegionVector {
        RegionVector::from_bits_unchecked(self.members[i].iter().map(|&j| signs[j]).collect())
    }

    /// Every expert's prediction on `x`.
    pub fn expert_predictions(&self, x: &PointD) -> Result<Vec<Label>> {
        let signs = self.bank_signs(x)?;
        (0..self.members.len())
            .map(|i| {
                let r = self.region(&signs, i);
                match &self.rule {
                    PoolRule::Tables(t) => Ok(t[i].get(&r)),
                    PoolRule::Shared(rule) => rule.label(&r),
                }
            })
            .collect()
    }

    /// Plays one full round and reports the vote.
    pub fn step(&mut self, x: &PointD, y_true: Label) -> Result<WmRound> {
        let preds = match self.pending.take() {
            Some(p) => p,
            None => self.expert_predictions(x)?,
        };
        let out = self.wm.round(&preds, y_true)?;
        for (m, &p) in self.expert_mistakes.iter_mut().zip(&preds) {
            if p != y_true {
                *m += 1;
            }
        }
        let signs = self.bank_signs(x)?;
        if let PoolRule::Tables(tables) = &mut self.rule {
            let updates = self.bank.iter().map(ManualNeuron::updates_now).collect::<Result<Vec<bool>>>()?;
            for (i, members) in self.members.iter().enumerate() {
                if members.iter().all(|&j| !updates[j]) {
                    let r = RegionVector::from_bits_unchecked(members.iter().map(|&j| signs[j]).collect());
                    tables[i].set(r, y_true)?;
                }
            }
        }
        let ex = self.embedding.apply(x);
        for n in &mut self.bank {
            n.step(ex.coords())?;
        }
        self.round += 1;
        Ok(out)
    }

    /// Distinct region vectors of expert `i` over `points`, using the current neurons.
    pub fn distinct_regions(&self, i: usize, points: &[PointD]) -> Result<usize> {
        let mut seen = HashSet::new();
        for x in points {
            seen.insert(self.region(&self.bank_signs(x)?, i));
        }
        Ok(seen.len())
    }
}

impl Learner for MetaLearner {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        let preds = self.expert_predictions(x)?;
        let y = self.wm.vote(&preds)?;
        self.pending = Some(preds);
        Ok(y)
    }

    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        self.step(x, y_true).map(|_| ())
    }
}
