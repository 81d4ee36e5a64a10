//! Region-labeling experts and representing classes.
//!
//! An expert runs `g` manual-vector neurons side by side. Their signs on `x` give a region
//! vector `r`, and the expert predicts a label for `r`. With the table rule the label is
//! learned: on rounds where no neuron's manual bit is set, `table[r]` takes the revealed label.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PointD;
use crate::learners::majority::MajorityTree;
use crate::network::{bits_to_label, RegionVector, SignNetwork};
use crate::perceptron::{manual_vector_in, Embedding, ManualNeuron, ManualVector};
use crate::{ceil_tol, mistake_budget, sign, Label};

/// Default label of a fresh labeler.
pub const DEFAULT_LABEL: Label = 1;

/// Lookup table from region vectors to labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabeler {
    table: HashMap<RegionVector, Label>,
    default_label: Label,
    frozen: bool,
    width: Option<usize>,
}

impl RegionLabeler {
    pub fn new(default_label: Label) -> Self {
        RegionLabeler { table: HashMap::new(), default_label, frozen: false, width: None }
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn default_label(&self) -> Label {
        self.default_label
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, r: &RegionVector) -> Label {
        self.table.get(r).copied().unwrap_or(self.default_label)
    }

    /// Sets `table[r] = label`. Frozen labelers ignore the call and return `false`.
    pub fn set(&mut self, r: RegionVector, label: Label) -> Result<bool> {
        if self.frozen {
            return Ok(false);
        }
        match self.width {
            Some(w) if w != r.len() => return Err(Error::LengthMismatch { expected: w, got: r.len() }),
            None => self.width = Some(r.len()),
            _ => {}
        }
        self.table.insert(r, label);
        Ok(true)
    }
}

/// How an expert turns its region vector into a label.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelRule {
    /// Learned lookup table.
    Table(RegionLabeler),
    /// Fixed rule: the region vector is cut into contiguous blocks, each block is reduced to
    /// one output bit by the majority tree, and the bits form the label code.
    BlockMajority { tree: MajorityTree, blocks: usize },
}

impl LabelRule {
    pub fn fresh_table() -> Self {
        LabelRule::Table(RegionLabeler::new(DEFAULT_LABEL))
    }

    pub fn is_frozen(&self) -> bool {
        match self {
            LabelRule::Table(t) => t.is_frozen(),
            LabelRule::BlockMajority { .. } => true,
        }
    }

    pub fn label(&self, r: &RegionVector) -> Result<Label> {
        match self {
            LabelRule::Table(t) => Ok(t.get(r)),
            LabelRule::BlockMajority { tree, blocks } => {
                let size = tree.leaves();
                if r.len() != size * blocks {
                    return Err(Error::LengthMismatch { expected: size * blocks, got: r.len() });
                }
                let bits = r
                    .bits()
                    .chunks(size)
                    .map(|chunk| tree.eval(chunk))
                    .collect::<Result<Vec<_>>>()?;
                Ok(bits_to_label(&bits))
            }
        }
    }

    fn learn(&mut self, r: RegionVector, y: Label) -> Result<()> {
        if let LabelRule::Table(t) = self {
            t.set(r, y)?;
        }
        Ok(())
    }
}

/// One expert: `g` manual neurons plus a label rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertState {
    neurons: Vec<ManualNeuron>,
    rule: LabelRule,
    embedding: Embedding,
    round: usize,
}

/// Mistake decomposition of a standalone expert run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExpertTally {
    pub rounds: usize,
    pub mistakes: usize,
    /// Mistakes on rounds where some manual bit was set.
    pub first_type: usize,
    /// Mistakes on rounds where every manual bit was clear.
    pub second_type: usize,
}

impl ExpertState {
    /// `dim` is the raw input dimension; the neurons work in `embedding.dim(dim)`.
    pub fn new(manuals: Vec<ManualVector>, dim: usize, rule: LabelRule, embedding: Embedding) -> Result<Self> {
        let horizon = manuals.first().map(ManualVector::horizon).ok_or(Error::EmptyExpertSet)?;
        if let Some(m) = manuals.iter().find(|m| m.horizon() != horizon) {
            return Err(Error::LengthMismatch { expected: horizon, got: m.horizon() });
        }
        let nd = embedding.dim(dim);
        Ok(ExpertState {
            neurons: manuals.into_iter().map(|m| ManualNeuron::new(m, nd)).collect(),
            rule,
            embedding,
            round: 0,
        })
    }

    pub fn neurons(&self) -> &[ManualNeuron] {
        &self.neurons
    }

    pub fn rule(&self) -> &LabelRule {
        &self.rule
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn horizon(&self) -> usize {
        self.neurons[0].horizon()
    }

    fn region(&self, x: &PointD) -> Result<RegionVector> {
        let x = self.embedding.apply(x);
        let bits = self.neurons.iter().map(|n| n.predict(x.coords())).collect::<Result<Vec<_>>>()?;
        Ok(RegionVector::from_bits_unchecked(bits))
    }

    /// True when no neuron updates on the current round.
    pub fn quiet(&self) -> Result<bool> {
        for n in &self.neurons {
            if n.updates_now()? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn predict(&self, x: &PointD) -> Result<Label> {
        self.rule.label(&self.region(x)?)
    }

    /// Learns the label of the current region when no manual bit is set, then advances every
    /// neuron by one round.
    pub fn feedback(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        let r = self.region(x)?;
        if self.quiet()? {
            self.rule.learn(r, y_true)?;
        }
        let ex = self.embedding.apply(x);
        for n in &mut self.neurons {
            n.step(ex.coords())?;
        }
        self.round += 1;
        Ok(())
    }

    /// Plays the expert on a labelled stream on its own.
    pub fn run<'a, I>(&mut self, stream: I) -> Result<ExpertTally>
    where
        I: IntoIterator<Item = (&'a PointD, Label)>,
    {
        let mut tally = ExpertTally::default();
        for (x, y) in stream {
            let quiet = self.quiet()?;
            let y_hat = self.predict(x)?;
            if y_hat != y {
                tally.mistakes += 1;
                if quiet {
                    tally.second_type += 1;
                } else {
                    tally.first_type += 1;
                }
            }
            self.feedback(x, y)?;
            tally.rounds += 1;
        }
        Ok(tally)
    }
}

/// Shape of the neuron sequence `G` within each expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassLayout {
    /// Number of contiguous blocks.
    pub blocks: usize,
    /// Neurons per block.
    pub block_size: usize,
    /// Whether order within a block matters (tuples) or not (multisets).
    pub ordered: bool,
}

impl ClassLayout {
    pub fn multiset(g: usize) -> Self {
        ClassLayout { blocks: 1, block_size: g, ordered: false }
    }

    pub fn neurons(&self) -> usize {
        self.blocks * self.block_size
    }
}

/// The `(g, T)`-representing class: every admissible choice of `g` manual vectors with at most
/// `floor(1/gamma^2)` ones, each paired with a fresh labeler. Members are generated lazily.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentingClass {
    vectors: Vec<ManualVector>,
    layout: ClassLayout,
    horizon: usize,
    budget: usize,
    count: u128,
}

impl RepresentingClass {
    pub fn vectors(&self) -> &[ManualVector] {
        &self.vectors
    }

    pub fn layout(&self) -> ClassLayout {
        self.layout
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn count(&self) -> u128 {
        self.count
    }

    /// Each member as indices into [`Self::vectors`], in lexicographic order.
    pub fn members(&self) -> Members<'_> {
        Members { class: self, current: None, done: self.count == 0 }
    }

    /// One JSON object per line: `{"neurons": ["0101", ...]}`.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            neurons: Vec<&'a ManualVector>,
        }
        for m in self.members() {
            let line = Line { neurons: m.iter().map(|&i| &self.vectors[i]).collect() };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub struct Members<'a> {
    class: &'a RepresentingClass,
    current: Option<Vec<usize>>,
    done: bool,
}

fn floor_at(layout: ClassLayout, cur: &[usize], i: usize) -> usize {
    if layout.ordered || i.is_multiple_of(layout.block_size) {
        0
    } else {
        cur[i - 1]
    }
}

impl Iterator for Members<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let m = self.class.vectors.len();
        let layout = self.class.layout;
        let len = layout.neurons();
        let Some(cur) = self.current.as_mut() else {
            let first = vec![0; len];
            self.current = Some(first.clone());
            return Some(first);
        };
        for i in (0..len).rev() {
            if cur[i] + 1 < m {
                cur[i] += 1;
                for j in i + 1..len {
                    cur[j] = floor_at(layout, cur, j);
                }
                return Some(cur.clone());
            }
        }
        self.done = true;
        None
    }
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// All bit vectors of length `horizon` with at most `budget` ones, by popcount then by the
/// lexicographic order of their one-positions.
pub fn sparse_manual_vectors(horizon: usize, budget: usize) -> Vec<ManualVector> {
    let mut out = Vec::new();
    for ones in 0..=budget.min(horizon) {
        let mut pos: Vec<usize> = (0..ones).collect();
        loop {
            out.push(ManualVector::with_ones(horizon, &pos).expect("positions < horizon"));
            // next combination
            let mut i = ones;
            let mut advanced = false;
            while i > 0 {
                i -= 1;
                if pos[i] < horizon - ones + i {
                    pos[i] += 1;
                    for j in i + 1..ones {
                        pos[j] = pos[j - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    out
}

/// `sum_{i <= budget} C(horizon, i)`, or `None` on overflow.
pub fn sparse_vector_count(horizon: usize, budget: usize) -> Option<u128> {
    (0..=budget.min(horizon)).try_fold(0u128, |acc, i| acc.checked_add(binomial(horizon as u128, i as u128)?))
}

/// Size of a class with the given layout over `m` manual vectors.
pub fn layout_count(m: u128, layout: ClassLayout) -> Option<u128> {
    let per_block = if layout.ordered {
        m.checked_pow(layout.block_size as u32)?
    } else {
        binomial(m.checked_add(layout.block_size as u128)?.checked_sub(1)?, layout.block_size as u128)?
    };
    per_block.checked_pow(layout.blocks as u32)
}

/// Multisets of `g` sparse manual vectors over horizon `t`, each with a fresh labeler.
pub fn enumerate_representing_class(g: usize, t: usize, gamma1: f64, cap: u128) -> Result<RepresentingClass> {
    enumerate_class_with_layout(ClassLayout::multiset(g), t, gamma1, cap)
}

pub fn enumerate_class_with_layout(
    layout: ClassLayout,
    t: usize,
    gamma1: f64,
    cap: u128,
) -> Result<RepresentingClass> {
    if !(gamma1 > 0.0 && gamma1 <= 1.0) {
        return Err(Error::InvalidConfig(format!("gamma {gamma1} outside (0, 1]")));
    }
    if layout.neurons() == 0 || t == 0 {
        return Err(Error::InvalidConfig("g and T must be at least 1".into()));
    }
    let budget = mistake_budget(gamma1);
    let count = sparse_vector_count(t, budget)
        .and_then(|m| layout_count(m, layout))
        .unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::ClassTooLarge { count, cap });
    }
    Ok(RepresentingClass {
        vectors: sparse_manual_vectors(t, budget),
        layout,
        horizon: t,
        budget,
        count,
    })
}

/// `(T^{ceil(1/gamma^2)} + g)^g`, saturating at `u128::MAX`.
pub fn class_size_bound(g: usize, t: usize, gamma1: f64) -> u128 {
    let exp = ceil_tol(1.0 / (gamma1 * gamma1)).max(0.0) as u32;
    (t as u128)
        .checked_pow(exp)
        .and_then(|p| p.checked_add(g as u128))
        .and_then(|b| b.checked_pow(g as u32))
        .unwrap_or(u128::MAX)
}

/// The expert the analysis points to: manual vectors that steer each selected first-layer
/// neuron of `net` along the perceptron run on `sample`, with a fresh table labeler.
pub fn oracle_expert(net: &SignNetwork, sample: &[PointD], selected: &[usize], horizon: usize) -> Result<ExpertState> {
    let planes = net.first_layer_hyperplanes();
    let mut targets = Vec::with_capacity(selected.len());
    for &i in selected {
        let h = planes.get(i).ok_or_else(|| Error::InvalidConfig(format!("no first-layer neuron {i}")))?;
        targets.push(h.clone());
    }
    if targets.is_empty() {
        return Err(Error::EmptyExpertSet);
    }
    let embedding = if targets.iter().any(|h| h.bias() != 0.0) { Embedding::Homogenized } else { Embedding::Raw };
    let manuals = targets
        .iter()
        .map(|h| manual_vector_in(h, sample, horizon, embedding).map(|f| f.manual))
        .collect::<Result<Vec<_>>>()?;
    ExpertState::new(manuals, net.input_dim(), LabelRule::fresh_table(), embedding)
}

/// Distinct region vectors the selected first-layer neurons induce on `sample`.
pub fn realized_regions(net: &SignNetwork, sample: &[PointD], selected: &[usize]) -> Result<usize> {
    let layer = &net.layers()[0];
    let mut seen = HashSet::new();
    for x in sample {
        let r: Vec<i8> = selected
            .iter()
            .map(|&i| {
                let (w, b) = layer.neuron(i);
                sign(crate::dot(w, x.coords()) + b)
            })
            .collect();
        seen.insert(r);
    }
    Ok(seen.len())
}
