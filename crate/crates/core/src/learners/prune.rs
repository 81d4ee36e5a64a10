//! Sampling-based pruning: replace a neuron by the sign-majority of a few of its inputs.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointD;
use crate::learners::MajorityTree;
use crate::network::{Layer, SignNetwork};
use crate::{ceil_tol, sign};

/// `max(1, ceil(1000 * vc/gamma^2 * log2(vc/gamma^2)))`.
pub fn uc_sample_size(vc: f64, gamma: f64) -> u64 {
    let q = vc / (gamma * gamma);
    let v = ceil_tol(1000.0 * q * q.log2());
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v.max(1.0) as u64
    }
}

/// Flips every last-hidden-layer neuron that feeds a negative output weight so all output
/// weights become nonnegative. The function is unchanged away from zero pre-activations.
pub fn canonicalize_nonneg_output(net: &SignNetwork) -> Result<SignNetwork> {
    if net.output_dim() != 1 {
        return Err(Error::MultiOutput(net.output_dim()));
    }
    if net.depth() == 0 {
        return Err(Error::NoHiddenLayer);
    }
    let layers = net.layers();
    let last = layers.len() - 1;
    let out = &layers[last];
    let flips: Vec<bool> = out.weights()[0].iter().map(|&o| o < 0.0).collect();
    let hidden = &layers[last - 1];
    let mut w = hidden.weights().to_vec();
    let mut b = hidden.bias().to_vec();
    for (i, _) in flips.iter().enumerate().filter(|(_, &f)| f) {
        w[i].iter_mut().for_each(|v| *v = -*v);
        b[i] = -b[i];
    }
    let o: Vec<f64> = out.weights()[0].iter().map(|v| v.abs()).collect();
    let mut new_layers = layers[..last - 1].to_vec();
    new_layers.push(Layer::new(w, b)?);
    new_layers.push(Layer::new(vec![o], out.bias().to_vec())?);
    SignNetwork::new(new_layers)
}

/// A selected first-layer neuron; `negated` leaves enter the tree with flipped sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedLeaf {
    pub index: usize,
    pub negated: bool,
}

/// Result of [`prune_deep`]: `g^L` leaves in block order and the tree that combines them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepPrune {
    pub leaves: Vec<PrunedLeaf>,
    pub tree: MajorityTree,
}

impl DeepPrune {
    pub fn indices(&self) -> Vec<usize> {
        self.leaves.iter().map(|l| l.index).collect()
    }

    /// The tree's output on `x` from the net's first-layer signs.
    pub fn eval(&self, net: &SignNetwork, x: &PointD) -> Result<i8> {
        let act = net.forward(x)?;
        self.eval_signs(&act.pre[0])
    }

    fn eval_signs(&self, first: &[f64]) -> Result<i8> {
        let r: Vec<i8> = self
            .leaves
            .iter()
            .map(|l| if l.negated { -sign(first[l.index]) } else { sign(first[l.index]) })
            .collect();
        self.tree.eval(&r)
    }

    /// Number of points of `sample` on which the tree matches the net's output.
    pub fn agreement(&self, net: &SignNetwork, sample: &[PointD]) -> Result<usize> {
        let mut hits = 0;
        for x in sample {
            let act = net.forward(x)?;
            if self.eval_signs(&act.pre[0])? == act.output_bits()[0] {
                hits += 1;
            }
        }
        Ok(hits)
    }
}

/// Samples `g` hidden neurons with probability proportional to their output weight and keeps
/// the draw once their sign-majority reproduces the output on all of `sample`.
pub fn prune_shallow(net: &SignNetwork, sample: &[PointD], g: usize, seed: u64, max_retries: usize) -> Result<Vec<usize>> {
    if net.depth() != 1 {
        return Err(Error::DepthMismatch { expected: 1, got: net.depth() });
    }
    if net.output_dim() != 1 {
        return Err(Error::MultiOutput(net.output_dim()));
    }
    if let Some(index) = net.layers()[1].weights()[0].iter().position(|&o| o < 0.0) {
        return Err(Error::NotCanonical { index });
    }
    Ok(prune_deep(net, sample, g, seed, max_retries)?.indices())
}

/// Applies the shallow step from the output backwards: `g` neurons of the last hidden layer
/// for the output, then `g` neurons one layer down for each of those, and so on.
///
/// Children are drawn with probability proportional to `|weight|`; a child reached through a
/// negative weight enters its block negated. A draw is kept once its block majority matches
/// the parent on all of `sample`. Draws use a deterministic chain of sub-seeds.
pub fn prune_deep(net: &SignNetwork, sample: &[PointD], g: usize, seed: u64, max_retries: usize) -> Result<DeepPrune> {
    if net.output_dim() != 1 {
        return Err(Error::MultiOutput(net.output_dim()));
    }
    if net.depth() == 0 {
        return Err(Error::NoHiddenLayer);
    }
    if sample.is_empty() {
        return Err(Error::EmptySequence);
    }
    let tree = MajorityTree::new(g, net.depth())?;
    // signs[l][x][i]: sign of neuron i of layer l on sample point x
    let acts = sample.iter().map(|x| net.forward(x)).collect::<Result<Vec<_>>>()?;
    let layers = net.layers();
    let signs: Vec<Vec<Vec<i8>>> = (0..layers.len())
        .map(|l| acts.iter().map(|a| a.pre[l].iter().map(|&v| sign(v)).collect()).collect())
        .collect();

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    // (neuron, negated) at the current level, starting from the output neuron
    let mut frontier = vec![PrunedLeaf { index: 0, negated: false }];
    for l in (1..layers.len()).rev() {
        let mut next = Vec::with_capacity(frontier.len() * g);
        for node in &frontier {
            let row = &layers[l].weights()[node.index];
            let dist = WeightedIndex::new(row.iter().map(|w| w.abs()))
                .map_err(|e| Error::InvalidConfig(format!("neuron {} of layer {l}: {e}", node.index)))?;
            let mut accepted = None;
            for _ in 0..max_retries {
                let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
                let draw: Vec<usize> = (0..g).map(|_| dist.sample(&mut rng)).collect();
                let reproduces = (0..sample.len()).all(|s| {
                    let sum: f64 = draw.iter().map(|&i| f64::from(sign(row[i]) * signs[l - 1][s][i])).sum();
                    sign(sum) == signs[l][s][node.index]
                });
                if reproduces {
                    accepted = Some(draw);
                    break;
                }
            }
            let draw = accepted.ok_or(Error::PruneFailed { layer: l, neuron: node.index, retries: max_retries })?;
            next.extend(draw.into_iter().map(|i| PrunedLeaf { index: i, negated: node.negated ^ (row[i] < 0.0) }));
        }
        frontier = next;
    }
    let out = DeepPrune { leaves: frontier, tree };
    let hits = out.agreement(net, sample)?;
    if hits != sample.len() {
        return Err(Error::AuditFailed(format!(
            "pruned tree matches {hits}/{} points; tied blocks at even fan-in",
            sample.len()
        )));
    }
    Ok(out)
}
