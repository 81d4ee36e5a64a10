//! Sign-activation feedforward networks.
//!
//! Layer `l` maps `x^(l)` to `x^(l+1) = sign(W^(l) x^(l) + b^(l)) / sqrt(d_{l+1})`, so every
//! activation vector after the input has unit norm. The input is passed through untouched.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Hyperplane, PointD, TsPacking};
use crate::{dot, norm, sign, Label, TOL};

/// One affine layer: a `rows x cols` weight matrix with unit-norm rows, plus biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerDocument", into = "LayerDocument")]
pub struct Layer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDocument {
    #[serde(rename = "W")]
    weights: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<LayerDocument> for Layer {
    type Error = Error;
    fn try_from(d: LayerDocument) -> Result<Self> {
        Layer::new(d.weights, d.b)
    }
}

impl From<Layer> for LayerDocument {
    fn from(l: Layer) -> Self {
        LayerDocument { weights: l.weights, b: l.bias }
    }
}

impl Layer {
    /// Rows whose norm is already 1 within `1e-9` are kept bit-for-bit; others are rescaled.
    /// Biases are left alone.
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if bias.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: weights.len(), got: bias.len() });
        }
        let cols = weights[0].len();
        if cols == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut rows = Vec::with_capacity(weights.len());
        for row in weights {
            if row.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: row.len() });
            }
            let n = norm(&row);
            if !n.is_finite() || n <= 0.0 {
                return Err(Error::ZeroNormal);
            }
            if (n - 1.0).abs() > TOL {
                rows.push(row.iter().map(|w| w / n).collect());
            } else {
                rows.push(row);
            }
        }
        Ok(Layer { weights: rows, bias })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn inputs(&self) -> usize {
        self.weights[0].len()
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    pub fn neuron(&self, i: usize) -> (&[f64], f64) {
        (&self.weights[i], self.bias[i])
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| dot(w, x) + b).collect()
    }
}

/// A network with `L` hidden layers and architecture `(d_0, ..., d_{L+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDocument", into = "NetworkDocument")]
pub struct SignNetwork {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    architecture: Vec<usize>,
    layers: Vec<Layer>,
}

impl TryFrom<NetworkDocument> for SignNetwork {
    type Error = Error;
    fn try_from(d: NetworkDocument) -> Result<Self> {
        let net = SignNetwork::new(d.layers)?;
        if net.architecture() != d.architecture {
            return Err(Error::Malformed(format!(
                "architecture {:?} does not match layers {:?}",
                d.architecture,
                net.architecture()
            )));
        }
        Ok(net)
    }
}

impl From<SignNetwork> for NetworkDocument {
    fn from(n: SignNetwork) -> Self {
        NetworkDocument { architecture: n.architecture(), layers: n.layers }
    }
}

/// Everything the forward pass computes.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// `x^(0), ..., x^(L+1)`; entries of `x^(l)` for `l >= 1` are `+-1/sqrt(d_l)`.
    pub layers: Vec<Vec<f64>>,
    /// Pre-activations of layers `1..=L+1`; `pre[l]` feeds `layers[l + 1]`.
    pub pre: Vec<Vec<f64>>,
}

impl Activations {
    /// Output signs in `{+-1}^{d_out}`.
    pub fn output_bits(&self) -> Vec<i8> {
        self.pre.last().expect("at least one layer").iter().map(|&v| sign(v)).collect()
    }
}

impl SignNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ZeroDimension);
        }
        for pair in layers.windows(2) {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::DimensionMismatch { expected: pair[0].outputs(), got: pair[1].inputs() });
            }
        }
        Ok(SignNetwork { layers })
    }

    /// Random network with Gaussian rows, zero biases, and the given architecture.
    pub fn random(architecture: &[usize], seed: u64) -> Result<Self> {
        if architecture.len() < 2 || architecture.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad architecture {architecture:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = architecture
            .windows(2)
            .map(|w| {
                let rows = (0..w[1]).map(|_| gaussian_unit(&mut rng, w[0])).collect();
                Layer::new(rows, vec![0.0; w[1]])
            })
            .collect::<Result<Vec<_>>>()?;
        SignNetwork::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut a = vec![self.layers[0].inputs()];
        a.extend(self.layers.iter().map(Layer::outputs));
        a
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn first_layer_hyperplanes(&self) -> Vec<Hyperplane> {
        let l = &self.layers[0];
        (0..l.outputs())
            .map(|i| Hyperplane::from_parts_unchecked(l.weights[i].clone(), l.bias[i]))
            .collect()
    }

    pub fn forward(&self, x: &PointD) -> Result<Activations> {
        self.forward_raw(x.coords())
    }

    pub(crate) fn forward_raw(&self, x: &[f64]) -> Result<Activations> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        layers.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.pre_activation(layers.last().expect("pushed"));
            let scale = 1.0 / (z.len() as f64).sqrt();
            layers.push(z.iter().map(|&v| f64::from(sign(v)) * scale).collect());
            pre.push(z);
        }
        Ok(Activations { layers, pre })
    }

    pub fn output_bits(&self, x: &PointD) -> Result<Vec<i8>> {
        Ok(self.forward(x)?.output_bits())
    }

    pub fn label_of(&self, x: &PointD) -> Result<Label> {
        Ok(bits_to_label(&self.output_bits(x)?))
    }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Binary code of the output signs, `+1 -> 1`, most significant bit first, 1-based.
pub fn bits_to_label(bits: &[i8]) -> Label {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b > 0)) + 1
}

/// Inverse of [`bits_to_label`] for a code of `width` bits.
pub fn label_to_bits(label: Label, width: usize) -> Vec<i8> {
    let code = label.saturating_sub(1);
    (0..width).rev().map(|i| if (code >> i) & 1 == 1 { 1 } else { -1 }).collect()
}

/// A sign pattern in `{+-1}^g`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionVector(Vec<i8>);

impl RegionVector {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b != 1 && b != -1) {
            return Err(Error::Malformed(format!("region entry {b} is not +-1")));
        }
        Ok(RegionVector(bits))
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<i8>) -> Self {
        RegionVector(bits)
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `r_i = sign(<w_i, x> + b_i)`.
pub fn region_vector(planes: &[Hyperplane], x: &PointD) -> Result<RegionVector> {
    planes
        .iter()
        .map(|h| {
            if h.dim() != x.dim() {
                Err(Error::DimensionMismatch { expected: x.dim(), got: h.dim() })
            } else {
                Ok(h.side(x.coords()))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(RegionVector)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Margins {
    /// Minimum over first-layer neurons.
    pub gamma1: f64,
    /// Minimum over every neuron, output layer included.
    pub gamma: f64,
    /// `per_neuron[l][i] = min_x |<W^(l,i), x^(l)> + b^(l)_i|`.
    pub per_neuron: Vec<Vec<f64>>,
}

pub fn margins(net: &SignNetwork, sample: &[PointD]) -> Result<Margins> {
    if sample.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut per_neuron: Vec<Vec<f64>> =
        net.layers.iter().map(|l| vec![f64::INFINITY; l.outputs()]).collect();
    for x in sample {
        let act = net.forward(x)?;
        for (table, pre) in per_neuron.iter_mut().zip(&act.pre) {
            for (m, v) in table.iter_mut().zip(pre) {
                *m = m.min(v.abs());
            }
        }
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma1 = min(&per_neuron[0]);
    let gamma = per_neuron.iter().map(|t| min(t)).fold(f64::INFINITY, f64::min);
    Ok(Margins { gamma1, gamma, per_neuron })
}

/// Two-hidden-layer network that realizes `labels` on the packing points.
///
/// Layer 1 holds the packing's witness hyperplanes. Layer 2 has one neuron per positively
/// labelled region `r`, with weights `r / sqrt(g)` and bias `1/(2g) - 1`, so it fires only on
/// its own region. The output neuron averages them with bias `1 - 1/d_2`.
///
/// When no label is positive a single guard neuron for an unrealized region is used instead.
/// If the points might realize every region, a negated copy of one witness is added to the
/// first layer so an empty region is guaranteed.
pub fn build_lowerbound_net(p: &TsPacking, labels: &[i8]) -> Result<SignNetwork> {
    if labels.len() != p.len() {
        return Err(Error::LabelCountMismatch { labels: labels.len(), points: p.len() });
    }
    if p.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(&l) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::NonBinaryLabel(l as usize));
    }
    let dim = p.dim().expect("nonempty");
    let mut first: Vec<Hyperplane> = p.witness_hyperplanes().into_iter().map(|h| p.hyperplanes()[h].clone()).collect();
    if first.is_empty() {
        // Single point: any hyperplane keeping it at distance >= epsilon will do.
        let x = p.points()[0].coords();
        let mut w = vec![0.0; dim];
        w[0] = 1.0;
        first.push(Hyperplane::from_parts_unchecked(w, p.epsilon() - x[0]));
    }
    if labels.iter().all(|&y| y < 0) && first.len() < 128 && p.len() as u128 >= 1u128 << first.len() {
        // Every region may be taken. A negated copy of a witness keeps the margin and leaves
        // all regions with equal last two signs empty.
        let h = &first[0];
        first.push(Hyperplane::from_parts_unchecked(h.weights().iter().map(|v| -v).collect(), -h.bias()));
    }
    let g = first.len();
    let regions: Vec<RegionVector> =
        p.points().iter().map(|x| region_vector(&first, x)).collect::<Result<_>>()?;

    let mut positive: Vec<&RegionVector> = Vec::new();
    for (r, &y) in regions.iter().zip(labels) {
        if y > 0 && !positive.contains(&r) {
            positive.push(r);
        }
    }
    let guard;
    if positive.is_empty() {
        guard = unrealized_region(&regions, g).ok_or(Error::AllNegativeLabels)?;
        positive.push(&guard);
    }

    let scale = 1.0 / (g as f64).sqrt();
    let layer1 = Layer::new(
        first.iter().map(|h| h.weights().to_vec()).collect(),
        first.iter().map(Hyperplane::bias).collect(),
    )?;
    let layer2 = Layer::new(
        positive.iter().map(|r| r.bits().iter().map(|&b| f64::from(b) * scale).collect()).collect(),
        vec![1.0 / (2.0 * g as f64) - 1.0; positive.len()],
    )?;
    let d2 = positive.len() as f64;
    let output = Layer::new(vec![vec![1.0 / d2.sqrt(); positive.len()]], vec![1.0 - 1.0 / d2])?;
    SignNetwork::new(vec![layer1, layer2, output])
}

/// First region vector in counting order (bit `+1` for a set bit, most significant first)
/// that no point realizes.
fn unrealized_region(realized: &[RegionVector], g: usize) -> Option<RegionVector> {
    let seen: HashSet<&RegionVector> = realized.iter().collect();
    (0u128..)
        .take(realized.len() + 1)
        .take_while(|&c| g >= 128 || c < (1u128 << g))
        .map(|c| RegionVector((0..g).rev().map(|i| if (c >> i) & 1 == 1 { 1 } else { -1 }).collect()))
        .find(|r| !seen.contains(r))
}

/// Maximum absolute deviation of `rows * rows^T` from the identity.
pub fn orthonormality_defect(rows: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - want).abs());
        }
    }
    worst
}

/// Composes `phi` over `R^k` with the projection `x -> signals * x` from `R^d`.
pub fn multi_index_lift(phi: &SignNetwork, signals: &[Vec<f64>]) -> Result<SignNetwork> {
    let k = signals.len();
    if k != phi.input_dim() {
        return Err(Error::DimensionMismatch { expected: phi.input_dim(), got: k });
    }
    let d = signals[0].len();
    if signals.iter().any(|r| r.len() != d) {
        return Err(Error::Malformed("ragged signal matrix".into()));
    }
    let defect = orthonormality_defect(signals);
    if defect > TOL {
        return Err(Error::NotOrthonormal(defect));
    }
    let first = &phi.layers[0];
    let lifted: Vec<Vec<f64>> = first
        .weights
        .iter()
        .map(|w| (0..d).map(|c| (0..k).map(|r| w[r] * signals[r][c]).sum()).collect())
        .collect();
    let mut layers = vec![Layer::new(lifted, first.bias.clone())?];
    layers.extend(phi.layers[1..].iter().cloned());
    SignNetwork::new(layers)
}

/// Projects `x in R^d` onto the signal coordinates.
pub fn project(signals: &[Vec<f64>], x: &PointD) -> Result<PointD> {
    let d = signals.first().map_or(0, Vec::len);
    if x.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.dim() });
    }
    Ok(PointD::from_vec_unchecked(signals.iter().map(|s| dot(s, x.coords())).collect()))
}

/// `k` orthonormal rows in `R^d` from Gram-Schmidt on Gaussian draws; deterministic in `seed`.
pub fn random_orthonormal_signals(d: usize, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || d == 0 {
        return Err(Error::ZeroDimension);
    }
    if k > d {
        return Err(Error::KExceedsD { k, d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut v = gaussian_unit(&mut rng, d);
        // Two passes of modified Gram-Schmidt keep the defect near machine precision.
        for _ in 0..2 {
            for r in &rows {
                let c = dot(&v, r);
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            rows.push(v.into_iter().map(|c| c / n).collect());
        }
    }
    Ok(rows)
}
