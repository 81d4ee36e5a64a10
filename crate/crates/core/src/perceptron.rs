//! The classic perceptron and the manual-vector neuron.
//!
//! A [`ManualNeuron`] keeps a working hyperplane `w` (initially zero) and, on round `t`, updates
//! it only when its manual bit `p_t` is set, always moving `w` against its own prediction.
//! Fed the mistake rounds of a perceptron run, it replays that run exactly.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Hyperplane, PointD};
use crate::{dot, sign};

/// A bit string `p in {0,1}^T`; bit `t` is round `t` (0-based here, printed left to right).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManualVector {
    bits: Vec<bool>,
}

impl ManualVector {
    pub fn zeros(horizon: usize) -> Self {
        ManualVector { bits: vec![false; horizon] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        ManualVector { bits }
    }

    /// Ones at the given rounds.
    pub fn with_ones(horizon: usize, rounds: &[usize]) -> Result<Self> {
        let mut bits = vec![false; horizon];
        for &r in rounds {
            if r >= horizon {
                return Err(Error::HorizonExceeded { round: r, horizon });
            }
            bits[r] = true;
        }
        Ok(ManualVector { bits })
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Malformed(format!("manual vector char {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ManualVector::from_bits)
    }

    pub fn horizon(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, round: usize) -> bool {
        self.bits[round]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

impl fmt::Display for ManualVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for ManualVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ManualVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ManualVector::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Input space a neuron works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// Instances are used as given; hyperplanes are homogeneous.
    #[default]
    Raw,
    /// Instances are mapped to `(x, 1)/sqrt(2)`, which makes affine targets homogeneous.
    Homogenized,
}

impl Embedding {
    pub fn apply<'a>(&self, x: &'a PointD) -> Cow<'a, PointD> {
        match self {
            Embedding::Raw => Cow::Borrowed(x),
            Embedding::Homogenized => Cow::Owned(x.homogenized()),
        }
    }

    pub fn dim(&self, input_dim: usize) -> usize {
        match self {
            Embedding::Raw => input_dim,
            Embedding::Homogenized => input_dim + 1,
        }
    }

    /// Smallest embedding in which `h` is homogeneous.
    pub fn for_hyperplane(h: &Hyperplane) -> Self {
        if h.bias() == 0.0 {
            Embedding::Raw
        } else {
            Embedding::Homogenized
        }
    }
}

/// A perceptron whose updates are dictated by a manual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ManualNeuron {
    manual: ManualVector,
    w: Vec<f64>,
    t: usize,
}

impl ManualNeuron {
    pub fn new(manual: ManualVector, dim: usize) -> Self {
        ManualNeuron { manual, w: vec![0.0; dim], t: 0 }
    }

    pub fn manual(&self) -> &ManualVector {
        &self.manual
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.manual.horizon()
    }

    /// Whether the manual bit for the current round is set.
    pub fn updates_now(&self) -> Result<bool> {
        self.check_horizon()?;
        Ok(self.manual.get(self.t))
    }

    /// `sign(<w, x>)` without advancing.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        self.check_horizon()?;
        self.check_dim(x)?;
        Ok(sign(dot(&self.w, x)))
    }

    /// Predicts, applies the manual update for this round, and advances `t`.
    pub fn step(&mut self, x: &[f64]) -> Result<i8> {
        let y = self.predict(x)?;
        if self.manual.get(self.t) {
            let dir = if y < 0 { 1.0 } else { -1.0 };
            self.w.iter_mut().zip(x).for_each(|(w, xi)| *w += dir * xi);
        }
        self.t += 1;
        Ok(y)
    }

    fn check_horizon(&self) -> Result<()> {
        if self.t >= self.manual.horizon() {
            return Err(Error::HorizonExceeded { round: self.t, horizon: self.manual.horizon() });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch { expected: self.w.len(), got: x.len() });
        }
        Ok(())
    }
}

/// Result of one pass of the standard perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronRun {
    pub mistakes: usize,
    /// 0-based rounds on which the perceptron erred.
    pub mistake_rounds: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Standard perceptron from `w = 0`: predict `sign(<w, x>)`, on a mistake add `y x`.
pub fn perceptron_run<'a, I>(stream: I) -> Result<PerceptronRun>
where
    I: IntoIterator<Item = (&'a [f64], i8)>,
{
    let mut w: Vec<f64> = Vec::new();
    let mut mistake_rounds = Vec::new();
    for (t, (x, y)) in stream.into_iter().enumerate() {
        if t == 0 {
            w = vec![0.0; x.len()];
        } else if x.len() != w.len() {
            return Err(Error::DimensionMismatch { expected: w.len(), got: x.len() });
        }
        if sign(dot(&w, x)) != y {
            mistake_rounds.push(t);
            let yf = f64::from(y);
            w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += yf * xi);
        }
    }
    Ok(PerceptronRun { mistakes: mistake_rounds.len(), mistake_rounds, weights: w })
}

/// A manual vector that steers a [`ManualNeuron`] onto `target`, and the input embedding the
/// neuron has to use.
#[derive(Debug, Clone, PartialEq)]
pub struct ManualFit {
    pub manual: ManualVector,
    pub embedding: Embedding,
}

/// Runs the perceptron on `sample` labelled by `target` and marks its mistake rounds.
///
/// A target with a nonzero bias is handled in the homogenized space.
pub fn manual_vector_for(target: &Hyperplane, sample: &[PointD], horizon: usize) -> Result<ManualFit> {
    manual_vector_in(target, sample, horizon, Embedding::for_hyperplane(target))
}

/// As [`manual_vector_for`] with the embedding forced.
pub fn manual_vector_in(
    target: &Hyperplane,
    sample: &[PointD],
    horizon: usize,
    embedding: Embedding,
) -> Result<ManualFit> {
    if sample.len() > horizon {
        return Err(Error::HorizonExceeded { round: sample.len(), horizon });
    }
    if embedding == Embedding::Raw && target.bias() != 0.0 {
        return Err(Error::InvalidConfig("biased target needs the homogenized embedding".into()));
    }
    let plane = match embedding {
        Embedding::Raw => target.clone(),
        Embedding::Homogenized => target.homogenized(),
    };
    let embedded: Vec<Cow<'_, PointD>> = sample.iter().map(|x| embedding.apply(x)).collect();
    for x in &embedded {
        if x.dim() != plane.dim() {
            return Err(Error::DimensionMismatch { expected: plane.dim(), got: x.dim() });
        }
    }
    let labels: Vec<i8> = sample.iter().map(|x| target.side(x.coords())).collect();
    let run = perceptron_run(embedded.iter().map(|x| x.coords()).zip(labels))?;
    Ok(ManualFit { manual: ManualVector::with_ones(horizon, &run.mistake_rounds)?, embedding })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_manual_never_moves() {
        let mut n = ManualNeuron::new(ManualVector::zeros(5), 2);
        for x in [[0.3, -0.2], [-0.9, 0.1], [0.0, 0.0], [0.5, 0.5], [-0.1, -0.1]] {
            assert_eq!(n.step(&x).unwrap(), 1);
        }
        assert_eq!(n.weights(), &[0.0, 0.0]);
        assert!(matches!(n.step(&[0.1, 0.1]), Err(Error::HorizonExceeded { round: 5, horizon: 5 })));
    }

    #[test]
    fn one_step_update() {
        let mut n = ManualNeuron::new(ManualVector::parse("1").unwrap(), 1);
        assert_eq!(n.step(&[0.5]).unwrap(), 1);
        assert_eq!(n.weights(), &[-0.5]);
    }

    #[test]
    fn two_step_hand_simulation() {
        let mut n = ManualNeuron::new(ManualVector::parse("10").unwrap(), 1);
        assert_eq!(n.step(&[0.5]).unwrap(), 1);
        assert_eq!(n.step(&[0.5]).unwrap(), -1);
    }

    #[test]
    fn perceptron_examples() {
        let r = perceptron_run([(&[1.0][..], 1i8)]).unwrap();
        assert_eq!(r.mistakes, 0);
        let r = perceptron_run([(&[1.0][..], -1i8), (&[1.0][..], -1)]).unwrap();
        assert_eq!(r.mistake_rounds, vec![0]);
        assert_eq!(r.weights, vec![-1.0]);
    }

    #[test]
    fn manual_vector_examples() {
        let s: Vec<PointD> = [[0.5, 0.1], [0.2, -0.4], [0.9, 0.0]]
            .iter()
            .map(|c| PointD::new(c.to_vec()).unwrap())
            .collect();
        let fit = manual_vector_for(&Hyperplane::new(vec![1.0, 0.0], 0.0).unwrap(), &s, 4).unwrap();
        assert_eq!(fit.manual.to_string(), "0000");
        assert_eq!(fit.embedding, Embedding::Raw);

        let s = vec![PointD::new(vec![0.5]).unwrap(), PointD::new(vec![0.5]).unwrap()];
        let fit = manual_vector_for(&Hyperplane::new(vec![-1.0], 0.0).unwrap(), &s, 2).unwrap();
        assert_eq!(fit.manual.to_string(), "10");
    }

    #[test]
    fn manual_vector_rejects_long_sample() {
        let s = vec![PointD::new(vec![0.5]).unwrap(); 3];
        let h = Hyperplane::new(vec![1.0], 0.0).unwrap();
        assert!(matches!(manual_vector_for(&h, &s, 2), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn biased_target_uses_homogenized_space() {
        let h = Hyperplane::new(vec![1.0], -0.3).unwrap();
        let s: Vec<PointD> = [0.9, -0.5, 0.7, 0.0, -0.9, 0.8]
            .iter()
            .map(|&v| PointD::new(vec![v]).unwrap())
            .collect();
        let fit = manual_vector_for(&h, &s, 6).unwrap();
        assert_eq!(fit.embedding, Embedding::Homogenized);
        let mut n = ManualNeuron::new(fit.manual.clone(), 2);
        for (t, x) in s.iter().enumerate() {
            let pred = n.step(x.homogenized().coords()).unwrap();
            if !fit.manual.get(t) {
                assert_eq!(pred, h.side(x.coords()), "round {t}");
            }
        }
    }

    #[test]
    fn bitstring_round_trip() {
        let v = ManualVector::parse("0110").unwrap();
        assert_eq!(v.popcount(), 2);
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"0110\"");
        assert!(ManualVector::parse("012").is_err());
    }
}
