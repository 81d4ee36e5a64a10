//! Online learning of sign-activation feedforward networks.
//!
//! The crate is organised around the learner/adversary game:
//!
//! - [`geometry`]: points, hyperplanes and totally-separable packings.
//! - [`network`]: sign networks, margins, region vectors and the lower-bound construction.
//! - [`perceptron`]: the classic perceptron and the manual-vector neuron.
//! - [`experts`]: region-labeling experts and representing classes.
//! - [`wm`]: multiclass weighted majority.
//! - [`learners`]: the three meta-learner instantiations, majority trees and pruning.
//! - [`adaptive`]: the parameter-adaptive wrapper and learner combination.
//! - [`game`]: adversaries, the protocol loop and transcripts.
//!
//! Labels are 1-based throughout. `sign(0) = +1` everywhere.

pub mod adaptive;
pub mod error;
pub mod experts;
pub mod game;
pub mod geometry;
pub mod learners;
pub mod network;
pub mod perceptron;
pub mod wm;

pub use error::{Error, Result};

/// Class label, 1-based.
pub type Label = usize;

/// Absolute tolerance for norm and margin comparisons.
pub const TOL: f64 = 1e-9;

/// Sign with `sign(0) = +1`.
#[inline]
pub fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `floor(v)` that absorbs round-off just below an integer.
#[inline]
pub(crate) fn floor_tol(v: f64) -> f64 {
    (v + TOL).floor()
}

/// `ceil(v)` that absorbs round-off just above an integer.
#[inline]
pub(crate) fn ceil_tol(v: f64) -> f64 {
    (v - TOL).ceil()
}

/// Mistake budget per manual vector for margin `gamma`: `floor(1/gamma^2)`.
pub fn mistake_budget(gamma: f64) -> usize {
    floor_tol(1.0 / (gamma * gamma)) as usize
}
