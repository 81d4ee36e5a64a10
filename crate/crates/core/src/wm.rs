//! Multiclass weighted majority over a fixed pool of experts.
//!
//! Weights start at 1 and are halved for every expert that was wrong on a round where the
//! vote itself was wrong. Nothing changes on correct rounds. Weights are kept as exponents
//! (`w = 2^-k`) so long runs cannot underflow.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct WmState {
    exponents: Vec<u32>,
    mistakes: usize,
}

/// What one round did.
#[derive(Debug, Clone, PartialEq)]
pub struct WmRound {
    pub y_hat: Label,
    pub mistake: bool,
    /// Total weight before and after the update, both scaled by the same power of two.
    pub total_before: f64,
    pub total_after: f64,
}

impl WmState {
    pub fn new(experts: usize) -> Result<Self> {
        if experts == 0 {
            return Err(Error::EmptyExpertSet);
        }
        Ok(WmState { exponents: vec![0; experts], mistakes: 0 })
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn mistakes(&self) -> usize {
        self.mistakes
    }

    /// Halving counts; expert `i` has weight `2^-exponents[i]`.
    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn weight(&self, i: usize) -> f64 {
        (-f64::from(self.exponents[i])).exp2()
    }

    fn min_exponent(&self) -> u32 {
        self.exponents.iter().copied().min().unwrap_or(0)
    }

    fn scaled_total(&self, base: u32) -> f64 {
        self.exponents.iter().map(|&k| (-f64::from(k - base)).exp2()).sum()
    }

    /// Weighted vote; ties go to the smallest label.
    pub fn vote(&self, predictions: &[Label]) -> Result<Label> {
        self.check(predictions)?;
        let base = self.min_exponent();
        let mut stakes: BTreeMap<Label, f64> = BTreeMap::new();
        for (&p, &k) in predictions.iter().zip(&self.exponents) {
            *stakes.entry(p).or_default() += (-f64::from(k - base)).exp2();
        }
        let mut best: Option<(Label, f64)> = None;
        for (label, stake) in stakes {
            if best.is_none_or(|(_, s)| stake > s) {
                best = Some((label, stake));
            }
        }
        Ok(best.expect("at least one expert").0)
    }

    /// Votes, reveals `y_true`, and applies the conservative halving update.
    pub fn round(&mut self, predictions: &[Label], y_true: Label) -> Result<WmRound> {
        let y_hat = self.vote(predictions)?;
        let base = self.min_exponent();
        let total_before = self.scaled_total(base);
        let mistake = y_hat != y_true;
        if mistake {
            self.mistakes += 1;
            for (k, &p) in self.exponents.iter_mut().zip(predictions) {
                if p != y_true {
                    *k += 1;
                }
            }
        }
        let total_after = self.scaled_total(base);
        Ok(WmRound { y_hat, mistake, total_before, total_after })
    }

    fn check(&self, predictions: &[Label]) -> Result<()> {
        if predictions.len() != self.exponents.len() {
            return Err(Error::DimensionMismatch { expected: self.exponents.len(), got: predictions.len() });
        }
        Ok(())
    }
}

/// `3 (L + log2 n)`.
pub fn wm_mistake_bound(best_expert_mistakes: usize, experts: usize) -> f64 {
    3.0 * (best_expert_mistakes as f64 + (experts.max(1) as f64).log2())
}

/// The asserted form: [`wm_mistake_bound`] plus 3 for rounding in the potential argument.
pub fn wm_audit_bound(best_expert_mistakes: usize, experts: usize) -> f64 {
    wm_mistake_bound(best_expert_mistakes, experts) + 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_expert_correct() {
        let mut s = WmState::new(1).unwrap();
        let r = s.round(&[4], 4).unwrap();
        assert_eq!(r.y_hat, 4);
        assert!(!r.mistake);
        assert_eq!(s.exponents(), &[0]);
    }

    #[test]
    fn tie_breaks_to_smaller_label_then_recovers() {
        let mut s = WmState::new(2).unwrap();
        let r = s.round(&[2, 3], 3).unwrap();
        assert_eq!(r.y_hat, 2);
        assert!(r.mistake);
        assert_eq!((s.weight(0), s.weight(1)), (0.5, 1.0));
        let r = s.round(&[2, 3], 3).unwrap();
        assert_eq!(r.y_hat, 3);
        assert!(!r.mistake);
        assert_eq!((s.weight(0), s.weight(1)), (0.5, 1.0));
    }

    #[test]
    fn empty_pool() {
        assert_eq!(WmState::new(0), Err(Error::EmptyExpertSet));
    }

    #[test]
    fn bound_formula() {
        assert_eq!(wm_mistake_bound(0, 1), 0.0);
        assert_eq!(wm_mistake_bound(2, 4), 12.0);
        assert_eq!(wm_mistake_bound(5, 1024), 45.0);
    }
}
