//! The depth-`L`, fan-in-`g` majority tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sign;

/// Replaces every consecutive block of `g` signs by the sign of its sum, `L` times.
///
/// Odd `g` avoids ties; with even `g` a tied block evaluates to `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityTree {
    g: usize,
    #[serde(rename = "L")]
    depth: usize,
}

impl MajorityTree {
    pub fn new(g: usize, depth: usize) -> Result<Self> {
        if g == 0 || depth == 0 {
            return Err(Error::InvalidConfig(format!("majority tree needs g, L >= 1, got ({g}, {depth})")));
        }
        if g.checked_pow(depth as u32).is_none() {
            return Err(Error::InvalidConfig(format!("g^L overflows for ({g}, {depth})")));
        }
        Ok(MajorityTree { g, depth })
    }

    pub fn fan_in(&self) -> usize {
        self.g
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `g^L`.
    pub fn leaves(&self) -> usize {
        self.g.pow(self.depth as u32)
    }

    pub fn eval(&self, r: &[i8]) -> Result<i8> {
        if r.len() != self.leaves() {
            return Err(Error::LengthMismatch { expected: self.leaves(), got: r.len() });
        }
        let mut level: Vec<i8> = r.to_vec();
        for _ in 0..self.depth {
            level = level
                .chunks(self.g)
                .map(|c| sign(c.iter().map(|&b| f64::from(b)).sum()))
                .collect();
        }
        Ok(level[0])
    }
}

pub fn majority_tree_eval(tree: &MajorityTree, r: &[i8]) -> Result<i8> {
    tree.eval(r)
}
