//! The online protocol: the adversary shows `x_t`, the learner predicts, the adversary reveals
//! `y_t`, the learner receives it.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointD, TsPacking};
use crate::learners::Learner;
use crate::network::{build_lowerbound_net, margins, region_vector, RegionVector, SignNetwork};
use crate::{Label, TOL};

pub trait Adversary {
    /// The next instance, or `None` once the adversary has nothing left to show.
    fn next_instance(&mut self) -> Result<Option<PointD>>;
    /// The label of the current instance, given the learner's prediction.
    fn reveal_label(&mut self, y_hat: Label) -> Result<Label>;
    /// Diagnostic region of `x` under the target's first layer, when there is a target.
    fn region_of(&self, _x: &PointD) -> Option<RegionVector> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub x: PointD,
    pub y_hat: Label,
    pub y_true: Label,
    pub mistake: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub region: Option<RegionVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Complete,
    Aborted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub seed: u64,
    pub config: serde_json::Value,
    pub status: Status,
    pub rounds: Vec<Round>,
}

#[derive(Serialize)]
struct TranscriptDocument<'a> {
    seed: u64,
    config: &'a serde_json::Value,
    status: &'a Status,
    mistakes: usize,
    distinct_regions: Option<usize>,
    rounds: &'a [Round],
}

impl Transcript {
    pub fn mistakes(&self) -> usize {
        self.rounds.iter().filter(|r| r.mistake).count()
    }

    pub fn is_complete(&self) -> bool {
        self.status == Status::Complete
    }

    /// Number of distinct target regions visited, when the adversary reports them.
    pub fn distinct_regions(&self) -> Option<usize> {
        let regions: Option<HashSet<&RegionVector>> = self.rounds.iter().map(|r| r.region.as_ref()).collect();
        regions.map(|s| s.len()).filter(|_| !self.rounds.is_empty())
    }

    /// Checks that every mistake flag matches its labels.
    pub fn consistent(&self) -> bool {
        self.rounds.iter().all(|r| r.mistake == (r.y_hat != r.y_true))
    }

    /// `round,y_hat,y_true,mistake`, rounds counted from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,y_hat,y_true,mistake\n");
        for (i, r) in self.rounds.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", i + 1, r.y_hat, r.y_true, u8::from(r.mistake));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TranscriptDocument {
            seed: self.seed,
            config: &self.config,
            status: &self.status,
            mistakes: self.mistakes(),
            distinct_regions: self.distinct_regions(),
            rounds: &self.rounds,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Malformed(e.to_string()))
    }
}

/// Plays at most `rounds` rounds. Errors end the game early with an aborted transcript.
pub fn run_game(
    learner: &mut dyn Learner,
    adversary: &mut dyn Adversary,
    rounds: usize,
    seed: u64,
    config: serde_json::Value,
) -> Transcript {
    let mut t = Transcript { seed, config, status: Status::Complete, rounds: Vec::new() };
    for _ in 0..rounds {
        match play_round(learner, adversary) {
            Ok(Some(r)) => t.rounds.push(r),
            Ok(None) => break,
            Err(e) => {
                t.status = Status::Aborted { reason: e.to_string() };
                break;
            }
        }
    }
    t
}

fn play_round(learner: &mut dyn Learner, adversary: &mut dyn Adversary) -> Result<Option<Round>> {
    let Some(x) = adversary.next_instance()? else {
        return Ok(None);
    };
    let y_hat = learner.predict(&x)?;
    let y_true = adversary.reveal_label(y_hat)?;
    learner.receive(&x, y_true)?;
    let region = adversary.region_of(&x);
    Ok(Some(Round { x, y_hat, y_true, mistake: y_hat != y_true, region }))
}

/// Replays a fixed sequence labelled by a target network.
pub struct RealizableAdversary {
    net: SignNetwork,
    points: Vec<PointD>,
    next: usize,
    current: Option<Label>,
}

pub fn realizable_adversary(net: SignNetwork, points: Vec<PointD>) -> Result<RealizableAdversary> {
    if points.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(RealizableAdversary { net, points, next: 0, current: None })
}

impl RealizableAdversary {
    pub fn net(&self) -> &SignNetwork {
        &self.net
    }

    pub fn points(&self) -> &[PointD] {
        &self.points
    }
}

impl Adversary for RealizableAdversary {
    fn next_instance(&mut self) -> Result<Option<PointD>> {
        let Some(x) = self.points.get(self.next).cloned() else {
            return Ok(None);
        };
        self.current = Some(self.net.label_of(&x)?);
        self.next += 1;
        Ok(Some(x))
    }

    fn reveal_label(&mut self, _y_hat: Label) -> Result<Label> {
        self.current.take().ok_or_else(|| Error::Malformed("label requested before an instance".into()))
    }

    fn region_of(&self, x: &PointD) -> Option<RegionVector> {
        region_vector(&self.net.first_layer_hyperplanes(), x).ok()
    }
}

/// Shows the packing points in order and always reveals the label the learner did not pick.
pub struct ForceMistakeAdversary {
    packing: TsPacking,
    next: usize,
    revealed: Vec<i8>,
}

/// The network that realizes the forced labels, with its measured first-layer margin.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundAudit {
    pub net: SignNetwork,
    pub gamma1: f64,
    pub points: usize,
}

pub fn force_mistake_adversary(packing: TsPacking) -> ForceMistakeAdversary {
    ForceMistakeAdversary { packing, next: 0, revealed: Vec::new() }
}

impl ForceMistakeAdversary {
    /// Labels revealed so far as `+-1` (label 2 is `+1`).
    pub fn revealed(&self) -> &[i8] {
        &self.revealed
    }

    /// Builds the realizing network on the points shown so far and checks it.
    pub fn audit(&self) -> Result<LowerBoundAudit> {
        let n = self.revealed.len();
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        let shown = self.packing.points()[..n].to_vec();
        let sub = if n == self.packing.len() {
            self.packing.clone()
        } else {
            restrict(&self.packing, n)?
        };
        let net = build_lowerbound_net(&sub, &self.revealed)?;
        for (i, (x, &y)) in shown.iter().zip(&self.revealed).enumerate() {
            let got = net.output_bits(x)?[0];
            if got != y {
                return Err(Error::AuditFailed(format!("point {i} gets {got}, revealed {y}")));
            }
        }
        let gamma1 = margins(&net, &shown)?.gamma1;
        if gamma1 < self.packing.epsilon() - TOL {
            return Err(Error::AuditFailed(format!("first-layer margin {gamma1} below {}", self.packing.epsilon())));
        }
        Ok(LowerBoundAudit { net, gamma1, points: n })
    }
}

/// The first `n` points of a packing with their witnesses.
fn restrict(p: &TsPacking, n: usize) -> Result<TsPacking> {
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let h = p.witness(i, j).ok_or(Error::MissingWitness(i, j))?;
            triples.push((i, j, h));
        }
    }
    TsPacking::from_parts(p.epsilon(), p.points()[..n].to_vec(), p.hyperplanes().to_vec(), triples)
}

impl Adversary for ForceMistakeAdversary {
    fn next_instance(&mut self) -> Result<Option<PointD>> {
        if self.next > self.revealed.len() {
            return Err(Error::Malformed("instance requested before the label was revealed".into()));
        }
        let x = self.packing.points().get(self.next).cloned();
        if x.is_some() {
            self.next += 1;
        }
        Ok(x)
    }

    fn reveal_label(&mut self, y_hat: Label) -> Result<Label> {
        if self.next != self.revealed.len() + 1 {
            return Err(Error::Malformed("label requested before an instance".into()));
        }
        let y = match y_hat {
            1 => 2,
            2 => 1,
            other => return Err(Error::NonBinaryLabel(other)),
        };
        self.revealed.push(if y == 2 { 1 } else { -1 });
        Ok(y)
    }
}
