//! Parameter-free wrapping of margin-dependent learners, and WM combination of learners.
//!
//! The wrapper guesses `X`, an upper bound on the mistake budget, and walks the exponent
//! guess `b` from `X` down to 1 with margin guess `gamma = X^(-1/b)`. Each guess gets a fresh
//! inner learner that may make at most `X` mistakes; the `(X+1)`-th ends the run. When
//! `b = 1` fails the wrapper squares `X`.

use std::cell::Cell;
use std::fmt::Write as _;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointD;
use crate::learners::Learner;
use crate::wm::WmState;
use crate::Label;

/// Builds a fresh inner learner for a margin guess (a lower bound) and an exponent guess (an
/// upper bound).
pub type Factory = Box<dyn FnMut(f64, u32) -> Result<Box<dyn Learner>>>;

/// One run of the inner learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub phase_x: u64,
    pub b: u32,
    pub gamma: f64,
    pub run_mistakes: usize,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// Hit `X + 1` mistakes and was replaced.
    Exhausted,
    /// Still running when the log was taken.
    Active,
}

pub struct AdapLearner {
    factory: Factory,
    x: u64,
    b: u32,
    gamma: f64,
    run_mistakes: usize,
    total_mistakes: usize,
    inner: Box<dyn Learner>,
    log: Vec<ScheduleRow>,
    pending: Option<Label>,
}

/// `X^(-1/b)`.
pub fn adap_gamma(x: u64, b: u32) -> f64 {
    (x as f64).powf(-1.0 / f64::from(b))
}

/// The `(X, b)` pair that follows `(x, b)` in the schedule.
pub fn next_guess(x: u64, b: u32) -> (u64, u32) {
    if b > 1 {
        (x, b - 1)
    } else {
        let x2 = x.saturating_mul(x);
        (x2, u32::try_from(x2).unwrap_or(u32::MAX))
    }
}

impl AdapLearner {
    pub fn new(mut factory: Factory) -> Result<Self> {
        let (x, b) = (2, 2);
        let gamma = adap_gamma(x, b);
        let inner = factory(gamma, b)?;
        Ok(AdapLearner {
            factory,
            x,
            b,
            gamma,
            run_mistakes: 0,
            total_mistakes: 0,
            inner,
            log: Vec::new(),
            pending: None,
        })
    }

    pub fn phase(&self) -> u64 {
        self.x
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn run_mistakes(&self) -> usize {
        self.run_mistakes
    }

    pub fn mistakes(&self) -> usize {
        self.total_mistakes
    }

    /// Finished runs followed by the active one.
    pub fn schedule(&self) -> Vec<ScheduleRow> {
        let mut rows = self.log.clone();
        rows.push(ScheduleRow {
            phase_x: self.x,
            b: self.b,
            gamma: self.gamma,
            run_mistakes: self.run_mistakes,
            outcome: RunOutcome::Active,
        });
        rows
    }

    pub fn schedule_csv(&self) -> String {
        schedule_csv(&self.schedule())
    }

    fn advance(&mut self) -> Result<()> {
        self.log.push(ScheduleRow {
            phase_x: self.x,
            b: self.b,
            gamma: self.gamma,
            run_mistakes: self.run_mistakes,
            outcome: RunOutcome::Exhausted,
        });
        (self.x, self.b) = next_guess(self.x, self.b);
        self.gamma = adap_gamma(self.x, self.b);
        self.run_mistakes = 0;
        self.inner = (self.factory)(self.gamma, self.b)?;
        Ok(())
    }
}

pub fn schedule_csv(rows: &[ScheduleRow]) -> String {
    let mut out = String::from("phase_X,b,gamma,run_mistakes,outcome\n");
    for r in rows {
        let outcome = match r.outcome {
            RunOutcome::Exhausted => "exhausted",
            RunOutcome::Active => "active",
        };
        let _ = writeln!(out, "{},{},{},{},{}", r.phase_x, r.b, r.gamma, r.run_mistakes, outcome);
    }
    out
}

impl Learner for AdapLearner {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        let y = self.inner.predict(x)?;
        self.pending = Some(y);
        Ok(y)
    }

    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        let y_hat = match self.pending.take() {
            Some(y) => y,
            None => self.inner.predict(x)?,
        };
        self.inner.receive(x, y_true)?;
        if y_hat != y_true {
            self.run_mistakes += 1;
            self.total_mistakes += 1;
            if self.run_mistakes as u64 > self.x {
                self.advance()?;
            }
        }
        Ok(())
    }
}

/// When a stub instance counts as run with good parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubPolicy {
    /// Succeeds iff `gamma <= gamma*` and `b >= b*`.
    Honest,
    /// Additionally requires the run's budget `gamma^(-b)` to exceed `M`, so a run cannot
    /// succeed before the phase could absorb the stub's mistakes.
    StrictBudget,
}

/// Labeling function the stubs predict with.
pub type Target = Rc<dyn Fn(&PointD) -> Label>;

/// Binary learner with a scripted mistake pattern: with good parameters it errs on its first
/// `ceil(M)` predictions and is perfect afterwards, with bad parameters it always errs.
pub struct StubLearner {
    succeeds: bool,
    budget: usize,
    made: usize,
    target: Target,
}

impl StubLearner {
    pub fn succeeds(&self) -> bool {
        self.succeeds
    }
}

impl Learner for StubLearner {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        let truth = (self.target)(x);
        let err = !self.succeeds || self.made < self.budget;
        Ok(if err { flip(truth) } else { truth })
    }

    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        if self.predict(x)? != y_true {
            self.made += 1;
        }
        Ok(())
    }
}

fn flip(y: Label) -> Label {
    if y == 1 {
        2
    } else {
        1
    }
}

/// Produces [`StubLearner`]s for a hidden `(gamma*, b*)` with `M = gamma*^(-b*)`.
#[derive(Clone)]
pub struct StubFactory {
    pub gamma_star: f64,
    pub b_star: f64,
    pub policy: StubPolicy,
    target: Target,
    calls: Rc<Cell<usize>>,
}

impl StubFactory {
    pub fn new(gamma_star: f64, b_star: f64, policy: StubPolicy, target: Target) -> Result<Self> {
        if !(gamma_star > 0.0 && gamma_star <= 1.0) || b_star < 1.0 {
            return Err(Error::InvalidConfig(format!("stub needs gamma* in (0, 1] and b* >= 1, got ({gamma_star}, {b_star})")));
        }
        Ok(StubFactory { gamma_star, b_star, policy, target, calls: Rc::new(Cell::new(0)) })
    }

    /// `M = gamma*^(-b*)`.
    pub fn m(&self) -> f64 {
        self.gamma_star.powf(-self.b_star)
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    pub fn accepts(&self, gamma: f64, b: u32) -> bool {
        let ok = gamma <= self.gamma_star + 1e-12 && f64::from(b) >= self.b_star;
        match self.policy {
            StubPolicy::Honest => ok,
            StubPolicy::StrictBudget => ok && gamma.powf(-f64::from(b)) > self.m() + 1e-9,
        }
    }

    pub fn make(&self, gamma: f64, b: u32) -> StubLearner {
        self.calls.set(self.calls.get() + 1);
        StubLearner {
            succeeds: self.accepts(gamma, b),
            budget: (self.m() - 1e-9).ceil().max(0.0) as usize,
            made: 0,
            target: self.target.clone(),
        }
    }

    pub fn into_factory(self) -> Factory {
        Box::new(move |gamma, b| Ok(Box::new(self.make(gamma, b)) as Box<dyn Learner>))
    }
}

/// A stub that never errs.
pub struct PerfectStub(pub Target);

impl Learner for PerfectStub {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        Ok((self.0)(x))
    }

    fn receive(&mut self, _x: &PointD, _y: Label) -> Result<()> {
        Ok(())
    }
}

/// Weighted majority with whole learners as experts.
pub struct CombinedLearner {
    learners: Vec<Box<dyn Learner>>,
    wm: WmState,
    mistakes: Vec<usize>,
    pending: Option<Vec<Label>>,
}

pub fn combine_learners_wm(learners: Vec<Box<dyn Learner>>) -> Result<CombinedLearner> {
    let wm = WmState::new(learners.len())?;
    Ok(CombinedLearner { mistakes: vec![0; learners.len()], learners, wm, pending: None })
}

impl CombinedLearner {
    pub fn mistakes(&self) -> usize {
        self.wm.mistakes()
    }

    /// Mistakes of each member learner.
    pub fn member_mistakes(&self) -> &[usize] {
        &self.mistakes
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    pub fn learner(&self, i: usize) -> &dyn Learner {
        self.learners[i].as_ref()
    }

    fn predictions(&mut self, x: &PointD) -> Result<Vec<Label>> {
        self.learners.iter_mut().map(|l| l.predict(x)).collect()
    }
}

impl Learner for CombinedLearner {
    fn predict(&mut self, x: &PointD) -> Result<Label> {
        let preds = self.predictions(x)?;
        let y = self.wm.vote(&preds)?;
        self.pending = Some(preds);
        Ok(y)
    }

    fn receive(&mut self, x: &PointD, y_true: Label) -> Result<()> {
        let preds = match self.pending.take() {
            Some(p) => p,
            None => self.predictions(x)?,
        };
        self.wm.round(&preds, y_true)?;
        for (m, &p) in self.mistakes.iter_mut().zip(&preds) {
            if p != y_true {
                *m += 1;
            }
        }
        for l in &mut self.learners {
            l.receive(x, y_true)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> Target {
        Rc::new(|x: &PointD| if x.coords()[0] >= 0.0 { 2 } else { 1 })
    }

    fn drive(l: &mut dyn Learner, rounds: usize) -> usize {
        let t = target();
        let mut m = 0;
        for i in 0..rounds {
            let x = PointD::new(vec![if i % 2 == 0 { 0.5 } else { -0.5 }]).unwrap();
            let y = t(&x);
            if l.predict(&x).unwrap() != y {
                m += 1;
            }
            l.receive(&x, y).unwrap();
        }
        m
    }

    #[test]
    fn strict_stub_trace() {
        let f = StubFactory::new(0.5, 2.0, StubPolicy::StrictBudget, target()).unwrap();
        let mut a = AdapLearner::new(f.clone().into_factory()).unwrap();
        let m = drive(&mut a, 1000);
        assert_eq!(m, 234);
        assert_eq!(a.mistakes(), 234);
        assert_eq!(a.phase(), 16);
        assert_eq!(a.b(), 4);
        // 2 runs in phase 2, 4 in phase 4, 12 failing runs in phase 16, then the good one
        assert_eq!(f.calls(), 19);
    }

    #[test]
    fn honest_stub_trace() {
        let f = StubFactory::new(0.5, 2.0, StubPolicy::Honest, target()).unwrap();
        let mut a = AdapLearner::new(f.into_factory()).unwrap();
        assert_eq!(drive(&mut a, 1000), 6 + 10 + 4);
        assert_eq!(a.phase(), 4);
    }

    #[test]
    fn perfect_inner_never_advances() {
        let mut a = AdapLearner::new(Box::new(|_, _| Ok(Box::new(PerfectStub(target())) as Box<dyn Learner>))).unwrap();
        assert_eq!(drive(&mut a, 50), 0);
        assert_eq!(a.schedule().len(), 1);
        assert_eq!((a.phase(), a.b()), (2, 2));
    }

    #[test]
    fn schedule_order() {
        let mut g = (2u64, 2u32);
        let mut seen = vec![g];
        while seen.len() < 8 {
            g = next_guess(g.0, g.1);
            seen.push(g);
        }
        assert_eq!(seen, vec![(2, 2), (2, 1), (4, 4), (4, 3), (4, 2), (4, 1), (16, 16), (16, 15)]);
        assert!((adap_gamma(2, 2) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn combine_with_perfect_member() {
        let f = StubFactory::new(0.5, 2.0, StubPolicy::StrictBudget, target()).unwrap();
        let members: Vec<Box<dyn Learner>> = vec![Box::new(f.make(0.9, 1)), Box::new(PerfectStub(target()))];
        let mut c = combine_learners_wm(members).unwrap();
        let m = drive(&mut c, 100);
        assert!(m as f64 <= 3.0 * (0.0 + 1.0) + 3.0, "{m}");
        assert_eq!(c.member_mistakes()[1], 0);
    }

    #[test]
    fn combine_single_is_identity() {
        let f = StubFactory::new(0.5, 2.0, StubPolicy::StrictBudget, target()).unwrap();
        let mut solo = AdapLearner::new(f.clone().into_factory()).unwrap();
        let mut c = combine_learners_wm(vec![Box::new(AdapLearner::new(f.into_factory()).unwrap())]).unwrap();
        assert_eq!(drive(&mut solo, 400), drive(&mut c, 400));
    }

    #[test]
    fn empty_combination() {
        assert!(matches!(combine_learners_wm(Vec::new()), Err(Error::EmptyExpertSet)));
    }
}
