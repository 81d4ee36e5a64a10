//! `nnol simulate`: a meta-learner against a seeded adversary, with bound audits.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nnol::game::{force_mistake_adversary, realizable_adversary, run_game, Adversary, Transcript};
use nnol::geometry::{grid_ts_packing, PointD};
use nnol::learners::{build_learner, prune_deep, MetaLearnerConfig, Mode};
use nnol::network::{margins, multi_index_lift, random_orthonormal_signals, Layer, SignNetwork};
use nnol::wm::wm_audit_bound;
use nnol::TOL;

use crate::commands::{with_suffix, write_checked, write_json};
use crate::CliError;

/// Environment variable overriding `learner.class_cap`.
pub const CLASS_CAP_VAR: &str = "NNOL_CLASS_CAP";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub learner: MetaLearnerConfig,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default)]
    pub adversary: AdversarySpec,
    /// Instances shown; defaults to `T_max`.
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Architecture of the target over `R^d`, or over `R^k` in multi-index mode.
    /// Defaults to `[input, 2, ceil(log2 Y)]`.
    #[serde(default)]
    pub architecture: Option<Vec<usize>>,
    /// Minimum margin of the generated instances; defaults to the learner's `gamma`.
    #[serde(default)]
    pub min_margin: Option<f64>,
    #[serde(default)]
    pub max_attempts: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    #[default]
    Realizable,
    /// Grid packing in dimension `d`; labels must be binary.
    ForceMistake { eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditLine {
    pub name: &'static str,
    pub observed: usize,
    pub bound: Option<f64>,
    pub status: &'static str,
    pub note: String,
}

impl AuditLine {
    fn check(name: &'static str, observed: usize, bound: f64, note: String) -> Self {
        let status = if observed as f64 <= bound + 1e-9 { "PASS" } else { "FAIL" };
        AuditLine { name, observed, bound: Some(bound), status, note }
    }

    fn skip(name: &'static str, observed: usize, note: String) -> Self {
        AuditLine { name, observed, bound: None, status: "SKIP", note }
    }
}

pub fn run(config_path: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let mut cfg: SimConfig = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    if let Ok(v) = std::env::var(CLASS_CAP_VAR) {
        cfg.learner.class_cap = v
            .parse()
            .map_err(|_| CliError::Usage(format!("{CLASS_CAP_VAR}={v} is not an integer")))?;
    }
    let outcome = simulate(&cfg, seed)?;
    write_checked(&with_suffix(out, ".transcript.csv"), &outcome.transcript.to_csv())?;
    let json = outcome.transcript.to_json()?;
    write_checked(&with_suffix(out, ".transcript.json"), &json)?;
    serde_json::from_str::<serde_json::Value>(&json)?;
    write_json(&with_suffix(out, ".audit.json"), &outcome.report)?;

    println!("mistakes: {} over {} rounds", outcome.transcript.mistakes(), outcome.transcript.rounds.len());
    for a in &outcome.report.audits {
        match a.bound {
            Some(b) => println!("{}: {} (observed {} <= {b:.3}) {}", a.name, a.status, a.observed, a.note),
            None => println!("{}: {} {}", a.name, a.status, a.note),
        }
    }
    if !outcome.transcript.is_complete() {
        return Err(CliError::Audit(format!("game aborted: {:?}", outcome.transcript.status)));
    }
    if outcome.report.audits.iter().any(|a| a.status == "FAIL") {
        return Err(CliError::Audit("a bound audit failed".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub mode: Mode,
    pub experts: usize,
    pub g: usize,
    pub best_expert_mistakes: usize,
    pub measured_gamma1: Option<f64>,
    pub measured_gamma: Option<f64>,
    pub audits: Vec<AuditLine>,
}

pub struct Outcome {
    pub transcript: Transcript,
    pub report: AuditReport,
}

fn input_dim(cfg: &MetaLearnerConfig) -> usize {
    match cfg.mode {
        Mode::MultiIndex => cfg.k.unwrap_or(cfg.d),
        _ => cfg.d,
    }
}

fn unit_ball(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// Target over the input space plus instances whose margins clear `min_margin`.
fn make_target(cfg: &SimConfig, rng: &mut ChaCha8Rng, count: usize) -> Result<(SignNetwork, Vec<PointD>), CliError> {
    let l = &cfg.learner;
    let m = input_dim(l);
    let arch = cfg.target.architecture.clone().unwrap_or_else(|| vec![m, 2, l.output_bits()]);
    if arch.first() != Some(&m) {
        return Err(CliError::Usage(format!("target architecture {arch:?} must start with input dimension {m}")));
    }
    if arch.last() != Some(&l.output_bits()) {
        return Err(CliError::Usage(format!("target architecture {arch:?} must end with {} output bits", l.output_bits())));
    }
    let phi = SignNetwork::random(&arch, rng.next_u64())?;
    let min_margin = cfg.target.min_margin.unwrap_or(l.gamma);
    let every_layer = l.mode == Mode::EverywhereMargin;
    let mut inner = Vec::with_capacity(count);
    let mut attempts = 0u64;
    let max_attempts = cfg.target.max_attempts.unwrap_or(1_000_000);
    while inner.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(CliError::Usage(format!(
                "found only {} of {count} instances with margin {min_margin} after {max_attempts} attempts",
                inner.len()
            )));
        }
        let z = PointD::new(unit_ball(rng, m))?;
        let act = phi.forward(&z)?;
        let layers = if every_layer { &act.pre[..] } else { &act.pre[..1] };
        if layers.iter().flatten().all(|v| v.abs() >= min_margin) {
            inner.push(z);
        }
    }
    if l.mode != Mode::MultiIndex {
        return Ok((phi, inner));
    }
    // Lift: x = sum_j z_j s_j lies in the signal span and projects back to z.
    let signals = random_orthonormal_signals(l.d, m, rng.next_u64())?;
    let net = multi_index_lift(&phi, &signals)?;
    let xs = inner
        .iter()
        .map(|z| {
            let mut x = vec![0.0; l.d];
            for (zj, s) in z.coords().iter().zip(&signals) {
                for (xi, si) in x.iter_mut().zip(s) {
                    *xi += zj * si;
                }
            }
            PointD::new(x)
        })
        .collect::<nnol::Result<Vec<_>>>()?;
    Ok((net, xs))
}

/// The single-output network computing output bit `i` of `net`.
pub fn single_output(net: &SignNetwork, i: usize) -> nnol::Result<SignNetwork> {
    let layers = net.layers();
    let last = &layers[layers.len() - 1];
    let mut out = layers[..layers.len() - 1].to_vec();
    out.push(Layer::new(vec![last.weights()[i].clone()], vec![last.bias()[i]])?);
    SignNetwork::new(out)
}

pub fn simulate(cfg: &SimConfig, seed: u64) -> Result<Outcome, CliError> {
    let l = &cfg.learner;
    l.validate()?;
    let mut learner = build_learner(l)?;
    let snapshot = serde_json::to_value(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = l.g();
    let mut audits = Vec::new();

    match &cfg.adversary {
        AdversarySpec::ForceMistake { eps } => {
            if l.labels != 2 {
                return Err(CliError::Usage("the mistake-forcing adversary needs Y = 2".into()));
            }
            let packing = grid_ts_packing(l.d, *eps)?;
            let n = packing.len();
            if n > l.t_max {
                return Err(CliError::Usage(format!("packing has {n} points but T_max = {}", l.t_max)));
            }
            let mut adv = force_mistake_adversary(packing);
            let transcript = run_game(&mut learner, &mut adv, n, seed, snapshot);
            let forced = transcript.mistakes();
            audits.push(AuditLine {
                name: "forced_mistakes",
                observed: forced,
                bound: None,
                status: if forced == n { "PASS" } else { "FAIL" },
                note: format!("expected exactly {n}"),
            });
            audits.push(match adv.audit() {
                Ok(a) => AuditLine {
                    name: "lower_bound_net",
                    observed: forced,
                    bound: None,
                    status: "PASS",
                    note: format!("realized with gamma1 = {}", a.gamma1),
                },
                Err(e) => AuditLine { name: "lower_bound_net", observed: forced, bound: None, status: "FAIL", note: e.to_string() },
            });
            audits.push(wm_line(&learner));
            let report = report(l, &learner, g, None, None, audits);
            return Ok(Outcome { transcript, report });
        }
        AdversarySpec::Realizable => {}
    }

    let count = cfg.points.unwrap_or(l.t_max);
    if count > l.t_max {
        return Err(CliError::Usage(format!("points = {count} exceeds T_max = {}", l.t_max)));
    }
    let (net, points) = make_target(cfg, &mut rng, count)?;
    let mut adv = realizable_adversary(net.clone(), points.clone())?;
    let transcript = run_game(&mut learner, &mut adv as &mut dyn Adversary, count, seed, snapshot);
    let shown = &points[..transcript.rounds.len()];
    let measured = if shown.is_empty() { None } else { Some(margins(&net, shown)?) };
    audits.push(wm_line(&learner));

    let observed = transcript.mistakes();
    let gamma = l.gamma;
    let n = learner.len() as f64;
    match (l.mode, &measured) {
        (_, None) => audits.push(AuditLine::skip("mode_bound", observed, "no rounds played".into())),
        (Mode::General | Mode::MultiIndex, Some(m)) => {
            let width = net.layers()[0].outputs();
            let biased = net.layers()[0].bias().iter().any(|&b| b != 0.0) && !l.homogenize;
            if m.gamma1 < gamma - TOL {
                audits.push(AuditLine::skip("mode_bound", observed, format!("measured gamma1 {} < {gamma}", m.gamma1)));
            } else if g < width {
                audits.push(AuditLine::skip("mode_bound", observed, format!("g = {g} < first-layer width {width}")));
            } else if biased {
                audits.push(AuditLine::skip("mode_bound", observed, "biased first layer without homogenize".into()));
            } else {
                let q = g as f64 / (gamma * gamma);
                let z = transcript.distinct_regions().unwrap_or(0) as f64;
                let c = 3.0 * (q + z + n.log2()) + 3.0;
                let bound = (16.0 * q * q.log2()).max(c);
                audits.push(AuditLine::check("mode_bound", observed, bound, format!("max(16 q log2 q, C) with q = {q:.3}, C = {c:.3}")));
            }
        }
        (Mode::EverywhereMargin, Some(m)) => {
            if m.gamma < gamma - TOL {
                audits.push(AuditLine::skip("mode_bound", observed, format!("measured gamma {} < {gamma}", m.gamma)));
            } else {
                let mut prunable = true;
                for bit in 0..net.output_dim() {
                    let sub = single_output(&net, bit)?;
                    if prune_deep(&sub, shown, g, seed.wrapping_add(bit as u64), 8).is_err() {
                        prunable = false;
                    }
                }
                if !prunable {
                    audits.push(AuditLine::skip("mode_bound", observed, format!("no exact prune with g' = {g}")));
                } else {
                    let neurons = (l.output_bits() * g.pow(l.depth as u32)) as f64;
                    let bound = 3.0 * (neurons / (gamma * gamma) + n.log2()) + 3.0;
                    audits.push(AuditLine::check("mode_bound", observed, bound, format!("{neurons} neurons per expert")));
                }
            }
        }
    }
    let report = report(l, &learner, g, measured.as_ref().map(|m| m.gamma1), measured.as_ref().map(|m| m.gamma), audits);
    Ok(Outcome { transcript, report })
}

fn wm_line(learner: &nnol::learners::MetaLearner) -> AuditLine {
    let best = learner.best_expert_mistakes();
    AuditLine::check(
        "wm_bound",
        learner.mistakes(),
        wm_audit_bound(best, learner.len()),
        format!("L* = {best}, n = {}", learner.len()),
    )
}

fn report(
    l: &MetaLearnerConfig,
    learner: &nnol::learners::MetaLearner,
    g: usize,
    gamma1: Option<f64>,
    gamma: Option<f64>,
    audits: Vec<AuditLine>,
) -> AuditReport {
    AuditReport {
        mode: l.mode,
        experts: learner.len(),
        g,
        best_expert_mistakes: learner.best_expert_mistakes(),
        measured_gamma1: gamma1,
        measured_gamma: gamma,
        audits,
    }
}
