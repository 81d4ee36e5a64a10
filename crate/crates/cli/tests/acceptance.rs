//! Desk-scale acceptance checks. Each criterion prints one PASS/FAIL line; the process exits
//! nonzero if any line is FAIL.

use std::fs;
use std::process::Command;
use std::rc::Rc;
use std::time::{Duration, Instant};

use nnol::adaptive::{combine_learners_wm, AdapLearner, StubFactory, StubPolicy, Target};
use nnol::experts::{oracle_expert, realized_regions};
use nnol::game::{force_mistake_adversary, realizable_adversary, run_game};
use nnol::geometry::{grid_ts_packing, simplex_ts_packing, verify_ts_packing, PointD};
use nnol::learners::{
    build_learner, canonicalize_nonneg_output, prune_deep, prune_shallow, ConstantLearner, Learner, MetaLearnerConfig, Mode,
    PerceptronLearner,
};
use nnol::network::{build_lowerbound_net, margins, multi_index_lift, random_orthonormal_signals, Layer, SignNetwork};
use nnol::perceptron::{perceptron_run, Embedding};
use nnol::wm::WmState;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if dot(&v, &v) <= 1.0 {
            return v;
        }
    }
}

/// A point of the unit ball with `|<w, x>| >= gamma` for unit `w`.
fn margin_point(rng: &mut ChaCha8Rng, w: &[f64], gamma: f64) -> Vec<f64> {
    let a = rng.random_range(gamma..=1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut v = in_ball(rng, w.len());
    let along = dot(&v, w);
    v.iter_mut().zip(w).for_each(|(vi, wi)| *vi -= along * wi);
    let room = (1.0 - a * a).max(0.0).sqrt();
    let n = dot(&v, &v).sqrt();
    let scale = if n > 0.0 { room * rng.random_range(0.0..1.0) / n } else { 0.0 };
    w.iter().zip(&v).map(|(wi, vi)| a * wi + scale * vi).map(|c| c * (1.0 - 1e-12)).collect()
}

/// Up to `count` points whose pre-activations in the checked layers clear `gamma`.
fn sample_with_margin(
    net: &SignNetwork,
    rng: &mut ChaCha8Rng,
    count: usize,
    gamma: f64,
    all_layers: bool,
    attempts: usize,
) -> Vec<PointD> {
    let d = net.input_dim();
    let mut out = Vec::new();
    for _ in 0..attempts {
        if out.len() == count {
            break;
        }
        // a quarter of the draws sit on the sphere, where large margins are reachable
        let mut v = in_ball(rng, d);
        if rng.random_bool(0.25) {
            let n = dot(&v, &v).sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|c| *c /= n);
            }
        }
        let x = PointD::new(v).unwrap();
        let act = net.forward(&x).unwrap();
        let layers = if all_layers { &act.pre[..] } else { &act.pre[..1] };
        if layers.iter().flatten().all(|p| p.abs() >= gamma) {
            out.push(x);
        }
    }
    out
}

fn with_zero_first_bias(net: &SignNetwork) -> SignNetwork {
    let mut layers = net.layers().to_vec();
    let first = &layers[0];
    layers[0] = Layer::new(first.weights().to_vec(), vec![0.0; first.outputs()]).unwrap();
    SignNetwork::new(layers).unwrap()
}

fn binary_label(net: &SignNetwork, x: &PointD) -> usize {
    net.label_of(x).unwrap()
}

fn c1_perceptron() -> Outcome {
    let gammas = [0.2, 0.5, 0.9];
    let mut worst = (0usize, 0usize);
    let mut failures = 0;
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 + (seed % 5) as usize;
        let gamma = gammas[(seed % 3) as usize];
        let w = unit(&mut rng, d);
        let xs: Vec<Vec<f64>> = (0..100).map(|_| margin_point(&mut rng, &w, gamma)).collect();
        let ys: Vec<i8> = xs.iter().map(|x| if dot(&w, x) >= 0.0 { 1 } else { -1 }).collect();
        let run = perceptron_run(xs.iter().map(Vec::as_slice).zip(ys.iter().copied())).unwrap();
        let budget = (1.0 / (gamma * gamma) - 1e-9).ceil() as usize;
        if run.mistakes > budget {
            failures += 1;
        }
        if run.mistakes * worst.1 >= worst.0 * budget {
            worst = (run.mistakes, budget);
        }
    }
    outcome(failures == 0, format!("500 streams, {failures} over budget, tightest {}/{}", worst.0, worst.1))
}

fn c2_weighted_majority() -> Outcome {
    let mut failures = Vec::new();
    let mut ratio_max: f64 = 0.0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=64usize);
        let rounds = rng.random_range(1..=200usize);
        let labels = rng.random_range(2..=8usize);
        let mut wm = WmState::new(n).unwrap();
        let mut expert_mistakes = vec![0usize; n];
        let good = rng.random_range(0..n);
        for _ in 0..rounds {
            let y = rng.random_range(1..=labels);
            let preds: Vec<usize> = (0..n)
                .map(|i| if i == good && rng.random_bool(0.9) { y } else { rng.random_range(1..=labels) })
                .collect();
            let r = wm.round(&preds, y).unwrap();
            if r.mistake {
                ratio_max = ratio_max.max(r.total_after / r.total_before);
                if 4.0 * r.total_after > 3.0 * r.total_before {
                    failures.push(format!("seed {seed}: weight ratio {}", r.total_after / r.total_before));
                }
            }
            for (m, &p) in expert_mistakes.iter_mut().zip(&preds) {
                *m += usize::from(p != y);
            }
        }
        let best = *expert_mistakes.iter().min().unwrap() as f64;
        let bound = 3.0 * (best + (n as f64).log2()) + 3.0;
        if wm.mistakes() as f64 > bound {
            failures.push(format!("seed {seed}: {} > {bound}", wm.mistakes()));
        }
    }
    outcome(failures.is_empty(), format!("200 pools, max mistake-round weight ratio {ratio_max:.4}; {failures:?}"))
}

fn c3_best_expert() -> Outcome {
    let mut failures = Vec::new();
    let mut done = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let width = 1 + (seed % 2) as usize;
        let d = 2 + (seed % 3) as usize;
        let (net, sample) = loop {
            let net = with_zero_first_bias(&SignNetwork::random(&[d, width, 1], rng.next_u64()).unwrap());
            let s = sample_with_margin(&net, &mut rng, 20, 0.5, false, 200_000);
            if s.len() == 20 {
                break (net, s);
            }
        };
        let gamma1 = margins(&net, &sample).unwrap().gamma1;
        let selected: Vec<usize> = (0..width).collect();
        let mut expert = oracle_expert(&net, &sample, &selected, sample.len()).unwrap();
        let tally = expert.run(sample.iter().map(|x| (x, binary_label(&net, x)))).unwrap();
        let z = realized_regions(&net, &sample, &selected).unwrap();
        let bound = width as f64 / (gamma1 * gamma1) + z as f64;
        if tally.mistakes as f64 > bound + 1e-9 || gamma1 < 0.5 {
            failures.push(format!("seed {seed}: {} > {bound}", tally.mistakes));
        }
        done += 1;
    }
    outcome(failures.is_empty(), format!("{done} targets; {failures:?}"))
}

/// Biased single-output target over `R^d` with instances at first-layer margin `gamma`.
fn general_target(rng: &mut ChaCha8Rng, d: usize, width: usize, gamma: f64, count: usize) -> (SignNetwork, Vec<PointD>) {
    loop {
        let net = SignNetwork::random(&[d, width, 1], rng.next_u64()).unwrap();
        let s = sample_with_margin(&net, rng, count, gamma, false, 20_000);
        if s.len() == count {
            return (net, s);
        }
    }
}

fn c4_general_learner() -> Outcome {
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut max_experts = 0;
    for &gamma in &[0.7, 1.0] {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let t = 8;
            let g = 1 + (seed % 2) as usize;
            let (net, xs) = general_target(&mut rng, 1, g, gamma, t);
            let mut cfg = MetaLearnerConfig::new(Mode::General, gamma, 1, t);
            cfg.g_override = Some(g);
            cfg.homogenize = true;
            let mut learner = build_learner(&cfg).unwrap();
            max_experts = max_experts.max(learner.len());
            let mut adv = realizable_adversary(net, xs).unwrap();
            let tr = run_game(&mut learner, &mut adv, t, seed, Value::Null);
            let best = learner.best_expert_mistakes() as f64;
            let bound = 3.0 * (best + (learner.len() as f64).log2()) + 3.0;
            if !tr.is_complete() || tr.mistakes() as f64 > bound || learner.len() > 10_000 {
                failures.push(format!("gamma {gamma} seed {seed}: {} vs {bound}", tr.mistakes()));
            }
            runs += 1;
        }
    }
    outcome(failures.is_empty(), format!("{runs} runs, at most {max_experts} experts; {failures:?}"))
}

fn c5_multi_index() -> Outcome {
    let (gamma, t) = (0.7, 8);
    let dump = |d: usize| {
        let mut cfg = MetaLearnerConfig::new(Mode::MultiIndex, gamma, d, t);
        cfg.k = Some(1);
        let learner = build_learner(&cfg).unwrap();
        let mut buf = Vec::new();
        learner.class().dump(&mut buf).unwrap();
        buf
    };
    let (d5, d50) = (dump(5), dump(50));
    let dumps_equal = d5 == d50 && !d5.is_empty();

    let mut mismatches = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = with_zero_first_bias(&SignNetwork::random(&[1, 1, 1], rng.next_u64()).unwrap());
    let zs = sample_with_margin(&phi, &mut rng, t, gamma, false, 100_000);
    let base_cfg = MetaLearnerConfig::new(Mode::General, gamma, 1, t);
    let mut base = build_learner(&base_cfg).unwrap();
    let mut adv = realizable_adversary(phi.clone(), zs.clone()).unwrap();
    let baseline = run_game(&mut base, &mut adv, t, 0, Value::Null);
    for r in 0..20u64 {
        let d = if r % 2 == 0 { 5 } else { 50 };
        let signals = random_orthonormal_signals(d, 1, 500 + r).unwrap();
        let lifted = multi_index_lift(&phi, &signals).unwrap();
        let xs: Vec<PointD> =
            zs.iter().map(|z| PointD::new(signals[0].iter().map(|s| s * z.coords()[0]).collect()).unwrap()).collect();
        let mut cfg = MetaLearnerConfig::new(Mode::MultiIndex, gamma, d, t);
        cfg.k = Some(1);
        let mut learner = build_learner(&cfg).unwrap();
        let mut adv = realizable_adversary(lifted, xs).unwrap();
        let tr = run_game(&mut learner, &mut adv, t, r, Value::Null);
        let same_labels = tr.rounds.iter().zip(&baseline.rounds).all(|(a, b)| a.y_true == b.y_true);
        if tr.mistakes() != baseline.mistakes() || !same_labels {
            mismatches.push(format!("rotation {r} (d = {d}): {} vs {}", tr.mistakes(), baseline.mistakes()));
        }
    }
    outcome(
        dumps_equal && mismatches.is_empty(),
        format!(
            "dumps {} ({} bytes); baseline {} mistakes, 20 rotations {mismatches:?}",
            if dumps_equal { "identical" } else { "differ" },
            d5.len(),
            baseline.mistakes()
        ),
    )
}

fn c6_lower_bound() -> Outcome {
    let mut failures = Vec::new();
    let mut nets = 0;
    let mut games = 0;
    for d in 1..=3usize {
        for eps in [0.25, 0.5 / (d as f64).sqrt()] {
            let packing = grid_ts_packing(d, eps).unwrap();
            let n = packing.len();
            let mut rng = ChaCha8Rng::seed_from_u64(6000 + d as u64);
            for _ in 0..50 {
                let labels: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
                let net = build_lowerbound_net(&packing, &labels).unwrap();
                let right = packing.points().iter().zip(&labels).all(|(x, &y)| net.output_bits(x).unwrap()[0] == y);
                let gamma1 = margins(&net, packing.points()).unwrap().gamma1;
                if !right || gamma1 < eps - 1e-9 {
                    failures.push(format!("d {d} eps {eps}: labels {labels:?}, gamma1 {gamma1}"));
                }
                nets += 1;
            }

            let mut meta_cfg = MetaLearnerConfig::new(Mode::General, eps, d, n);
            meta_cfg.g_override = Some(1);
            meta_cfg.homogenize = true;
            let mut learners: Vec<(&str, Box<dyn Learner>)> = vec![
                ("constant 1", Box::new(ConstantLearner(1))),
                ("constant 2", Box::new(ConstantLearner(2))),
                ("perceptron", Box::new(PerceptronLearner::new(d, Embedding::Raw))),
                ("homogenized perceptron", Box::new(PerceptronLearner::new(d, Embedding::Homogenized))),
                ("meta", Box::new(build_learner(&meta_cfg).unwrap())),
                (
                    "combined",
                    Box::new(
                        combine_learners_wm(vec![
                            Box::new(ConstantLearner(1)),
                            Box::new(PerceptronLearner::new(d, Embedding::Homogenized)),
                        ])
                        .unwrap(),
                    ),
                ),
            ];
            for (name, learner) in learners.iter_mut() {
                let mut adv = force_mistake_adversary(packing.clone());
                let tr = run_game(learner.as_mut(), &mut adv, n, 0, Value::Null);
                let audit_ok = adv.audit().is_ok_and(|a| a.gamma1 >= eps - 1e-9);
                if tr.mistakes() != n || !audit_ok {
                    failures.push(format!("d {d} eps {eps} {name}: {} of {n} forced", tr.mistakes()));
                }
                games += 1;
            }
        }
    }
    outcome(failures.is_empty(), format!("{nets} nets, {games} forced games; {failures:?}"))
}

fn c7_packings() -> Outcome {
    const CAP: usize = 4096;
    let mut failures = Vec::new();
    let mut checked = 0;
    for d in 1..=6usize {
        for eps in [0.1, 0.2, 0.25, 0.5 / (d as f64).sqrt(), 0.5] {
            let half = (1.0 / (2.0 * eps * (d as f64).sqrt()) + 1e-9).floor() as u32;
            let expected = (2u64 * u64::from(half)).pow(d as u32);
            if eps > 0.5 / (d as f64).sqrt() + 1e-12 || expected as usize > CAP {
                continue;
            }
            let p = grid_ts_packing(d, eps).unwrap();
            let ok = verify_ts_packing(&p, false).unwrap().passed;
            if !ok || p.len() as u64 != expected {
                failures.push(format!("grid d {d} eps {eps}: {} points, expected {expected}, verified {ok}", p.len()));
            }
            checked += 1;
        }
        let s = simplex_ts_packing(d).unwrap();
        let ok = verify_ts_packing(&s, false).unwrap().passed;
        if !ok || s.len() != d || s.epsilon() != 0.5 {
            failures.push(format!("simplex d {d}: {} points, verified {ok}", s.len()));
        }
        checked += 1;
    }
    outcome(failures.is_empty(), format!("{checked} packings; {failures:?}"))
}

fn majority(signs: &[i8], g: usize) -> i8 {
    if signs.len() == 1 {
        return signs[0];
    }
    let sum: i32 = signs.chunks(signs.len() / g).map(|c| i32::from(majority(c, g))).sum();
    if sum >= 0 {
        1
    } else {
        -1
    }
}

fn c8_pruning() -> Outcome {
    let mut failures = Vec::new();
    let mut accepted = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + seed);
        let (net, s) = loop {
            let width = rng.random_range(5..=10usize);
            let net = canonicalize_nonneg_output(&SignNetwork::random(&[3, width, 1], rng.next_u64()).unwrap()).unwrap();
            let s = sample_with_margin(&net, &mut rng, 20, 0.3, true, 200_000);
            if s.len() == 20 {
                break (net, s);
            }
        };
        match prune_shallow(&net, &s, 201, seed, 8) {
            Ok(idx) => {
                accepted += 1;
                for x in &s {
                    let pre = &net.forward(x).unwrap().pre[0];
                    let signs: Vec<i8> = idx.iter().map(|&i| if pre[i] >= 0.0 { 1 } else { -1 }).collect();
                    if majority(&signs, 201) != net.output_bits(x).unwrap()[0] {
                        failures.push(format!("shallow seed {seed}: accepted prune disagrees"));
                        break;
                    }
                }
            }
            Err(nnol::Error::PruneFailed { .. }) => {}
            Err(e) => failures.push(format!("shallow seed {seed}: {e}")),
        }
    }

    let mut deep_accepted = 0;
    let mut deep_tried = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8500 + seed);
        // redraw until the net admits a sample at margin 0.4 in every layer
        let found = (0..200).find_map(|_| {
            let net = SignNetwork::random(&[3, 5, 3, 1], rng.next_u64()).unwrap();
            let s = sample_with_margin(&net, &mut rng, 10, 0.4, true, 20_000);
            (s.len() >= 5).then_some((net, s))
        });
        let Some((net, s)) = found else {
            continue;
        };
        deep_tried += 1;
        let g = 5;
        match prune_deep(&net, &s, g, seed, 8) {
            Ok(p) => {
                deep_accepted += 1;
                for x in &s {
                    let pre = &net.forward(x).unwrap().pre[0];
                    let signs: Vec<i8> = p
                        .leaves
                        .iter()
                        .map(|l| {
                            let v = if pre[l.index] >= 0.0 { 1 } else { -1 };
                            if l.negated {
                                -v
                            } else {
                                v
                            }
                        })
                        .collect();
                    if majority(&signs, g) != net.output_bits(x).unwrap()[0] {
                        failures.push(format!("deep seed {seed}: accepted prune disagrees"));
                        break;
                    }
                }
            }
            Err(nnol::Error::PruneFailed { .. }) => {}
            Err(e) => failures.push(format!("deep seed {seed}: {e}")),
        }
    }
    let rate_ok = accepted * 100 >= 95 * 20;
    outcome(
        rate_ok && failures.is_empty(),
        format!("shallow accepted {accepted}/20; deep accepted {deep_accepted}/{deep_tried}, all exact: {}; {failures:?}", failures.is_empty()),
    )
}

fn threshold() -> Target {
    Rc::new(|x: &PointD| if x.coords()[0] >= 0.0 { 2 } else { 1 })
}

fn run_stub(gamma_star: f64, b_star: f64, policy: StubPolicy) -> (usize, u64, f64) {
    let f = StubFactory::new(gamma_star, b_star, policy, threshold()).unwrap();
    let m = f.m();
    let mut a = AdapLearner::new(f.into_factory()).unwrap();
    for i in 0..20_000 {
        let x = PointD::new(vec![if i % 2 == 0 { 0.5 } else { -0.5 }]).unwrap();
        a.predict(&x).unwrap();
        a.receive(&x, if i % 2 == 0 { 2 } else { 1 }).unwrap();
    }
    (a.mistakes(), a.phase(), m)
}

fn c9_adap() -> Outcome {
    let (total, phase, m) = run_stub(0.5, 2.0, StubPolicy::StrictBudget);
    let trace_ok = total == 234 && phase == 16 && m == 4.0 && 8.0 * m.powi(4) == 2048.0;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for gs in [0.5, 0.25, 1.0 / 3.0, 0.6, 0.9] {
        for bs in [1.0, 2.0] {
            for policy in [StubPolicy::Honest, StubPolicy::StrictBudget] {
                let (total, _, m) = run_stub(gs, bs, policy);
                let bound = 8.0 * m.powi(4);
                worst = worst.max(total as f64 / bound);
                if total as f64 > bound {
                    failures.push(format!("({gs}, {bs}, {policy:?}): {total} > {bound}"));
                }
            }
        }
    }
    outcome(
        trace_ok && failures.is_empty(),
        format!("stub trace {total} mistakes, final X = {phase}; grid worst ratio to 8M^4 {worst:.3}; {failures:?}"),
    )
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"learner": {"mode": "general", "gamma": 0.7, "d": 1, "T_max": 8, "g_override": 2, "homogenize": true}}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let prefix = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_nnol"))
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", prefix.to_str().unwrap(), "--seed", "7"])
            .output()
            .unwrap()
            .status;
        let csv = fs::read(dir.path().join(format!("{name}.transcript.csv"))).unwrap_or_default();
        let json = fs::read(dir.path().join(format!("{name}.transcript.json"))).unwrap_or_default();
        outputs.push((status.success(), csv, json));
    }
    let same = outputs[0] == outputs[1] && outputs[0].0 && !outputs[0].1.is_empty();
    outcome(same, format!("two runs, transcripts {}", if same { "byte-identical" } else { "differ" }))
}

fn main() -> std::process::ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Option<u64>); 10] = [
        ("perceptron bound", c1_perceptron, Some(5)),
        ("weighted majority bound", c2_weighted_majority, Some(5)),
        ("best-expert bound", c3_best_expert, Some(10)),
        ("general learner end to end", c4_general_learner, Some(60)),
        ("multi-index invariance", c5_multi_index, Some(60)),
        ("lower bound realization", c6_lower_bound, Some(30)),
        ("packing constructions", c7_packings, Some(10)),
        ("pruning exactness", c8_pruning, Some(60)),
        ("adaptive audit", c9_adap, Some(5)),
        ("determinism", c10_determinism, None),
    ];
    let mut all = true;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|s| took < Duration::from_secs(s));
        let pass = o.pass && in_time;
        all &= pass;
        let limit = limit.map_or(String::new(), |s| format!(" (limit {s} s)"));
        println!(
            "criterion {:>2} {name}: {} [{:.2} s{limit}] {}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    if all {
        std::process::ExitCode::SUCCESS
    } else {
        eprintln!("some acceptance criteria failed");
        std::process::ExitCode::FAILURE
    }
}
