use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use serde::Serialize;
use serde_json::json;

use nnol::adaptive::{combine_learners_wm, AdapLearner, Factory, PerfectStub, StubFactory, StubPolicy, Target};
use nnol::geometry::{grid_ts_packing, simplex_ts_packing, ts_bounds, verify_ts_packing, PointD, TsPacking};
use nnol::learners::{prune_deep, prune_shallow, Learner};
use nnol::network::{build_lowerbound_net, margins, SignNetwork};
use nnol::wm::wm_audit_bound;

use crate::CliError;

pub enum Shape {
    Grid { dim: usize, eps: f64 },
    Simplex { dim: usize },
}

/// `path` with `suffix` appended to its file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `text`, reads it back and checks the bytes survived.
pub fn write_checked(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    if fs::read_to_string(path)? != text {
        return Err(CliError::Audit(format!("{} did not read back identically", path.display())));
    }
    Ok(())
}

/// Serializes, writes, re-parses and compares.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    write_checked(path, &text)?;
    let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if back != serde_json::to_value(value)? {
        return Err(CliError::Audit(format!("{} failed the JSON round trip", path.display())));
    }
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn packing(shape: Shape, out: &Path, strict: bool) -> Result<(), CliError> {
    let p = match shape {
        Shape::Grid { dim, eps } => grid_ts_packing(dim, eps)?,
        Shape::Simplex { dim } => simplex_ts_packing(dim)?,
    };
    let text = p.to_json()?;
    write_checked(out, &text)?;
    let reloaded = TsPacking::from_json(&fs::read_to_string(out)?)?;
    if reloaded.to_json()? != text {
        return Err(CliError::Audit("packing JSON failed the round trip".into()));
    }
    let report = verify_ts_packing(&p, strict)?;
    let dim = p.dim().unwrap_or(0);
    let bounds = ts_bounds(dim, p.epsilon()).ok();
    write_json(
        &with_suffix(out, ".report.json"),
        &json!({
            "points": p.len(),
            "dim": dim,
            "epsilon": p.epsilon(),
            "verification": report,
            "bounds": bounds.map(|b| json!({"lower": b.lower.to_string(), "upper": b.upper})),
        }),
    )?;
    println!("packing: {} points in dimension {dim}, eps = {}", p.len(), p.epsilon());
    if report.passed {
        println!("verification: PASS ({} pairs)", report.pairs_checked);
        Ok(())
    } else {
        Err(CliError::Audit(format!("verification failed: {:?}", report.violation)))
    }
}

pub fn prune(
    net_path: &Path,
    points_path: &Path,
    g: usize,
    depth: usize,
    seed: u64,
    retries: usize,
    out: &Path,
) -> Result<(), CliError> {
    let net: SignNetwork = read_json(net_path)?;
    let points: Vec<PointD> = read_json(points_path)?;
    if net.depth() != depth {
        return Err(CliError::Usage(format!("--depth {depth} but the network has {} hidden layers", net.depth())));
    }
    let nonneg = net.layers().last().is_some_and(|l| l.weights().iter().flatten().all(|&o| o >= 0.0));
    let result = if depth == 1 && nonneg {
        prune_shallow(&net, &points, g, seed, retries).and_then(|idx| {
            let full = prune_deep(&net, &points, g, seed, retries)?;
            debug_assert_eq!(full.indices(), idx);
            Ok(full)
        })
    } else {
        prune_deep(&net, &points, g, seed, retries)
    };
    match result {
        Ok(p) => {
            let hits = p.agreement(&net, &points)?;
            write_json(
                out,
                &json!({
                    "accepted": true,
                    "indices": p.indices(),
                    "leaves": p.leaves,
                    "tree": p.tree,
                    "agreement": format!("{hits}/{}", points.len()),
                }),
            )?;
            println!("prune: accepted, agreement {hits}/{}", points.len());
            if hits == points.len() {
                Ok(())
            } else {
                Err(CliError::Audit(format!("accepted prune matches only {hits}/{} points", points.len())))
            }
        }
        Err(e @ (nnol::Error::PruneFailed { .. } | nnol::Error::AuditFailed(_))) => {
            write_json(out, &json!({"accepted": false, "error": e.to_string()}))?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn threshold_target() -> Target {
    Rc::new(|x: &PointD| if x.coords()[0] >= 0.0 { 2 } else { 1 })
}

fn stub_adap(gamma_star: f64, b_star: f64, policy: StubPolicy, perfect: bool) -> Result<(AdapLearner, f64), CliError> {
    if perfect {
        let factory: Factory = Box::new(|_, _| Ok(Box::new(PerfectStub(threshold_target())) as Box<dyn Learner>));
        return Ok((AdapLearner::new(factory)?, 0.0));
    }
    let f = StubFactory::new(gamma_star, b_star, policy, threshold_target())?;
    let m = f.m();
    Ok((AdapLearner::new(f.into_factory())?, m))
}

/// Alternating points on either side of the threshold.
fn stub_stream(rounds: usize) -> impl Iterator<Item = (PointD, usize)> {
    (0..rounds).map(|i| {
        let x = PointD::new(vec![if i % 2 == 0 { 0.5 } else { -0.5 }]).expect("in the unit ball");
        let y = if i % 2 == 0 { 2 } else { 1 };
        (x, y)
    })
}

#[derive(Serialize)]
struct AdapSummary {
    total_mistakes: usize,
    final_phase: u64,
    final_b: u32,
    m: f64,
    bound_8m4: f64,
    audit: &'static str,
}

fn summarize(a: &AdapLearner, m: f64) -> AdapSummary {
    let bound = 8.0 * m.powi(4);
    let pass = a.mistakes() as f64 <= bound.max(0.0) + 1e-9;
    AdapSummary {
        total_mistakes: a.mistakes(),
        final_phase: a.phase(),
        final_b: a.b(),
        m,
        bound_8m4: bound,
        audit: if pass { "PASS" } else { "FAIL" },
    }
}

pub fn adap(stubs: &[(f64, f64)], policy: StubPolicy, perfect: bool, rounds: usize, out: &Path) -> Result<(), CliError> {
    if stubs.len() == 1 {
        let (gs, bs) = stubs[0];
        let (mut a, m) = stub_adap(gs, bs, policy, perfect)?;
        for (x, y) in stub_stream(rounds) {
            a.predict(&x)?;
            a.receive(&x, y)?;
        }
        write_checked(&with_suffix(out, ".schedule.csv"), &a.schedule_csv())?;
        let s = summarize(&a, m);
        write_json(&with_suffix(out, ".summary.json"), &s)?;
        println!("adap: {} mistakes, final phase X = {}, 8M^4 = {}: {}", s.total_mistakes, s.final_phase, s.bound_8m4, s.audit);
        return if s.audit == "PASS" { Ok(()) } else { Err(CliError::Audit("8M^4 bound exceeded".into())) };
    }

    // Members are shared so their schedules stay readable after the run.
    let mut members: Vec<Box<dyn Learner>> = Vec::new();
    let mut ms = Vec::new();
    let mut traces = Vec::new();
    for &(gs, bs) in stubs {
        let (a, m) = stub_adap(gs, bs, policy, perfect)?;
        let shared = Rc::new(std::cell::RefCell::new(a));
        traces.push(shared.clone());
        members.push(Box::new(SharedLearner(shared)));
        ms.push(m);
    }
    let mut c = combine_learners_wm(members)?;
    for (x, y) in stub_stream(rounds) {
        c.predict(&x)?;
        c.receive(&x, y)?;
    }
    let per: Vec<AdapSummary> = traces.iter().zip(&ms).map(|(t, &m)| summarize(&t.borrow(), m)).collect();
    for (i, t) in traces.iter().enumerate() {
        write_checked(&with_suffix(out, &format!(".schedule{}.csv", i + 1)), &t.borrow().schedule_csv())?;
    }
    let best = c.member_mistakes().iter().copied().min().unwrap_or(0);
    let wm_bound = wm_audit_bound(best, c.len());
    let wm_pass = c.mistakes() as f64 <= wm_bound;
    let all_pass = wm_pass && per.iter().all(|s| s.audit == "PASS");
    write_json(
        &with_suffix(out, ".summary.json"),
        &json!({
            "combined_mistakes": c.mistakes(),
            "member_mistakes": c.member_mistakes(),
            "wm_bound": wm_bound,
            "wm_audit": if wm_pass { "PASS" } else { "FAIL" },
            "members": per,
        }),
    )?;
    println!("combine: {} mistakes, WM bound {wm_bound}: {}", c.mistakes(), if wm_pass { "PASS" } else { "FAIL" });
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Audit("combined audit failed".into()))
    }
}

struct SharedLearner(Rc<std::cell::RefCell<AdapLearner>>);

impl Learner for SharedLearner {
    fn predict(&mut self, x: &PointD) -> nnol::Result<usize> {
        self.0.borrow_mut().predict(x)
    }

    fn receive(&mut self, x: &PointD, y: usize) -> nnol::Result<()> {
        self.0.borrow_mut().receive(x, y)
    }
}

pub fn lowerbound(packing_path: &Path, labels: &str, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(packing_path)?;
    let p = TsPacking::from_json(&text)?;
    let labels = labels
        .split(',')
        .map(|s| match s.trim() {
            "+1" | "1" | "+" => Ok(1i8),
            "-1" | "-" => Ok(-1i8),
            other => Err(CliError::Usage(format!("label {other:?} is not +1 or -1"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let net = build_lowerbound_net(&p, &labels)?;
    let m = margins(&net, p.points())?;
    let realized = p.points().iter().zip(&labels).all(|(x, &y)| net.output_bits(x).map(|b| b[0] == y).unwrap_or(false));
    write_json(out, &net)?;
    let reread: SignNetwork = read_json(out)?;
    if reread != net {
        return Err(CliError::Audit("network JSON failed the round trip".into()));
    }
    println!("lowerbound: architecture {:?}, gamma1 = {}, eps = {}", net.architecture(), m.gamma1, p.epsilon());
    if realized && m.gamma1 >= p.epsilon() - nnol::TOL {
        Ok(())
    } else {
        Err(CliError::Audit("constructed network does not realize the labels with margin eps".into()))
    }
}

pub fn eval(net_path: &Path, points_path: &Path) -> Result<(), CliError> {
    let net: SignNetwork = read_json(net_path)?;
    let points: Vec<PointD> = read_json(points_path)?;
    let labels = points.iter().map(|x| net.label_of(x)).collect::<nnol::Result<Vec<_>>>()?;
    let m = margins(&net, &points)?;
    println!("{}", serde_json::to_string(&json!({"labels": labels, "gamma1": m.gamma1, "gamma": m.gamma}))?);
    Ok(())
}
