use nnol::experts::{class_size_bound, enumerate_representing_class};
use nnol::game::{realizable_adversary, run_game};
use nnol::geometry::{Hyperplane, PointD};
use nnol::learners::{canonicalize_nonneg_output, MajorityTree, Learner, PerceptronLearner};
use nnol::network::{Layer, SignNetwork};
use nnol::perceptron::{manual_vector_for, perceptron_run, Embedding, ManualNeuron};
use nnol::wm::{wm_audit_bound, WmState};
use nnol::{mistake_budget, sign};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// Points of the unit ball at distance at least `gamma` from the hyperplane `w`.
fn margin_stream(rng: &mut ChaCha8Rng, w: &[f64], gamma: f64, len: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let x = in_ball(rng, w.len());
        let m: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        if m.abs() >= gamma {
            out.push(x);
        }
    }
    out
}

fn brute_majority(g: usize, r: &[i8]) -> i8 {
    if r.len() == 1 {
        return r[0];
    }
    let child = r.len() / g;
    let sum: i32 = r.chunks(child).map(|c| i32::from(brute_majority(g, c))).sum();
    if sum >= 0 {
        1
    } else {
        -1
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_rows_have_unit_norm(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..5)) {
        prop_assume!(rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-6));
        let n = rows.len();
        let l = Layer::new(rows, vec![0.0; n]).unwrap();
        for r in l.weights() {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perceptron_respects_margin_bound(seed in any::<u64>(), d in 1usize..6, gi in 0usize..3) {
        let gamma: f64 = [0.2, 0.5, 0.9][gi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = unit(&mut rng, d);
        let xs = margin_stream(&mut rng, &w, gamma, 60);
        let ys: Vec<i8> = xs.iter().map(|x| sign(w.iter().zip(x).map(|(a, b)| a * b).sum())).collect();
        let run = perceptron_run(xs.iter().map(Vec::as_slice).zip(ys.iter().copied())).unwrap();
        prop_assert!(run.mistakes <= mistake_budget(gamma));
    }

    #[test]
    fn manual_neuron_replays_perceptron(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = unit(&mut rng, d);
        let target = Hyperplane::through_origin(w.clone()).unwrap();
        let xs: Vec<PointD> = margin_stream(&mut rng, &w, 0.3, 25).into_iter().map(|v| PointD::new(v).unwrap()).collect();
        let fit = manual_vector_for(&target, &xs, xs.len()).unwrap();
        let mut n = ManualNeuron::new(fit.manual, d);
        let mut p = PerceptronLearner::new(d, Embedding::Raw);
        for x in &xs {
            let manual_side = n.predict(x.coords()).unwrap();
            let perceptron_side = if p.predict(x).unwrap() == 2 { 1 } else { -1 };
            prop_assert_eq!(manual_side, perceptron_side);
            p.receive(x, if target.side(x.coords()) > 0 { 2 } else { 1 }).unwrap();
            n.step(x.coords()).unwrap();
        }
        prop_assert_eq!(n.weights(), p.weights());
    }

    #[test]
    fn wm_bound_and_weight_drop(seed in any::<u64>(), n in 1usize..65, rounds in 1usize..200, labels in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wm = WmState::new(n).unwrap();
        let mut expert_mistakes = vec![0usize; n];
        for _ in 0..rounds {
            let y = rng.random_range(1..=labels);
            let preds: Vec<usize> = (0..n)
                .map(|i| if i == 0 && rng.random_bool(0.9) { y } else { rng.random_range(1..=labels) })
                .collect();
            let r = wm.round(&preds, y).unwrap();
            if r.mistake {
                prop_assert!(r.total_after <= 0.75 * r.total_before + 1e-12);
            } else {
                prop_assert_eq!(r.total_after, r.total_before);
            }
            for (m, &p) in expert_mistakes.iter_mut().zip(&preds) {
                *m += usize::from(p != y);
            }
        }
        let best = *expert_mistakes.iter().min().unwrap();
        prop_assert!(wm.mistakes() as f64 <= wm_audit_bound(best, n));
    }

    #[test]
    fn majority_tree_matches_recursion(g in 1usize..5, depth in 1usize..4, seed in any::<u64>()) {
        let tree = MajorityTree::new(g, depth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..32 {
            let r: Vec<i8> = (0..tree.leaves()).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
            prop_assert_eq!(tree.eval(&r).unwrap(), brute_majority(g, &r));
        }
    }

    #[test]
    fn class_is_sparse_and_bounded(g in 1usize..3, t in 1usize..7, gi in 0usize..3) {
        let gamma = [0.6, 0.75, 1.0][gi];
        let c = enumerate_representing_class(g, t, gamma, 1 << 20).unwrap();
        let budget = mistake_budget(gamma);
        prop_assert!(c.vectors().iter().all(|v| v.popcount() <= budget));
        prop_assert_eq!(c.members().count() as u128, c.count());
        prop_assert!(c.count() <= class_size_bound(g, t, gamma));
    }

    #[test]
    fn canonical_form_keeps_outputs(seed in any::<u64>(), width in 1usize..8) {
        let net = SignNetwork::random(&[3, width, 1], seed).unwrap();
        let c = canonicalize_nonneg_output(&net).unwrap();
        prop_assert!(c.layers()[1].weights()[0].iter().all(|&o| o >= 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..200 {
            let x = PointD::new(in_ball(&mut rng, 3)).unwrap();
            prop_assert_eq!(net.output_bits(&x).unwrap(), c.output_bits(&x).unwrap());
        }
    }

    #[test]
    fn transcript_flags_recompute(seed in any::<u64>()) {
        let net = SignNetwork::random(&[2, 3, 1], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<PointD> = (0..15).map(|_| PointD::new(in_ball(&mut rng, 2)).unwrap()).collect();
        let mut adv = realizable_adversary(net.clone(), xs.clone()).unwrap();
        let mut learner = PerceptronLearner::new(2, Embedding::Homogenized);
        let t = run_game(&mut learner, &mut adv, 100, seed, serde_json::Value::Null);
        prop_assert!(t.consistent());
        prop_assert_eq!(t.rounds.len(), 15);
        for (r, x) in t.rounds.iter().zip(&xs) {
            prop_assert_eq!(r.y_true, net.label_of(x).unwrap());
        }
        let csv_mistakes = t.to_csv().lines().skip(1).filter(|l| l.ends_with(",1")).count();
        prop_assert_eq!(csv_mistakes, t.mistakes());
    }
}
