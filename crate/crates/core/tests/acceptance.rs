//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use orchestrion::bandit::{BanditConfig, LinUcbState};
use orchestrion::baseline::BaselineConfig;
use orchestrion::config::RunConfig;
use orchestrion::dataset::{synthesize, DatasetSplit};
use orchestrion::experiment::{
    evaluation_csv, run_adaptive, run_static, static_curve_csv, train_bandit, train_uniform, training_log_csv,
    Environment,
};
use orchestrion::graph::{enumerate_valid, ArmId};
use orchestrion::registry::paper_qa_registry;
use orchestrion::reward::{reward, time_cost, RewardConfig};
use orchestrion::rng::stream;
use orchestrion::simulation::{default_profiles, execute_pipeline, simulate_task, ContextLabel, Query};
use rand::Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn env(beta: f64, alpha: f64) -> Environment {
    Environment::new(
        paper_qa_registry(),
        default_profiles(),
        RewardConfig::default().with_beta(beta),
        BanditConfig { alpha, bias: false },
    )
    .unwrap()
}

fn paper_split() -> DatasetSplit {
    synthesize(210, 51, 7).unwrap()
}

fn run_cfg(eval_repeats: usize) -> RunConfig {
    RunConfig { eval_interval: 0, eval_repeats, ..RunConfig::default() }
}

fn arm_with_label(e: &Environment, label: &str) -> usize {
    (0..e.arm_count()).find(|a| e.arm_label(*a) == label).unwrap()
}

fn arm_space() -> Outcome {
    let start = Instant::now();
    let reg = paper_qa_registry();
    let graphs = enumerate_valid(&reg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let labels: BTreeSet<String> = graphs.iter().map(|g| g.label(&reg)).collect();
    let expected: BTreeSet<String> = [
        "NoR",
        "OneR",
        "IRCoT",
        "NoR+OneR+Aggregate",
        "NoR+IRCoT+Aggregate",
        "OneR+IRCoT+Aggregate",
        "NoR+OneR+IRCoT+Aggregate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    outcome(
        graphs.len() == 7 && labels == expected && elapsed < 1.0,
        format!("{} pipelines in {elapsed:.3}s", graphs.len()),
    )
}

fn reward_algebra() -> Outcome {
    let cfg = RewardConfig::default();
    let checks = [
        (time_cost(0.66, &cfg).unwrap(), 0.0),
        (time_cost(6.46, &cfg).unwrap(), 0.000646),
        (time_cost(189.78, &cfg).unwrap(), 3.7956),
        (reward(0.914, 0.66, &cfg).unwrap().reward, 0.457),
    ];
    let worst = checks.iter().map(|(got, want)| (got - want).abs()).fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max abs error {worst:.2e}"))
}

/// Ridge solution via QR of the stacked system [X; I]θ = [y; 0].
fn ridge_by_qr(xs: &[Vec<f64>], ys: &[f64], d: usize) -> DVector<f64> {
    let n = xs.len();
    let mut m = DMatrix::zeros(n + d, d);
    let mut rhs = DVector::zeros(n + d);
    for (i, x) in xs.iter().enumerate() {
        for j in 0..d {
            m[(i, j)] = x[j];
        }
        rhs[i] = ys[i];
    }
    for j in 0..d {
        m[(n + j, j)] = 1.0;
    }
    let qr = m.qr();
    let qtb = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qtb).unwrap()
}

fn linucb_oracle() -> Outcome {
    let (d, arms) = (3, 7);
    let mut worst = 0.0f64;
    for seq in 0..100u64 {
        let mut rng = stream(seq, &[0xacc3]);
        let ids: Vec<ArmId> = (0..arms).map(|a| ArmId::from_raw(format!("arm{a}"))).collect();
        let mut state = LinUcbState::init(ids, d, 1.0).unwrap();
        let mut data: Vec<(Vec<Vec<f64>>, Vec<f64>)> = vec![(vec![], vec![]); arms];
        for _ in 0..rng.random_range(1..300) {
            let x: Vec<f64> = if rng.random_bool(0.5) {
                let mut v = vec![0.0; d];
                v[rng.random_range(0..d)] = 1.0;
                v
            } else {
                (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let arm = rng.random_range(0..arms);
            let r = rng.random_range(-4.0..1.0);
            state.update(arm, &x, r).unwrap();
            data[arm].0.push(x);
            data[arm].1.push(r);
        }
        for (arm, (xs, ys)) in data.iter().enumerate() {
            let theta = ridge_by_qr(xs, ys, d);
            for _ in 0..5 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let want = theta.dot(&DVector::from_column_slice(&x));
                let got = state.expected_reward(arm, &x).unwrap();
                worst = worst.max((got - want).abs());
            }
        }
    }
    outcome(worst <= 1e-9, format!("100 sequences, max abs error {worst:.2e}"))
}

fn time_agnostic_convergence() -> Outcome {
    let start = Instant::now();
    let split = paper_split();
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        let e = env(1.0, alpha);
        let nor = arm_with_label(&e, "NoR");
        let ircot: Vec<usize> = (0..e.arm_count()).filter(|a| e.arm_label(*a).contains("IRCoT")).collect();
        let mut good = 0;
        for seed in SEEDS {
            let (_, log) = train_bandit(&e, &split, &run_cfg(1), seed).unwrap();
            let m = log.modal_arms(500, e.arm_count());
            let ok = m[0] == Some(nor)
                && m[1].is_some_and(|a| ircot.contains(&a))
                && m[2].is_some_and(|a| ircot.contains(&a));
            good += usize::from(ok);
        }
        pass &= good >= 4;
        parts.push(format!("alpha {alpha}: {good}/5"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(pass, format!("{} seeds converged ({elapsed:.1}s for 15 runs)", parts.join(", ")))
}

fn time_aware_tradeoff() -> Outcome {
    let split = paper_split();
    let e = env(0.5, 1.0);
    let oracle = e.oracle().unwrap();
    let oner = arm_with_label(&e, "OneR");
    let mut counts = [0; 3];
    for seed in SEEDS {
        let (_, log) = train_bandit(&e, &split, &run_cfg(1), seed).unwrap();
        let m = log.modal_arms(500, e.arm_count());
        counts[0] += usize::from(m[0] == Some(oracle.best_arm(ContextLabel::A)));
        counts[1] += usize::from(m[1] == Some(oner));
        counts[2] += usize::from(m[2] == Some(oracle.best_arm(ContextLabel::C)));
    }
    let names = ContextLabel::ALL.map(|c| e.arm_label(oracle.best_arm(c)));
    outcome(
        counts.iter().all(|c| *c >= 4) && oracle.best_arm(ContextLabel::B) == oner,
        format!(
            "B -> OneR in {}/5; A -> {} in {}/5; C -> {} in {}/5",
            counts[1], names[0], counts[0], names[2], counts[2]
        ),
    )
}

fn adaptive_beats_static() -> Outcome {
    let split = paper_split();
    let e = env(1.0, 1.0);
    let run = run_cfg(50);
    let mut gaps = Vec::new();
    let mut per_context_ok = 0;
    let mut worst_ctx = f64::INFINITY;
    for seed in SEEDS {
        let a = run_adaptive(&e, &split, &run, seed).unwrap();
        let s = run_static(&e, &split, BaselineConfig::default(), &run, seed).unwrap();
        gaps.push(a.report.overall.mean_f1 - s.report.overall.mean_f1);
        let ctx_gap = ContextLabel::ALL
            .iter()
            .map(|c| a.report.context(*c).mean_f1 - s.report.context(*c).mean_f1)
            .fold(f64::INFINITY, f64::min);
        worst_ctx = worst_ctx.min(ctx_gap);
        per_context_ok += usize::from(ctx_gap >= -0.02);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    outcome(
        mean_gap >= 0.05 && per_context_ok >= 4,
        format!(
            "mean overall F1 gap {mean_gap:.4} (per seed {}); per-context within 0.02 in {per_context_ok}/5 (worst {worst_ctx:.4})",
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn static_baseline_behavior() -> Outcome {
    let split = paper_split();
    let e = env(1.0, 1.0);
    let mut good = 0;
    let mut labels = Vec::new();
    for seed in SEEDS {
        let s = run_static(&e, &split, BaselineConfig::default(), &run_cfg(1), seed).unwrap();
        let label = s.graph.label(&e.registry);
        let fixed = ContextLabel::ALL.iter().all(|c| s.report.selection_rate(s.arm, Some(*c)) == 1.0);
        let tasks: Vec<&str> = label.split('+').collect();
        let ok = fixed && tasks.contains(&"IRCoT") && !tasks.contains(&"NoR");
        good += usize::from(ok);
        let p = s.model.probabilities();
        labels.push(format!("{label} (p={:.3}/{:.3}/{:.3})", p[0], p[1], p[2]));
    }
    outcome(good >= 4, format!("{good}/5 seeds: {}", labels.join(", ")))
}

fn determinism() -> Outcome {
    let split = paper_split();
    let e = env(0.5, 1.0);
    let run = RunConfig { eval_interval: 500, ..run_cfg(5) };
    let a = run_adaptive(&e, &split, &run, 42).unwrap();
    let b = run_adaptive(&e, &split, &run, 42).unwrap();
    let s1 = run_static(&e, &split, BaselineConfig { epochs: 20, ..Default::default() }, &run, 42).unwrap();
    let s2 = run_static(&e, &split, BaselineConfig { epochs: 20, ..Default::default() }, &run, 42).unwrap();
    let same = training_log_csv(&a.log).unwrap() == training_log_csv(&b.log).unwrap()
        && evaluation_csv(&a.report).unwrap() == evaluation_csv(&b.report).unwrap()
        && a.state.to_text() == b.state.to_text()
        && a.log.evaluations == b.log.evaluations
        && static_curve_csv(s1.model.tasks(), &s1.curve).unwrap()
            == static_curve_csv(s2.model.tasks(), &s2.curve).unwrap()
        && evaluation_csv(&s1.report).unwrap() == evaluation_csv(&s2.report).unwrap();
    outcome(same, "training log, bandit state and reports byte-identical across two runs")
}

/// Majority vote where wrong answers never coincide and a tie produces no
/// answer: the gold answer needs at least two correct tasks.
fn majority_closed_form(p: &[f64]) -> f64 {
    match p {
        [a] => *a,
        [a, b] => a * b,
        [a, b, c] => a * b + a * c + b * c - 2.0 * a * b * c,
        _ => unreachable!(),
    }
}

fn simulator_calibration() -> Outcome {
    let profiles = default_profiles();
    let n = 100_000;
    let mut worst_task = 0.0f64;
    for task in ["NoR", "OneR", "IRCoT"] {
        for ctx in ContextLabel::ALL {
            let q = Query { id: "q".into(), text: None, context: ctx, gold_answers: vec!["gold".into()] };
            let mut rng = stream(99, &[ctx.index() as u64, task.len() as u64]);
            let hits = (0..n).filter(|_| simulate_task(task, &q, &profiles, &mut rng).unwrap().correct).count();
            let want = profiles.get(task, ctx).unwrap().success_prob;
            worst_task = worst_task.max((hits as f64 / n as f64 - want).abs());
        }
    }
    let e = env(1.0, 1.0);
    let mut worst_arm = 0.0f64;
    for (arm, plan) in e.plans.iter().enumerate() {
        if plan.parallel.len() < 2 {
            continue;
        }
        for ctx in ContextLabel::ALL {
            let q = Query { id: "q".into(), text: None, context: ctx, gold_answers: vec!["gold".into()] };
            let p: Vec<f64> = plan.parallel.iter().map(|t| profiles.get(&t.task, ctx).unwrap().success_prob).collect();
            let mut rng = stream(7, &[arm as u64, ctx.index() as u64]);
            let hits = (0..n)
                .filter(|_| execute_pipeline(plan, &q, &profiles, &mut rng).unwrap().final_answer == "gold")
                .count();
            worst_arm = worst_arm.max((hits as f64 / n as f64 - majority_closed_form(&p)).abs());
        }
    }
    outcome(
        worst_task <= 0.01 && worst_arm <= 0.01,
        format!("max task deviation {worst_task:.4}, max multi-task arm deviation {worst_arm:.4}"),
    )
}

fn regret_sanity() -> Outcome {
    let split = paper_split();
    let mut wins = 0;
    let mut margins = Vec::new();
    for beta in [1.0, 0.5] {
        let e = env(beta, 1.0);
        for seed in SEEDS {
            let (_, bandit) = train_bandit(&e, &split, &run_cfg(1), seed).unwrap();
            let uniform = train_uniform(&e, &split, &run_cfg(1), seed).unwrap();
            let margin = bandit.cumulative_reward() - uniform.cumulative_reward();
            wins += usize::from(margin > 0.0);
            margins.push(margin);
        }
    }
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(wins == 10, format!("LinUCB ahead on {wins}/10 (seed, beta) pairs; smallest margin {min:.1}"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("arm space", arm_space),
        ("reward algebra", reward_algebra),
        ("linucb ridge equivalence", linucb_oracle),
        ("time-agnostic convergence", time_agnostic_convergence),
        ("time-aware trade-off", time_aware_tradeoff),
        ("adaptive beats static", adaptive_beats_static),
        ("static baseline behavior", static_baseline_behavior),
        ("determinism", determinism),
        ("simulator calibration", simulator_calibration),
        ("regret sanity", regret_sanity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
