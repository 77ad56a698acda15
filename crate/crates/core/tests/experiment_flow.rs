use orchestrion::config::ExperimentConfig;
use orchestrion::experiment::{
    evaluate, export_trajectories, parse_training_log, read_file, replay_checkpoints, run_adaptive, run_static,
    train_bandit, training_log_csv, Environment,
};
use orchestrion::reward::reward;
use orchestrion::simulation::ContextLabel;

const CONFIG: &str = r#"
[reward]
beta = 1.0

[experiment]
timesteps = 1200
seeds = [3]
checkpoint_interval = 100
eval_interval = 400
eval_repeats = 4

[baseline]
epochs = 40

[dataset]
n_train = 60
n_test = 15
seed = 11
"#;

#[test]
fn config_driven_run() {
    let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    let env = Environment::from_config(&cfg).unwrap();
    let split = cfg.load_dataset().unwrap();
    let run = run_adaptive(&env, &split, &cfg.experiment, 3).unwrap();
    assert_eq!(run.log.rows.len(), 1200);
    assert_eq!(run.log.checkpoints.len(), 12);
    assert_eq!(run.log.evaluations.iter().map(|e| e.0).collect::<Vec<_>>(), vec![400, 800, 1200]);
    assert_eq!(run.log.evaluations.last().unwrap().1, run.report);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectories.csv");
    export_trajectories(&env, &run.log, &path).unwrap();
    assert_eq!(read_file(&path).unwrap().lines().count(), 1 + 12 * 3 * env.arm_count());

    let rows = parse_training_log(&training_log_csv(&run.log).unwrap(), &env).unwrap();
    for r in &rows {
        assert_eq!(reward(r.f1, r.seconds, &env.reward).unwrap().reward, r.reward);
    }
    assert_eq!(replay_checkpoints(&env, &rows, 100).unwrap(), run.log.checkpoints);
    assert_eq!(evaluate(&env, &run.state, &split, 4, 3).unwrap(), run.report);
}

#[test]
fn adaptive_dominates_static_on_mean_reward() {
    for beta in [1.0, 0.5] {
        let mut cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
        cfg.reward.beta = beta;
        cfg.experiment.timesteps = 3500;
        cfg.experiment.eval_interval = 0;
        cfg.experiment.eval_repeats = 20;
        cfg.baseline.epochs = 200;
        cfg.dataset.n_train = 210;
        cfg.dataset.n_test = 51;
        let env = Environment::from_config(&cfg).unwrap();
        let split = cfg.load_dataset().unwrap();
        for seed in 0..5 {
            let a = run_adaptive(&env, &split, &cfg.experiment, seed).unwrap();
            let s = run_static(&env, &split, cfg.baseline, &cfg.experiment, seed).unwrap();
            assert!(
                a.report.overall.mean_reward >= s.report.overall.mean_reward,
                "beta {beta} seed {seed}: {} < {}",
                a.report.overall.mean_reward,
                s.report.overall.mean_reward
            );
        }
    }
}

#[test]
fn time_agnostic_selection_rates() {
    let mut cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    cfg.experiment.timesteps = 3500;
    cfg.experiment.eval_interval = 0;
    cfg.dataset.n_train = 210;
    let env = Environment::from_config(&cfg).unwrap();
    let oracle = env.oracle().unwrap();
    let split = cfg.load_dataset().unwrap();
    let mut rates = [0.0; 3];
    for seed in 0..5 {
        let (_, log) = train_bandit(&env, &split, &cfg.experiment, seed).unwrap();
        let tail = &log.rows[log.rows.len() - 500..];
        for ctx in ContextLabel::ALL {
            let in_ctx: Vec<_> = tail.iter().filter(|r| r.context == ctx).collect();
            let hits = in_ctx.iter().filter(|r| r.arm == oracle.best_arm(ctx)).count();
            rates[ctx.index()] += hits as f64 / in_ctx.len() as f64 / 5.0;
        }
    }
    for (ctx, rate) in ContextLabel::ALL.iter().zip(rates) {
        assert!(rate >= 0.8, "context {ctx}: oracle arm chosen at rate {rate:.3}");
    }
}
