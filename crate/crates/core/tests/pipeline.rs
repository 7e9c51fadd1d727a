use leo_core::baselines::surrogate_fit;
use leo_core::graph::{solve_gn, IncrementalSolver, SolverConfig};
use leo_core::leo::{evaluate, examples, train, LeoConfig};
use leo_core::models::ThetaParams;
use leo_core::navsim::{generate, model_template, random_theta, Dataset, DatasetId, GenSpec};

fn small(id: DatasetId, seed: u64) -> (GenSpec, Dataset) {
    let spec = GenSpec { num_traj: 8, train_count: 5, steps: 60, ..GenSpec::defaults(id, seed) };
    let ds = generate(&spec).unwrap();
    (spec, ds)
}

#[test]
fn dataset_and_theta_survive_disk_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (spec, ds) = small(DatasetId::N4, 2);
    let path = tmp.path().join("n4.jsonl");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.train().len(), 5);

    let theta = spec.theta_star();
    let tp = tmp.path().join("theta.json");
    theta.save_json(&tp).unwrap();
    assert_eq!(ThetaParams::load_json(&tp).unwrap(), theta);
}

#[test]
fn leo_moves_toward_the_noise_floor() {
    let (spec, ds) = small(DatasetId::N1, 4);
    let id = spec.dataset_id;
    let (tr, te) = (examples(ds.train(), id), examples(ds.test(), id));
    let cfg = LeoConfig { lr: 0.05, max_epochs: 60, convergence_window: 0, ..Default::default() };
    let init = random_theta(id, -3.0, 1.0, 9);
    let before = evaluate(&te, &init, &cfg.solver).unwrap();
    let (theta, log) = train(&tr, &te, &init, &cfg).unwrap();
    let after = evaluate(&te, &theta, &cfg.solver).unwrap();
    let star = evaluate(&te, &spec.theta_star(), &cfg.solver).unwrap();
    assert_eq!(log.records.len(), 60);
    assert!(after.trans_rmse_mean < before.trans_rmse_mean);
    assert!(after.trans_rmse_mean < 1.5 * star.trans_rmse_mean, "{} vs {}", after.trans_rmse_mean, star.trans_rmse_mean);
}

#[test]
fn surrogate_recovers_generating_noise() {
    let (spec, ds) = small(DatasetId::N3, 1);
    let fitted = surrogate_fit(&examples(&ds.episodes, spec.dataset_id), &model_template(spec.dataset_id, 0.0)).unwrap();
    for (a, b) in fitted.to_flat().iter().zip(spec.theta_star().to_flat()) {
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn streaming_solve_matches_batch() {
    let (spec, ds) = small(DatasetId::N3, 3);
    let ep = &ds.episodes[0];
    let graph = leo_core::navsim::to_graph(ep, spec.dataset_id);
    let theta = spec.theta_star();
    let mut by_step = vec![Vec::new(); graph.num_vars()];
    for f in graph.factors() {
        by_step[*f.vars().iter().max().unwrap()].push(f.clone());
    }
    let mut inc = IncrementalSolver::new(SolverConfig::default());
    for step in by_step {
        inc.update(&theta, 1, step).unwrap();
    }
    assert_eq!(inc.calls(), 60);
    let batch = solve_gn(&graph, &theta, &ep.gps_guess(), &SolverConfig::default()).unwrap();
    let gap = batch.mean.local(&inc.posterior().unwrap().mean);
    assert!(gap.iter().all(|v| v.abs() < 1e-6));
}
