use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use leo_core::baselines::{self, NelderMeadConfig};
use leo_core::graph::{solve_gn, tracking_rmse, SolverConfig};
use leo_core::hmc::{bench_samplers, HmcConfig};
use leo_core::leo::{self, evaluate, examples, Example, LeoConfig, TemperatureSchedule};
use leo_core::models::ThetaParams;
use leo_core::navsim::{self, Dataset, DatasetId, GenSpec, Split};
use leo_core::toy1d::{self, InitScheme, InnerSolver, MlpWeights, SurfaceGrid, ToyConfig};
use leo_core::trainlog::TrainLog;
use leo_core::LeoError;

use crate::config::{self, BenchRun, EvalRun, Method, SurfaceRun, ThetaInit, ToyMethod, ToyRun, TrainRun};
use crate::{BenchArgs, DatasetGenArgs, EvalArgs, SurfaceArgs, ToyTrainArgs, TrainArgs, Usage};

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LeoError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| LeoError::io(path, e))?;
    Ok(())
}

fn echo<T: serde::Serialize>(path: &Path, cfg: &T) -> Result<()> {
    let text = config::to_pretty(cfg);
    info!("resolved config ({}):\n{}", path.display(), text.trim_end());
    write(path, &text)
}

fn usage<E: std::fmt::Display>(e: E) -> Usage {
    Usage(e.to_string())
}

fn timing_json(log: &TrainLog) -> String {
    let per_record: Vec<f64> = log.records.iter().map(|r| r.wall_clock_s).collect();
    config::to_pretty(&json!({
        "total_s": per_record.last().copied().unwrap_or(0.0),
        "per_record_s": per_record,
    }))
}

pub fn dataset_gen(a: DatasetGenArgs) -> Result<()> {
    let mut spec = match (&a.config, &a.id) {
        (Some(p), None) => config::load::<GenSpec>(p)?,
        (None, Some(id)) => {
            let id: DatasetId = id.parse().map_err(usage)?;
            GenSpec::defaults(id, 0)
        }
        (Some(_), Some(_)) => bail!(Usage("--id and --config are mutually exclusive".into())),
        (None, None) => bail!(Usage("--id is required".into())),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.num_traj {
        spec.num_traj = n;
    }
    if let Some(n) = a.steps {
        spec.steps = n;
    }
    if let Some(n) = a.train_count {
        spec.train_count = n;
    }
    spec.validate().map_err(usage)?;
    let ds = navsim::generate(&spec)?;
    write(&a.out, &ds.to_jsonl())?;
    echo(&a.out.with_extension("spec.json"), &spec)?;
    info!(
        "wrote {} episodes ({} train) to {}",
        ds.episodes.len(),
        ds.train_count,
        a.out.display()
    );
    Ok(())
}

fn resolve_train(a: &TrainArgs) -> Result<TrainRun> {
    let mut run = match &a.config {
        Some(p) => config::load::<TrainRun>(p)?,
        None => TrainRun {
            method: Method::Leo,
            dataset: Default::default(),
            init: ThetaInit::Constant { log_std: 0.0 },
            leo: None,
            nelder_mead: None,
            solver: None,
        },
    };
    if let Some(m) = &a.method {
        run.method = m.parse()?;
    }
    if let Some(d) = &a.dataset {
        run.dataset = d.clone();
    }
    let solver = run.solver();
    let lr_flags = a.lr.is_some() || a.epochs.is_some() || a.samples.is_some();
    match run.method {
        Method::Leo | Method::Perceptron => {
            let mut cfg = run.leo.take().unwrap_or_else(|| LeoConfig { solver, ..Default::default() });
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(v) = a.lr {
                cfg.lr = v;
            }
            if let Some(v) = a.epochs {
                cfg.max_epochs = v;
            }
            if let Some(v) = a.samples {
                cfg.samples = v;
            }
            if let Some(v) = a.temperature {
                cfg.temperature = v;
            }
            if let Some(v) = a.test_every {
                cfg.test_every = v;
            }
            if run.method == Method::Perceptron {
                if a.temperature.is_some_and(|t| t != 0.0) {
                    warn!("perceptron always trains at temperature 0; --temperature ignored");
                }
                cfg.temperature = 0.0;
                cfg.schedule = TemperatureSchedule::Constant;
            }
            cfg.validate().map_err(usage)?;
            run.leo = Some(cfg);
            run.nelder_mead = None;
            run.solver = None;
        }
        Method::NelderMead => {
            let mut cfg = run
                .nelder_mead
                .take()
                .unwrap_or_else(|| NelderMeadConfig { solver, ..Default::default() });
            if let Some(v) = a.budget {
                cfg.budget_fevals = v;
            }
            if let Some(v) = a.test_every {
                cfg.test_every = v;
            }
            if lr_flags || a.temperature.is_some() {
                warn!("nelder-mead ignores --lr, --epochs, --samples and --temperature");
            }
            run.leo = None;
            run.nelder_mead = Some(cfg);
            run.solver = None;
        }
        Method::Surrogate => {
            if lr_flags || a.temperature.is_some() || a.budget.is_some() {
                warn!("surrogate is a closed-form fit; --lr, --epochs, --samples, --temperature and --budget are ignored");
            }
            run.leo = None;
            run.nelder_mead = None;
            run.solver = Some(solver);
        }
    }
    if let Some(spec) = &a.init {
        let seed = a.seed.or(run.leo.as_ref().map(|c| c.seed)).unwrap_or(0);
        run.init = ThetaInit::parse(spec, seed)?;
    }
    if run.dataset.as_os_str().is_empty() {
        bail!(Usage("no dataset given".into()));
    }
    Ok(run)
}

fn eval_json(train: &[Example], test: &[Example], theta: &ThetaParams, solver: &SolverConfig) -> Result<(serde_json::Value, serde_json::Value)> {
    let mut out = serde_json::Map::new();
    let mut timing = serde_json::Map::new();
    for (name, set) in [("train", train), ("test", test)] {
        if set.is_empty() {
            continue;
        }
        let mut m = evaluate(set, theta, solver)?;
        timing.insert(format!("{name}_solve_time_mean_s"), m.solve_time_mean_s.into());
        m.solve_time_mean_s = 0.0;
        out.insert(name.into(), serde_json::to_value(m)?);
    }
    Ok((out.into(), timing.into()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let run = resolve_train(&a)?;
    let ds = Dataset::load(&run.dataset)?;
    let id = ds.id()?;
    let (train_set, test_set) = (examples(ds.train(), id), examples(ds.test(), id));
    let theta0 = run.init.resolve(id)?;
    echo(&a.out.join("config.json"), &run)?;
    write(&a.out.join("theta_init.json"), &config::to_pretty(&theta0))?;

    let result = match run.method {
        Method::Leo => leo::train(&train_set, &test_set, &theta0, run.leo.as_ref().unwrap()),
        Method::Perceptron => baselines::perceptron_train(&train_set, &test_set, &theta0, run.leo.as_ref().unwrap()),
        Method::NelderMead => {
            baselines::blackbox_nelder_mead(&train_set, &test_set, &theta0, run.nelder_mead.as_ref().unwrap())
        }
        Method::Surrogate => baselines::surrogate_train(&train_set, &test_set, &theta0, &run.solver()),
    };
    let (theta, log) = match result {
        Ok(v) => v,
        Err(e) => {
            if let LeoError::TrainingAbort { log, .. } = &e {
                write(&a.out.join("trainlog.jsonl"), &log.to_jsonl(false))?;
                write(&a.out.join("timing.json"), &timing_json(log))?;
            }
            return Err(e.into());
        }
    };
    theta.save_json(&a.out.join("theta.json"))?;
    write(&a.out.join("trainlog.jsonl"), &log.to_jsonl(false))?;
    let (metrics, mut timing) = eval_json(&train_set, &test_set, &theta, &run.solver())?;
    write(&a.out.join("metrics.json"), &config::to_pretty(&metrics))?;
    timing["training"] = serde_json::from_str(&timing_json(&log))?;
    write(&a.out.join("timing.json"), &config::to_pretty(&timing))?;
    println!("{}", serde_json::to_string(&metrics)?);
    info!("{} finished after {} fevals; outputs in {}", log.method, log.fevals(), a.out.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => config::load::<EvalRun>(p)?,
        None => EvalRun {
            theta: Default::default(),
            dataset: Default::default(),
            split: Split::Test,
            solver: SolverConfig::default(),
        },
    };
    if let Some(t) = &a.theta {
        run.theta = t.clone();
    }
    if let Some(d) = &a.dataset {
        run.dataset = d.clone();
    }
    if let Some(s) = &a.split {
        run.split = s.parse().map_err(usage)?;
    }
    let theta = ThetaParams::load_json(&run.theta)?;
    let ds = Dataset::load(&run.dataset)?;
    let id = ds.id()?;
    let set = examples(ds.split(run.split), id);
    let mut metrics = evaluate(&set, &theta, &run.solver)?;
    let solve_time = metrics.solve_time_mean_s;
    metrics.solve_time_mean_s = 0.0;
    println!("{}", serde_json::to_string(&metrics)?);
    let Some(out) = &a.out else {
        return Ok(());
    };
    echo(&out.join("config.json"), &run)?;
    write(&out.join("metrics.json"), &config::to_pretty(&metrics))?;
    write(&out.join("timing.json"), &config::to_pretty(&json!({ "solve_time_mean_s": solve_time })))?;

    let mut rmse = String::from("episode,trans_rmse,rot_rmse\n");
    for (i, (t, r)) in metrics.per_episode.iter().enumerate() {
        writeln!(rmse, "{i},{t},{r}").unwrap();
    }
    write(&out.join("rmse.csv"), &rmse)?;

    let solved: Vec<Result<_, LeoError>> = set
        .par_iter()
        .map(|ex| solve_gn(&ex.graph, &theta, &ex.init, &run.solver).map(|p| p.mean))
        .collect();
    let mut traj = String::from("episode,step,gt_x,gt_y,gt_theta,est_x,est_y,est_theta\n");
    for (i, (ex, est)) in set.iter().zip(solved).enumerate() {
        let Ok(est) = est else { continue };
        tracking_rmse(&ex.gt, &est)?;
        for (k, (g, e)) in ex.gt.poses().iter().zip(est.poses()).enumerate() {
            writeln!(
                traj,
                "{i},{k},{},{},{},{},{},{}",
                g.x(),
                g.y(),
                g.theta(),
                e.x(),
                e.y(),
                e.theta()
            )
            .unwrap();
        }
    }
    write(&out.join("trajectories.csv"), &traj)
}

fn default_inner(method: ToyMethod, steps: Option<usize>) -> InnerSolver {
    match method {
        ToyMethod::Leo => InnerSolver::BatchGn,
        ToyMethod::UnrolledGd => InnerSolver::Gd { step: 0.1, steps: steps.unwrap_or(10) },
        ToyMethod::UnrolledGn => InnerSolver::UnrolledGn { steps: steps.unwrap_or(2) },
    }
}

pub fn toy_train(a: ToyTrainArgs) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => config::load::<ToyRun>(p)?,
        None => ToyRun { method: ToyMethod::Leo, toy: ToyConfig::default() },
    };
    if a.method.is_some() || a.config.is_none() || a.inner_steps.is_some() {
        if let Some(m) = &a.method {
            run.method = m.parse()?;
        }
        run.toy.inner = default_inner(run.method, a.inner_steps);
    }
    if let Some(s) = &a.scheme {
        run.toy.init_scheme = s.parse().map_err(usage)?;
    }
    if let Some(v) = a.seed {
        run.toy.seed = v;
    }
    if let Some(v) = a.epochs {
        run.toy.epochs = v;
    }
    if let Some(v) = a.lr {
        run.toy.lr = v;
    }
    if let Some(v) = a.hidden {
        run.toy.hidden = v;
    }
    run.toy.validate().map_err(usage)?;
    echo(&a.out.join("config.json"), &run)?;

    let cfg = &run.toy;
    let data = toy1d::toy_data(cfg.num_points);
    toy1d::write_data_csv(&data, &a.out.join("data.csv"))?;
    let init = MlpWeights::random(cfg.hidden, cfg.seed);
    let (theta, log) = match run.method {
        ToyMethod::Leo => toy1d::toy_leo_train(&data, &init, cfg)?,
        _ => toy1d::toy_unrolled_train(&data, &init, cfg)?,
    };
    write(&a.out.join("weights.json"), &config::to_pretty(&theta))?;
    write(&a.out.join("trainlog.jsonl"), &log.to_jsonl(false))?;
    write(&a.out.join("timing.json"), &timing_json(&log))?;

    let surface = toy1d::export_surface(&theta, &cfg.grid, &a.out.join("surface.csv"))?;
    let mut basins = surface.basin_counts();
    basins.sort_unstable();
    let solve_frac = |scheme: InitScheme| {
        toy1d::fraction_on_curve(&toy1d::solve_on_grid(&theta, &cfg.grid, scheme), 0.15)
    };
    let summary = json!({
        "method": log.method,
        "argmin_on_curve_fraction": toy1d::fraction_on_curve(&surface.argmin(), 0.15),
        "median_basin_count": basins[basins.len() / 2],
        "max_basin_count": basins.last(),
        "solve_on_curve_fraction_zero_start": solve_frac(InitScheme::Zero),
        "solve_on_curve_fraction_gt_start": solve_frac(InitScheme::GroundTruth),
        "tracking_loss": toy1d::tracking_loss(&theta, &data, cfg.inner, cfg.init_scheme).ok(),
    });
    write(&a.out.join("summary.json"), &config::to_pretty(&summary))?;
    println!("{summary}");
    Ok(())
}

pub fn toy_surface(a: SurfaceArgs) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => config::load::<SurfaceRun>(p)?,
        None => SurfaceRun { weights: Default::default(), grid: SurfaceGrid::default() },
    };
    if let Some(w) = &a.weights {
        run.weights = w.clone();
    }
    if let Some(n) = a.nx {
        run.grid.nx = n;
    }
    if let Some(n) = a.ny {
        run.grid.ny = n;
    }
    run.grid.validate().map_err(usage)?;
    let text = std::fs::read_to_string(&run.weights).map_err(|e| LeoError::io(&run.weights, e))?;
    let theta: MlpWeights = serde_json::from_str(&text)
        .map_err(|e| LeoError::Parse { line: e.line(), message: e.to_string() })?;
    toy1d::export_surface(&theta, &run.grid, &a.out)?;
    echo(&a.out.with_extension("config.json"), &run)
}

pub fn bench_sampler(a: BenchArgs) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => config::load::<BenchRun>(p)?,
        None => BenchRun {
            dataset: Default::default(),
            episode: 0,
            samples: 1000,
            theta: None,
            solver: SolverConfig::default(),
            hmc: HmcConfig::default(),
        },
    };
    if let Some(d) = &a.dataset {
        run.dataset = d.clone();
    }
    if let Some(v) = a.episode {
        run.episode = v;
    }
    if let Some(v) = a.samples {
        run.samples = v;
    }
    if a.theta.is_some() {
        run.theta = a.theta.clone();
    }
    if let Some(v) = a.seed {
        run.hmc.seed = v;
    }
    let ds = Dataset::load(&run.dataset)?;
    let id = ds.id()?;
    let Some(ep) = ds.episodes.get(run.episode) else {
        bail!(Usage(format!("episode {} out of range (dataset has {})", run.episode, ds.episodes.len())));
    };
    let theta = match &run.theta {
        Some(p) => ThetaParams::load_json(p)?,
        None => baselines::surrogate_fit(&examples(ds.train(), id), &navsim::model_template(id, 0.0))?,
    };
    echo(&a.out.join("config.json"), &run)?;
    let ex = Example::from_episode(ep, id);
    let report = bench_samplers(&ex.graph, &theta, &ex.init, run.samples, &run.solver, &run.hmc)?;
    println!("{}", serde_json::to_string(&report)?);
    write(&a.out.join("report.json"), &config::to_pretty(&report.without_timing()))?;
    write(
        &a.out.join("timing.json"),
        &config::to_pretty(&json!({
            "gn_seconds": report.gn_seconds,
            "hmc_seconds": report.hmc_seconds,
            "gn_per_sample_s": report.gn_per_sample_s,
            "hmc_per_sample_s": report.hmc_per_sample_s,
            "speedup": report.speedup,
        })),
    )
}
