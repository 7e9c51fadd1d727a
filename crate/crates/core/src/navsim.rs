//! Synthetic planar navigation datasets.
//!
//! A robot drives a smooth random path: fixed per-episode speed, heading rate
//! following an Ornstein-Uhlenbeck process. Odometry measures the relative
//! motion and GPS the absolute pose, each corrupted by right-composed
//! Gaussian tangent noise `z = truth ⊕ n`. In the conditioned datasets a
//! binary "ambient light" label, driven by a two-state Markov chain, selects
//! which of two noise levels applies at each step.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};
use crate::graph::{Factor, FactorGraph, Trajectory};
use crate::manifold::{Pose2, TangentVec};
use crate::models::{CovBlock, CovMode, ThetaParams};
use crate::seed;

pub const ODOM: &str = "odom";
pub const GPS: &str = "gps";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    N1,
    N2,
    N3,
    N4,
}

impl DatasetId {
    /// Whether noise (and hence the learned model) depends on the light label.
    pub fn is_conditioned(self) -> bool {
        matches!(self, DatasetId::N3 | DatasetId::N4)
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for DatasetId {
    type Err = LeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "N1" => Ok(DatasetId::N1),
            "N2" => Ok(DatasetId::N2),
            "N3" => Ok(DatasetId::N3),
            "N4" => Ok(DatasetId::N4),
            _ => Err(LeoError::Config(format!("unknown dataset id '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelProcess {
    /// Probability that the label keeps its value from one step to the next.
    pub stay_prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Per-episode forward speed is drawn uniformly from this band (m/step).
    pub speed_min: f64,
    pub speed_max: f64,
    /// Mean reversion of the heading rate per step.
    pub turn_reversion: f64,
    /// Heading-rate diffusion per step (rad/step).
    pub turn_noise: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            speed_min: 0.5,
            speed_max: 1.5,
            turn_reversion: 0.1,
            turn_noise: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub dataset_id: DatasetId,
    pub num_traj: usize,
    pub steps: usize,
    pub train_count: usize,
    /// One std vector per label (one entry for unconditioned datasets).
    pub sigma_odom: Vec<[f64; 3]>,
    pub sigma_gps: Vec<[f64; 3]>,
    pub label_process: LabelProcess,
    #[serde(default)]
    pub motion: MotionSpec,
    pub seed: u64,
}

impl GenSpec {
    /// Repository defaults: 50 trajectories, 30/20 split, 300 steps.
    pub fn defaults(id: DatasetId, seed: u64) -> Self {
        let lo_odom = [0.05, 0.05, 0.01];
        let lo_gps = [0.5, 0.5, 0.1];
        let x4 = |s: [f64; 3]| s.map(|v| 4.0 * v);
        let (sigma_odom, sigma_gps) = match id {
            DatasetId::N1 => (vec![lo_odom], vec![lo_gps]),
            DatasetId::N2 => (vec![lo_gps], vec![lo_odom]),
            DatasetId::N3 => (vec![lo_odom, lo_odom], vec![lo_gps, x4(lo_gps)]),
            DatasetId::N4 => (vec![lo_odom, x4(lo_odom)], vec![lo_gps, x4(lo_gps)]),
        };
        Self {
            dataset_id: id,
            num_traj: 50,
            steps: 300,
            train_count: 30,
            sigma_odom,
            sigma_gps,
            label_process: LabelProcess { stay_prob: 0.95 },
            motion: MotionSpec::default(),
            seed,
        }
    }

    pub fn num_labels(&self) -> usize {
        if self.dataset_id.is_conditioned() {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LeoError::Config(m));
        if self.num_traj == 0 {
            return bad("num_traj must be positive".into());
        }
        if self.train_count >= self.num_traj {
            return bad(format!(
                "train_count {} must be below num_traj {}",
                self.train_count, self.num_traj
            ));
        }
        if self.steps < 2 {
            return bad("steps must be at least 2".into());
        }
        let labels = self.num_labels();
        for (name, s) in [("sigma_odom", &self.sigma_odom), ("sigma_gps", &self.sigma_gps)] {
            if s.len() != labels {
                return bad(format!("{name} needs {labels} label rows, got {}", s.len()));
            }
            if s.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad(format!("{name} entries must be finite and positive"));
            }
        }
        let p = self.label_process.stay_prob;
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("stay_prob {p} outside [0, 1]"));
        }
        let m = &self.motion;
        if !(m.speed_min > 0.0 && m.speed_max >= m.speed_min && m.turn_noise >= 0.0) {
            return bad("invalid motion spec".into());
        }
        Ok(())
    }

    /// The generating parameters expressed as a model θ*.
    pub fn theta_star(&self) -> ThetaParams {
        let mode = if self.dataset_id.is_conditioned() {
            CovMode::Conditioned
        } else {
            CovMode::Fixed
        };
        ThetaParams::new()
            .with_block(ODOM, CovBlock::from_std(mode, &self.sigma_odom))
            .with_block(GPS, CovBlock::from_std(mode, &self.sigma_gps))
    }
}

/// Model template for a dataset: 6 parameters for N1/N2, 12 for N3/N4.
pub fn model_template(id: DatasetId, log_std: f64) -> ThetaParams {
    let labels = if id.is_conditioned() { 2 } else { 1 };
    let mode = if id.is_conditioned() {
        CovMode::Conditioned
    } else {
        CovMode::Fixed
    };
    let block = CovBlock {
        mode,
        log_std: vec![[log_std; 3]; labels],
    };
    ThetaParams::new()
        .with_block(ODOM, block.clone())
        .with_block(GPS, block)
}

/// Template with every log-std drawn uniformly from `[lo, hi)`.
/// Random starting parameters: one log-std per (block, label), shared by its
/// three components, drawn uniformly from `[lo, hi)`. Independent per-component
/// draws produce strongly anisotropic weights on which Gauss-Newton converges
/// only linearly.
pub fn random_theta(id: DatasetId, lo: f64, hi: f64, seed_value: u64) -> ThetaParams {
    let t = model_template(id, 0.0);
    let mut rng = seed::rng(seed_value, &[0x7e7a]);
    let flat: Vec<f64> = (0..t.dim() / 3)
        .flat_map(|_| {
            let s: f64 = rng.random_range(lo..hi);
            [s; 3]
        })
        .collect();
    t.with_flat(&flat).expect("template shape")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub seed: u64,
    pub gt: Trajectory,
    /// `odom_meas[k]` measures the motion from step `k` to `k + 1`.
    pub odom_meas: Vec<Pose2>,
    pub gps_meas: Vec<Pose2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_labels: Option<Vec<u8>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.gt.len();
        let ok = t >= 1
            && self.gps_meas.len() == t
            && self.odom_meas.len() + 1 == t
            && self.light_labels.as_ref().map_or(true, |l| l.len() == t && l.iter().all(|&v| v < 2));
        if ok {
            Ok(())
        } else {
            Err(LeoError::Shape(format!(
                "episode {} has inconsistent measurement lengths",
                self.seed
            )))
        }
    }

    /// Dead-reckoned initial guess anchored at the first GPS fix.
    pub fn initial_guess(&self) -> Trajectory {
        let mut poses = Vec::with_capacity(self.len());
        poses.push(self.gps_meas[0]);
        for z in &self.odom_meas {
            let last = *poses.last().unwrap();
            poses.push(last.compose(z));
        }
        Trajectory::new(poses)
    }

    /// The first `n` steps of this episode.
    pub fn truncated(&self, n: usize) -> Episode {
        let n = n.clamp(1, self.len());
        Episode {
            seed: self.seed,
            gt: Trajectory::new(self.gt.poses()[..n].to_vec()),
            odom_meas: self.odom_meas[..n - 1].to_vec(),
            gps_meas: self.gps_meas[..n].to_vec(),
            light_labels: self.light_labels.as_ref().map(|l| l[..n].to_vec()),
        }
    }

    /// The GPS fixes as a trajectory.
    pub fn gps_guess(&self) -> Trajectory {
        Trajectory::new(self.gps_meas.clone())
    }
}

/// Builds the odometry + GPS factor graph for an episode. Conditioned
/// datasets tag each factor with the label at its (later) step.
pub fn to_graph(episode: &Episode, id: DatasetId) -> FactorGraph {
    let t = episode.len();
    let labels = episode.light_labels.as_ref().filter(|_| id.is_conditioned());
    let label = |k: usize| labels.map(|l| l[k]);
    let mut g = FactorGraph::new(t);
    for k in 0..t {
        if k > 0 {
            g.add_factor(Factor::odom(k - 1, k, episode.odom_meas[k - 1], ODOM).with_condition(label(k)))
                .expect("indices in range");
        }
        g.add_factor(Factor::gps(k, episode.gps_meas[k], GPS).with_condition(label(k)))
            .expect("indices in range");
    }
    g
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub dataset_id: Option<DatasetId>,
    pub episodes: Vec<Episode>,
    /// The first `train_count` episodes form the training split.
    pub train_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    All,
}

impl FromStr for Split {
    type Err = LeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(LeoError::Config(format!("unknown split '{s}'"))),
        }
    }
}

impl Dataset {
    pub fn id(&self) -> Result<DatasetId> {
        self.dataset_id
            .ok_or_else(|| LeoError::Empty("dataset has no episodes".into()))
    }

    pub fn train(&self) -> &[Episode] {
        &self.episodes[..self.train_count.min(self.episodes.len())]
    }

    pub fn test(&self) -> &[Episode] {
        &self.episodes[self.train_count.min(self.episodes.len())..]
    }

    pub fn split(&self, split: Split) -> &[Episode] {
        match split {
            Split::Train => self.train(),
            Split::Test => self.test(),
            Split::All => &self.episodes,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, ep) in self.episodes.iter().enumerate() {
            let line = EpisodeLine {
                dataset_id: self.dataset_id.expect("nonempty dataset has an id"),
                split: if i < self.train_count { Split::Train } else { Split::Test },
                episode: ep.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("episode serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| LeoError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| LeoError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| LeoError::io(path, e))?;
        Self::read(BufReader::new(f)).map_err(|e| match e {
            LeoError::Io { source, .. } => LeoError::io(path, source),
            other => other,
        })
    }

    /// Parses JSONL; blank lines are skipped, line numbers are 1-based.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut ds = Dataset::default();
        let mut seen_test = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LeoError::io("<dataset>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: EpisodeLine = serde_json::from_str(&line).map_err(|e| LeoError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            parsed.episode.validate().map_err(|e| LeoError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match ds.dataset_id {
                None => ds.dataset_id = Some(parsed.dataset_id),
                Some(id) if id != parsed.dataset_id => {
                    return Err(LeoError::Parse {
                        line: i + 1,
                        message: format!("dataset id {} differs from {}", parsed.dataset_id, id),
                    })
                }
                _ => {}
            }
            match parsed.split {
                Split::Train if seen_test => {
                    return Err(LeoError::Parse {
                        line: i + 1,
                        message: "train episode after test episodes".into(),
                    })
                }
                Split::Train => ds.train_count += 1,
                _ => seen_test = true,
            }
            ds.episodes.push(parsed.episode);
        }
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct EpisodeLine {
    dataset_id: DatasetId,
    split: Split,
    #[serde(flatten)]
    episode: Episode,
}

fn gaussian_tangent<R: Rng>(rng: &mut R, sigma: &[f64; 3]) -> TangentVec {
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    TangentVec::new(sigma[0] * n(), sigma[1] * n(), sigma[2] * n())
}

fn generate_episode(spec: &GenSpec, index: usize) -> Episode {
    let ep_seed = seed::derive(spec.seed, &[index as u64]);
    let mut rng = seed::rng(ep_seed, &[]);
    let m = &spec.motion;
    let speed = rng.random_range(m.speed_min..=m.speed_max);
    let mut pose = Pose2::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    );
    let mut turn: f64 = 0.0;
    let mut poses = Vec::with_capacity(spec.steps);
    poses.push(pose);
    for _ in 1..spec.steps {
        let xi: f64 = StandardNormal.sample(&mut rng);
        turn += -m.turn_reversion * turn + m.turn_noise * xi;
        pose = pose.retract(&TangentVec::new(speed, 0.0, turn));
        poses.push(pose);
    }

    let labels: Option<Vec<u8>> = spec.dataset_id.is_conditioned().then(|| {
        let mut l = Vec::with_capacity(spec.steps);
        let mut cur: u8 = rng.random_range(0..2);
        for _ in 0..spec.steps {
            l.push(cur);
            if !rng.random_bool(spec.label_process.stay_prob) {
                cur = 1 - cur;
            }
        }
        l
    });
    let label_at = |k: usize| labels.as_ref().map_or(0, |l| l[k] as usize);

    let odom_meas = (1..spec.steps)
        .map(|k| {
            let truth = poses[k - 1].between(&poses[k]);
            truth.retract(&gaussian_tangent(&mut rng, &spec.sigma_odom[label_at(k)]))
        })
        .collect();
    let gps_meas = (0..spec.steps)
        .map(|k| poses[k].retract(&gaussian_tangent(&mut rng, &spec.sigma_gps[label_at(k)])))
        .collect();
    Episode {
        seed: ep_seed,
        gt: Trajectory::new(poses),
        odom_meas,
        gps_meas,
        light_labels: labels,
    }
}

/// Deterministic in `spec`; episodes are generated in parallel from derived seeds.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let episodes = (0..spec.num_traj)
        .into_par_iter()
        .map(|i| generate_episode(spec, i))
        .collect();
    Ok(Dataset {
        dataset_id: Some(spec.dataset_id),
        episodes,
        train_count: spec.train_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{dead_reckon, energy, solve_gn, tracking_rmse, SolverConfig};

    fn small(id: DatasetId, seed: u64) -> GenSpec {
        GenSpec {
            num_traj: 6,
            train_count: 4,
            steps: 40,
            ..GenSpec::defaults(id, seed)
        }
    }

    #[test]
    fn defaults_match_published_setup() {
        let s = GenSpec::defaults(DatasetId::N1, 0);
        assert_eq!((s.num_traj, s.train_count, s.steps), (50, 30, 300));
        assert_eq!(3 * s.steps, 900);
        assert_eq!(GenSpec::defaults(DatasetId::N3, 0).theta_star().dim(), 12);
        assert_eq!(model_template(DatasetId::N4, 0.0).dim(), 12);
        assert_eq!(model_template(DatasetId::N2, 0.0).dim(), 6);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = small(DatasetId::N1, 0);
        s.train_count = 6;
        assert!(generate(&s).is_err());
        let mut s = small(DatasetId::N1, 0);
        s.sigma_gps = vec![[0.0, 1.0, 1.0]];
        assert!(generate(&s).is_err());
        let mut s = small(DatasetId::N3, 0);
        s.sigma_odom.pop();
        assert!(generate(&s).is_err());
    }

    #[test]
    fn noiseless_limit_reproduces_truth() {
        let mut s = small(DatasetId::N1, 3);
        s.sigma_odom = vec![[1e-9; 3]];
        s.sigma_gps = vec![[1e-9; 3]];
        let ds = generate(&s).unwrap();
        for ep in &ds.episodes {
            for (k, z) in ep.odom_meas.iter().enumerate() {
                let truth = ep.gt.poses()[k].between(&ep.gt.poses()[k + 1]);
                assert!(truth.local(z).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = small(DatasetId::N4, 11);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = GenSpec { seed: 12, ..s.clone() };
        assert_ne!(generate(&s).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn gps_noise_moments_recovered() {
        let ds = generate(&GenSpec::defaults(DatasetId::N1, 1)).unwrap();
        let mut sums = [0.0; 3];
        let mut n = 0.0;
        let mut lag = (0.0, 0.0);
        for ep in &ds.episodes {
            let mut prev: Option<f64> = None;
            for (p, z) in ep.gt.poses().iter().zip(&ep.gps_meas) {
                let e = p.local(z).as_vector();
                for i in 0..3 {
                    sums[i] += e[i] * e[i];
                }
                n += 1.0;
                let ex = e[0] / 0.5;
                if let Some(q) = prev {
                    lag.0 += q * ex;
                    lag.1 += ex * ex;
                }
                prev = Some(ex);
            }
        }
        let sigma = [0.5, 0.5, 0.1];
        for i in 0..3 {
            let est = (sums[i] / n).sqrt();
            assert!((est / sigma[i] - 1.0).abs() < 0.03, "component {i}: {est}");
        }
        assert!((lag.0 / lag.1).abs() < 0.05, "lag-1 autocorrelation {}", lag.0 / lag.1);
    }

    #[test]
    fn conditioned_noise_recovered_per_label() {
        let spec = GenSpec::defaults(DatasetId::N4, 5);
        let ds = generate(&spec).unwrap();
        let mut acc = [[0.0f64; 2]; 2]; // [label][odom x, gps x] squared sums
        let mut cnt = [[0.0f64; 2]; 2];
        for ep in &ds.episodes {
            let labels = ep.light_labels.as_ref().expect("labels on N4");
            for k in 0..ep.len() {
                let l = labels[k] as usize;
                let e = ep.gt.poses()[k].local(&ep.gps_meas[k]).dx;
                acc[l][1] += e * e;
                cnt[l][1] += 1.0;
                if k > 0 {
                    let truth = ep.gt.poses()[k - 1].between(&ep.gt.poses()[k]);
                    let e = truth.local(&ep.odom_meas[k - 1]).dx;
                    acc[l][0] += e * e;
                    cnt[l][0] += 1.0;
                }
            }
        }
        for l in 0..2 {
            let odom = (acc[l][0] / cnt[l][0]).sqrt();
            let gps = (acc[l][1] / cnt[l][1]).sqrt();
            assert!((odom / spec.sigma_odom[l][0] - 1.0).abs() < 0.05, "label {l} odom {odom}");
            assert!((gps / spec.sigma_gps[l][0] - 1.0).abs() < 0.05, "label {l} gps {gps}");
        }
    }

    #[test]
    fn graph_counts_and_labels() {
        let mut s = small(DatasetId::N3, 2);
        s.steps = 2;
        let ds = generate(&s).unwrap();
        let g = to_graph(&ds.episodes[0], DatasetId::N3);
        assert_eq!(g.num_vars(), 2);
        let kinds: Vec<_> = g.factors().iter().map(|f| f.kind()).collect();
        assert_eq!(kinds.iter().filter(|k| **k == crate::graph::FactorKind::OdomRelative).count(), 1);
        assert_eq!(kinds.iter().filter(|k| **k == crate::graph::FactorKind::GpsUnary).count(), 2);
        assert!(g.factors().iter().all(|f| f.condition().is_some()));
        let g1 = to_graph(&generate(&small(DatasetId::N1, 2)).unwrap().episodes[0], DatasetId::N1);
        assert!(g1.factors().iter().all(|f| f.condition().is_none()));
    }

    #[test]
    fn tiny_episode_energy_by_hand() {
        let mut s = small(DatasetId::N1, 8);
        s.steps = 3;
        let ep = generate(&s).unwrap().episodes.remove(0);
        let theta = s.theta_star();
        let g = to_graph(&ep, DatasetId::N1);
        let w = |r: TangentVec, sig: [f64; 3]| {
            (r.dx / sig[0]).powi(2) + (r.dy / sig[1]).powi(2) + (r.dtheta / sig[2]).powi(2)
        };
        let x = ep.gt.poses();
        let mut e = 0.0;
        for k in 0..3 {
            e += w(x[k].local(&ep.gps_meas[k]), s.sigma_gps[0]);
        }
        for k in 0..2 {
            e += w(x[k].between(&x[k + 1]).local(&ep.odom_meas[k]), s.sigma_odom[0]);
        }
        let got = energy(&g, &theta, &ep.gt).unwrap();
        assert!((got - 0.5 * e).abs() < 1e-9 * e);
    }

    #[test]
    fn every_generated_graph_is_solvable() {
        for id in [DatasetId::N1, DatasetId::N2, DatasetId::N3, DatasetId::N4] {
            let ds = generate(&small(id, 21)).unwrap();
            for (i, ep) in ds.episodes.iter().enumerate() {
                let g = to_graph(ep, id);
                for theta in [random_theta(id, -3.0, 2.0, i as u64), ds_theta(id)] {
                    let init = dead_reckon(&g, &[]);
                    let r = solve_gn(&g, &theta, &init, &SolverConfig::default());
                    assert!(!matches!(r, Err(LeoError::Gauge { .. })));
                }
            }
        }
    }

    fn ds_theta(id: DatasetId) -> ThetaParams {
        GenSpec::defaults(id, 0).theta_star()
    }

    #[test]
    fn true_theta_beats_gps_noise() {
        // 20 episodes at the default 300-step size.
        let spec = GenSpec {
            num_traj: 21,
            train_count: 1,
            ..GenSpec::defaults(DatasetId::N1, 4)
        };
        let ds = generate(&spec).unwrap();
        let theta = spec.theta_star();
        for ep in ds.test() {
            let g = to_graph(ep, DatasetId::N1);
            let post = solve_gn(&g, &theta, &ep.initial_guess(), &SolverConfig::default()).unwrap();
            let (t, _) = tracking_rmse(&ep.gt, &post.mean).unwrap();
            assert!(t < spec.sigma_gps[0][0], "tracking rmse {t}");
        }
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let ds = generate(&small(DatasetId::N3, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        ds.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), ds);

        let empty = dir.path().join("e.jsonl");
        std::fs::write(&empty, "").unwrap();
        let e = Dataset::load(&empty).unwrap();
        assert!(e.episodes.is_empty() && e.dataset_id.is_none());

        let text = ds.to_jsonl();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = &lines[2][..lines[2].len() / 2];
        lines[2] = cut;
        let broken = lines.join("\n");
        match Dataset::read(broken.as_bytes()) {
            Err(LeoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
