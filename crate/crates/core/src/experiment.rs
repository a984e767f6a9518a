//! Experiment runners and CSV export.
//!
//! Each (sweep point, seed) job is independent and runs on the rayon pool;
//! rows are merged in (sweep point, scheme, seed) order, so output bytes do
//! not depend on scheduling.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{greedy_allocation, train, AgentError, Algorithm, TrainConfig, TrainOutcome};
use crate::baselines::{distance_based, exhaustive_optimal, no_irs, two_stage, BaselineError, OracleOptions};
use crate::channel::{ChannelError, RateModel};
use crate::config::{stream_rng, streams, ConfigError, ScenarioConfig, SceneOverrides};
use crate::env::{utility_of_rates, Allocation, EnvError, OwcEnv};
use crate::scene::Scene;

pub const CSV_HEADER: [&str; 13] = [
    "sweep_var",
    "scheme",
    "sum_rate_bps",
    "utility",
    "feasible",
    "seed",
    "episodes",
    "arrays",
    "blockers",
    "power_w",
    "sum_rate_std_bps",
    "user_rates_bps",
    "infeasible_users",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{path} already exists; pass --force to overwrite")]
    Exists { path: String },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("metadata serialization failed: {0}")]
    Metadata(#[from] toml::ser::Error),
    #[error("no seeds given")]
    NoSeeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    QLearning,
    Sarsa,
    /// The configured RL algorithm, as used in the sweeps.
    RlJoint,
    /// Exhaustive optimum, or the two-stage heuristic beyond the search budget.
    Oracle,
    TwoStage,
    DistanceBased,
    NoIrs,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::QLearning => "qlearning",
            Scheme::Sarsa => "sarsa",
            Scheme::RlJoint => "rl-joint",
            Scheme::Oracle => "oracle",
            Scheme::TwoStage => "two_stage",
            Scheme::DistanceBased => "distance_based",
            Scheme::NoIrs => "no_irs",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const PER_USER_SCHEMES: [Scheme; 3] = [Scheme::QLearning, Scheme::Sarsa, Scheme::Oracle];
pub const SWEEP_SCHEMES: [Scheme; 3] = [Scheme::RlJoint, Scheme::DistanceBased, Scheme::NoIrs];

/// One scheme evaluated on one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Name actually used, e.g. `two_stage` when the oracle fell back.
    pub label: &'static str,
    pub allocation: Allocation,
    pub rates: Vec<f64>,
    pub utility: f64,
    pub qos: Vec<bool>,
    pub episodes: usize,
}

impl Evaluation {
    fn new(label: &'static str, model: &RateModel, allocation: Allocation, episodes: usize) -> Result<Self, ChannelError> {
        let rates = model.rates(allocation.links())?;
        let qos = rates.iter().zip(model.min_rates()).map(|(r, m)| r >= m).collect();
        Ok(Self {
            label,
            utility: utility_of_rates(&rates),
            allocation,
            rates,
            qos,
            episodes,
        })
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn feasible(&self) -> bool {
        self.qos.iter().all(|&q| q)
    }
}

fn train_stream(algo: Algorithm) -> u64 {
    match algo {
        Algorithm::QLearning => streams::TRAIN,
        Algorithm::Sarsa => streams::TRAIN + 1,
    }
}

/// Trains `algo` on `model` with the generator stream reserved for it under `seed`.
pub fn train_agent(
    model: &RateModel,
    cfg: &ScenarioConfig,
    training: &TrainConfig,
    algo: Algorithm,
    seed: u64,
) -> Result<(OwcEnv, TrainOutcome), ExperimentError> {
    let mut env = OwcEnv::new(model.clone(), cfg.env_options())?;
    let mut rng = stream_rng(seed, train_stream(algo));
    let outcome = train(&mut env, algo, training, &mut rng)?;
    Ok((env, outcome))
}

/// Runs one scheme on a built scene.
pub fn evaluate(
    scheme: Scheme,
    scene: &Scene,
    model: &RateModel,
    cfg: &ScenarioConfig,
    training: &TrainConfig,
    seed: u64,
) -> Result<Evaluation, ExperimentError> {
    let budget = cfg.experiment.oracle_budget;
    let rl = |algo: Algorithm, label: &'static str| -> Result<Evaluation, ExperimentError> {
        let (mut env, outcome) = train_agent(model, cfg, training, algo, seed)?;
        let alloc = greedy_allocation(&outcome.q, &mut env)?;
        Ok(Evaluation::new(label, model, alloc, training.episodes)?)
    };
    let eval = match scheme {
        Scheme::QLearning => rl(Algorithm::QLearning, scheme.name())?,
        Scheme::Sarsa => rl(Algorithm::Sarsa, scheme.name())?,
        Scheme::RlJoint => rl(cfg.experiment.algorithm, scheme.name())?,
        Scheme::Oracle => {
            let opts = OracleOptions {
                budget,
                exclusive_mirrors: cfg.experiment.exclusive_mirrors,
            };
            match exhaustive_optimal(model, &opts) {
                Ok(sol) => Evaluation::new(scheme.name(), model, sol.allocation, 0)?,
                Err(BaselineError::BudgetExceeded { options, .. }) => {
                    log::warn!("oracle needs {options} evaluations, over the budget of {budget}; using two_stage");
                    Evaluation::new(Scheme::TwoStage.name(), model, two_stage(model, budget)?, 0)?
                }
                Err(e) => return Err(e.into()),
            }
        }
        Scheme::TwoStage => Evaluation::new(scheme.name(), model, two_stage(model, budget)?, 0)?,
        Scheme::DistanceBased => Evaluation::new(scheme.name(), model, distance_based(scene, model, budget)?, 0)?,
        Scheme::NoIrs => Evaluation::new(scheme.name(), model, no_irs(model, budget)?, 0)?,
    };
    Ok(eval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PerUser,
    PowerSweep,
    BlockageSweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_var: f64,
    pub scheme: String,
    pub sum_rate_bps: f64,
    pub utility: f64,
    pub feasible: bool,
    /// `None` marks the mean over all seeds.
    pub seed: Option<u64>,
    pub episodes: usize,
    pub arrays: usize,
    pub blockers: usize,
    pub power_w: f64,
    /// Sample standard deviation across seeds; 0 on per-seed rows.
    pub sum_rate_std_bps: f64,
    pub user_rates_bps: Vec<f64>,
    pub infeasible_users: Vec<usize>,
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        let join = |v: Vec<String>| v.join(";");
        vec![
            self.sweep_var.to_string(),
            self.scheme.clone(),
            self.sum_rate_bps.to_string(),
            self.utility.to_string(),
            self.feasible.to_string(),
            self.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()),
            self.episodes.to_string(),
            self.arrays.to_string(),
            self.blockers.to_string(),
            self.power_w.to_string(),
            self.sum_rate_std_bps.to_string(),
            join(self.user_rates_bps.iter().map(|r| r.to_string()).collect()),
            join(self.infeasible_users.iter().map(|k| k.to_string()).collect()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub kind: ExperimentKind,
    pub sweep_variable: &'static str,
    pub seeds: Vec<u64>,
    pub schemes: Vec<&'static str>,
    pub sweep_values: Vec<f64>,
    pub array_counts: Vec<usize>,
    pub training: TrainConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub metadata: RunMetadata,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// Mean rows for `scheme`, in sweep order.
    pub fn means(&self, scheme: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.seed.is_none() && r.scheme == scheme).collect()
    }

    pub fn per_seed(&self, scheme: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.seed.is_some() && r.scheme == scheme).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.record()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn metadata_toml(&self) -> Result<String, ExperimentError> {
        Ok(toml::to_string(&self.metadata)?)
    }
}

/// Sidecar file holding the run metadata next to a CSV.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.toml");
    PathBuf::from(name)
}

fn write_file(path: &Path, contents: &str, overwrite: bool) -> Result<(), ExperimentError> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let io_err = |source: io::Error| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = opts.open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::AlreadyExists {
            ExperimentError::Exists {
                path: path.display().to_string(),
            }
        } else {
            io_err(e)
        }
    })?;
    f.write_all(contents.as_bytes()).map_err(io_err)
}

/// Writes the CSV and its `.meta.toml` sidecar. Existing files are kept
/// unless `overwrite` is set.
pub fn export_csv(result: &ExperimentResult, path: &Path, overwrite: bool) -> Result<(), ExperimentError> {
    let meta_path = metadata_path(path);
    if !overwrite {
        for p in [path, meta_path.as_path()] {
            if p.exists() {
                return Err(ExperimentError::Exists {
                    path: p.display().to_string(),
                });
            }
        }
    }
    let meta = result.metadata_toml()?;
    write_file(path, &result.to_csv(), overwrite)?;
    write_file(&meta_path, &meta, overwrite)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy)]
struct Point {
    sweep_var: f64,
    overrides: SceneOverrides,
}

fn seed_row(p: &Point, scene: &Scene, power: f64, seed: u64, e: &Evaluation) -> ResultRow {
    ResultRow {
        sweep_var: p.sweep_var,
        scheme: e.label.to_string(),
        sum_rate_bps: e.sum_rate(),
        utility: e.utility,
        feasible: e.feasible(),
        seed: Some(seed),
        episodes: e.episodes,
        arrays: p.overrides.arrays.unwrap_or(0),
        blockers: scene.blockers.len(),
        power_w: power,
        sum_rate_std_bps: 0.0,
        user_rates_bps: e.rates.clone(),
        infeasible_users: e.qos.iter().enumerate().filter(|(_, &q)| !q).map(|(k, _)| k).collect(),
    }
}

fn mean_row(rows: &[ResultRow]) -> ResultRow {
    let sums: Vec<f64> = rows.iter().map(|r| r.sum_rate_bps).collect();
    let (mean, std) = mean_std(&sums);
    let first = &rows[0];
    ResultRow {
        sum_rate_bps: mean,
        utility: rows.iter().map(|r| r.utility).sum::<f64>() / rows.len() as f64,
        feasible: rows.iter().all(|r| r.feasible),
        seed: None,
        sum_rate_std_bps: std,
        user_rates_bps: Vec::new(),
        infeasible_users: Vec::new(),
        ..first.clone()
    }
}

/// Evaluates every scheme at every point and seed, then merges per-seed rows
/// and seed means in (point, scheme, seed) order.
fn run_grid(
    cfg: &ScenarioConfig,
    training: &TrainConfig,
    points: &[Point],
    schemes: &[Scheme],
    seeds: &[u64],
) -> Result<Vec<ResultRow>, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let jobs: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(pi, seed)| -> Result<Vec<ResultRow>, ExperimentError> {
            let p = &points[pi];
            let scene = cfg.build_scene(seed, &p.overrides)?;
            let model = RateModel::from_scene(&scene)?;
            let power = p.overrides.power_w.unwrap_or(cfg.access_points.power_w);
            schemes
                .iter()
                .map(|&s| Ok(seed_row(p, &scene, power, seed, &evaluate(s, &scene, &model, cfg, training, seed)?)))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for pi in 0..points.len() {
        let block = &results[pi * seeds.len()..(pi + 1) * seeds.len()];
        for si in 0..schemes.len() {
            let per_seed: Vec<ResultRow> = block.iter().map(|r| r[si].clone()).collect();
            let mean = mean_row(&per_seed);
            rows.extend(per_seed);
            rows.push(mean);
        }
    }
    Ok(rows)
}

fn metadata(
    cfg: &ScenarioConfig,
    training: &TrainConfig,
    kind: ExperimentKind,
    sweep_variable: &'static str,
    seeds: &[u64],
    schemes: &[Scheme],
    sweep_values: Vec<f64>,
    array_counts: Vec<usize>,
) -> RunMetadata {
    RunMetadata {
        kind,
        sweep_variable,
        seeds: seeds.to_vec(),
        schemes: schemes.iter().map(|s| s.name()).collect(),
        sweep_values,
        array_counts,
        training: *training,
        scenario: cfg.clone(),
    }
}

/// Per-user rates of Q-learning, SARSA and the oracle at the scenario's
/// power: one row per (seed, scheme, user) with `sweep_var` = user index.
pub fn run_per_user(cfg: &ScenarioConfig, training: &TrainConfig, seeds: &[u64]) -> Result<ExperimentResult, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let power = cfg.access_points.power_w;
    let per_seed: Vec<Vec<ResultRow>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<ResultRow>, ExperimentError> {
            let scene = cfg.build_scene(seed, &SceneOverrides::default())?;
            let model = RateModel::from_scene(&scene)?;
            let mut rows = Vec::new();
            for &scheme in &PER_USER_SCHEMES {
                let e = evaluate(scheme, &scene, &model, cfg, training, seed)?;
                for (k, &rate) in e.rates.iter().enumerate() {
                    rows.push(ResultRow {
                        sweep_var: k as f64,
                        scheme: e.label.to_string(),
                        sum_rate_bps: e.sum_rate(),
                        utility: e.utility,
                        feasible: e.qos[k],
                        seed: Some(seed),
                        episodes: e.episodes,
                        arrays: cfg.mirror_arrays.len(),
                        blockers: scene.blockers.len(),
                        power_w: power,
                        sum_rate_std_bps: 0.0,
                        user_rates_bps: vec![rate],
                        infeasible_users: if e.qos[k] { Vec::new() } else { vec![k] },
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;
    let users = cfg.users.count;
    Ok(ExperimentResult {
        metadata: metadata(
            cfg,
            training,
            ExperimentKind::PerUser,
            "user",
            seeds,
            &PER_USER_SCHEMES,
            (0..users).map(|k| k as f64).collect(),
            vec![cfg.mirror_arrays.len()],
        ),
        rows: per_seed.into_iter().flatten().collect(),
    })
}

/// Sum rate against AP optical power for the sweep schemes.
pub fn run_power_sweep(
    cfg: &ScenarioConfig,
    training: &TrainConfig,
    powers: &[f64],
    seeds: &[u64],
) -> Result<ExperimentResult, ExperimentError> {
    let points: Vec<Point> = powers
        .iter()
        .map(|&p| Point {
            sweep_var: p,
            overrides: SceneOverrides {
                power_w: Some(p),
                arrays: Some(cfg.mirror_arrays.len()),
                ..Default::default()
            },
        })
        .collect();
    let rows = if points.is_empty() {
        Vec::new()
    } else {
        run_grid(cfg, training, &points, &SWEEP_SCHEMES, seeds)?
    };
    Ok(ExperimentResult {
        metadata: metadata(
            cfg,
            training,
            ExperimentKind::PowerSweep,
            "power_w",
            seeds,
            &SWEEP_SCHEMES,
            powers.to_vec(),
            vec![cfg.mirror_arrays.len()],
        ),
        rows,
    })
}

/// Sum rate over blocker counts × mirror-array counts; `sweep_var` is the
/// blocker count and the `arrays` column tells the array count apart.
pub fn run_blockage_sweep(
    cfg: &ScenarioConfig,
    training: &TrainConfig,
    blocker_counts: &[usize],
    array_counts: &[usize],
    seeds: &[u64],
) -> Result<ExperimentResult, ExperimentError> {
    for &a in array_counts {
        if a == 0 || a > cfg.mirror_arrays.len() {
            return Err(ConfigError::Invalid(format!(
                "array count {a} outside 1..={}",
                cfg.mirror_arrays.len()
            ))
            .into());
        }
    }
    let points: Vec<Point> = blocker_counts
        .iter()
        .flat_map(|&b| {
            array_counts.iter().map(move |&a| Point {
                sweep_var: b as f64,
                overrides: SceneOverrides {
                    blockers: Some(b),
                    arrays: Some(a),
                    ..Default::default()
                },
            })
        })
        .collect();
    let rows = if points.is_empty() {
        Vec::new()
    } else {
        run_grid(cfg, training, &points, &SWEEP_SCHEMES, seeds)?
    };
    Ok(ExperimentResult {
        metadata: metadata(
            cfg,
            training,
            ExperimentKind::BlockageSweep,
            "blockers",
            seeds,
            &SWEEP_SCHEMES,
            blocker_counts.iter().map(|&b| b as f64).collect(),
            array_counts.to_vec(),
        ),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_scenario;

    const SMALL: &str = r#"
seed = 5
[room]
length = 5.0
width = 5.0
height = 3.0
[access_points]
positions = [[1.25, 2.5, 3.0], [3.75, 2.5, 3.0]]
power_w = 5.0
[[mirror_arrays]]
wall = "y0"
rows = 1
cols = 2
center_along = 2.5
center_height = 2.0
steering = "coverage"
[[mirror_arrays]]
wall = "x0"
rows = 1
cols = 2
center_along = 2.5
center_height = 2.0
steering = "coverage"
[users]
count = 2
min_rate_bps = 1e6
[training]
episodes = 300
"#;

    fn small() -> (ScenarioConfig, TrainConfig) {
        let cfg = parse_scenario(SMALL).unwrap();
        let t = cfg.training;
        (cfg, t)
    }

    #[test]
    fn per_user_has_k_rows_per_scheme() {
        let (cfg, t) = small();
        let r = run_per_user(&cfg, &t, &[5]).unwrap();
        for s in ["qlearning", "sarsa", "oracle"] {
            assert_eq!(r.rows.iter().filter(|row| row.scheme == s).count(), 2);
        }
        let csv = r.to_csv();
        assert!(csv.starts_with("sweep_var,scheme,sum_rate_bps,utility,feasible,seed,"));
        assert_eq!(csv, run_per_user(&cfg, &t, &[5]).unwrap().to_csv());
    }

    #[test]
    fn empty_power_list_gives_header_only_csv() {
        let (cfg, t) = small();
        let r = run_power_sweep(&cfg, &t, &[], &[1, 2]).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.to_csv(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn sweep_rows_are_ordered_and_averaged() {
        let (cfg, t) = small();
        let r = run_power_sweep(&cfg, &t, &[1.0, 2.0], &[3, 4]).unwrap();
        // 2 points × 3 schemes × (2 seeds + mean)
        assert_eq!(r.rows.len(), 18);
        assert_eq!(r.rows[0].seed, Some(3));
        assert_eq!(r.rows[1].seed, Some(4));
        assert_eq!(r.rows[2].seed, None);
        let m = &r.rows[2];
        assert_eq!(m.sum_rate_bps, (r.rows[0].sum_rate_bps + r.rows[1].sum_rate_bps) / 2.0);
        assert_eq!(r.means("no_irs").len(), 2);
        assert!(r.rows.iter().all(|row| row.sum_rate_bps.is_finite() && row.sum_rate_bps >= 0.0));
    }

    #[test]
    fn zero_blocker_point_matches_power_sweep() {
        let (cfg, t) = small();
        let b = run_blockage_sweep(&cfg, &t, &[0], &[2], &[7]).unwrap();
        let p = run_power_sweep(&cfg, &t, &[cfg.access_points.power_w], &[7]).unwrap();
        let strip = |rows: &[ResultRow]| rows.iter().map(|r| (r.scheme.clone(), r.sum_rate_bps, r.utility)).collect::<Vec<_>>();
        assert_eq!(strip(&b.rows), strip(&p.rows));
    }

    #[test]
    fn bad_array_count_is_rejected() {
        let (cfg, t) = small();
        assert!(run_blockage_sweep(&cfg, &t, &[0], &[3], &[1]).is_err());
        assert!(matches!(run_power_sweep(&cfg, &t, &[1.0], &[]), Err(ExperimentError::NoSeeds)));
    }

    #[test]
    fn export_refuses_to_overwrite() {
        let (cfg, t) = small();
        let r = run_power_sweep(&cfg, &t, &[], &[1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        export_csv(&r, &path, false).unwrap();
        assert!(matches!(export_csv(&r, &path, false), Err(ExperimentError::Exists { .. })));
        export_csv(&r, &path, true).unwrap();
        let meta = std::fs::read_to_string(metadata_path(&path)).unwrap();
        for key in ["learning_rate", "discount", "epsilon_start", "epsilon_min", "epsilon_decay", "episodes", "max_steps_guard"] {
            assert!(meta.contains(key), "{key} missing from metadata");
        }
    }
}
