use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irs_owc::agents::{greedy_allocation, load_qtable, save_qtable, Algorithm, TrainConfig};
use irs_owc::channel::RateModel;
use irs_owc::config::{load_scenario, ScenarioConfig, SceneOverrides};
use irs_owc::env::{allocation_utility, OwcEnv};
use irs_owc::experiment::{self, export_csv, ExperimentResult};

#[derive(Parser)]
#[command(name = "irs-owc", version, about = "Mirror-array assisted indoor optical wireless simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario, then build its first scene.
    Validate(Common),
    /// Per-user rates of Q-learning, SARSA and the oracle.
    PerUser(Run),
    /// Sum rate against AP optical power.
    PowerSweep {
        #[command(flatten)]
        run: Run,
        /// Powers in W, comma separated.
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<f64>>,
    },
    /// Sum rate against blocker count and mirror-array count.
    BlockageSweep {
        #[command(flatten)]
        run: Run,
        #[arg(long, value_delimiter = ',')]
        blockers: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        arrays: Option<Vec<usize>>,
    },
    /// Train an agent on the first seed's scene and save its Q-table.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        qtable: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Roll out a saved Q-table greedily on the first seed's scene.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        qtable: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// qlearning or sarsa.
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    oracle_budget: Option<u64>,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    common: Common,
    /// CSV destination; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

struct Setup {
    cfg: ScenarioConfig,
    training: TrainConfig,
    seeds: Vec<u64>,
}

impl Common {
    fn setup(&self) -> Result<Setup, Box<dyn std::error::Error>> {
        let mut cfg = load_scenario(&self.scenario)?;
        if let Some(a) = self.algo {
            cfg.experiment.algorithm = a;
        }
        if let Some(b) = self.oracle_budget {
            cfg.experiment.oracle_budget = b;
        }
        let mut training = cfg.training;
        if let Some(e) = self.episodes {
            training.episodes = e;
        }
        training.validate()?;
        let seeds = self.seeds.clone().unwrap_or_else(|| cfg.seeds());
        if seeds.is_empty() {
            return Err("no seeds given".into());
        }
        Ok(Setup { cfg, training, seeds })
    }
}

fn emit(result: &ExperimentResult, run: &Run) -> Result<(), Box<dyn std::error::Error>> {
    match &run.out {
        Some(path) => {
            export_csv(result, path, run.force)?;
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
        }
        None => print!("{}", result.to_csv()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Validate(common) => {
            let s = common.setup()?;
            let scene = s.cfg.build_scene(s.seeds[0], &SceneOverrides::default())?;
            println!(
                "ok: {} APs, {} mirrors, {} users, {} blockers, seed {}",
                scene.ap_count(),
                scene.mirror_count(),
                scene.user_count(),
                scene.blockers.len(),
                s.seeds[0]
            );
        }
        Command::PerUser(run) => {
            let s = run.common.setup()?;
            emit(&experiment::run_per_user(&s.cfg, &s.training, &s.seeds)?, &run)?;
        }
        Command::PowerSweep { run, powers } => {
            let s = run.common.setup()?;
            let powers = powers.unwrap_or_else(|| s.cfg.experiment.powers_w.clone());
            emit(&experiment::run_power_sweep(&s.cfg, &s.training, &powers, &s.seeds)?, &run)?;
        }
        Command::BlockageSweep { run, blockers, arrays } => {
            let s = run.common.setup()?;
            let blockers = blockers.unwrap_or_else(|| s.cfg.experiment.blocker_counts.clone());
            let arrays = arrays.unwrap_or_else(|| s.cfg.array_counts());
            emit(&experiment::run_blockage_sweep(&s.cfg, &s.training, &blockers, &arrays, &s.seeds)?, &run)?;
        }
        Command::Train { common, qtable, force } => {
            let s = common.setup()?;
            if qtable.exists() && !force {
                return Err(format!("{} already exists; pass --force to overwrite", qtable.display()).into());
            }
            let seed = s.seeds[0];
            let scene = s.cfg.build_scene(seed, &SceneOverrides::default())?;
            let model = RateModel::from_scene(&scene)?;
            let algo = s.cfg.experiment.algorithm;
            let (mut env, outcome) = experiment::train_agent(&model, &s.cfg, &s.training, algo, seed)?;
            save_qtable(&outcome.q, &qtable, force)?;
            let alloc = greedy_allocation(&outcome.q, &mut env)?;
            println!(
                "{algo}: {} episodes, final epsilon {}, max |dQ| over last 100 episodes {:e}",
                s.training.episodes, outcome.final_epsilon, outcome.convergence
            );
            println!("greedy allocation {alloc}, utility {}", allocation_utility(&model, &alloc)?);
        }
        Command::Eval { common, qtable } => {
            let s = common.setup()?;
            let q = load_qtable(&qtable)?;
            let scene = s.cfg.build_scene(s.seeds[0], &SceneOverrides::default())?;
            let model = RateModel::from_scene(&scene)?;
            let mut env = OwcEnv::new(model.clone(), s.cfg.env_options())?;
            let alloc = greedy_allocation(&q, &mut env)?;
            let rates = model.rates(alloc.links())?;
            println!("allocation {alloc}");
            for (k, r) in rates.iter().enumerate() {
                let ok = if *r >= model.min_rate(k) { "" } else { "  below minimum" };
                println!("user {k}: {r:.6e} bit/s{ok}");
            }
            println!("sum rate {:.6e} bit/s, utility {}", rates.iter().sum::<f64>(), allocation_utility(&model, &alloc)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
