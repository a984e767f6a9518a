//! Tabular Q-learning and SARSA with ε-greedy exploration.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Allocation, EnvError, OwcEnv, TabularEnv};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite reward {reward} in episode {episode}, step {step}")]
    NonFiniteReward { episode: usize, step: usize, reward: f64 },
    #[error("episode {0} exceeded the step guard")]
    StepGuard(usize),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("q-table has {got:?} (states, actions), environment needs {want:?}")]
    Shape { got: (usize, usize), want: (usize, usize) },
    #[error("q-table file: {0}")]
    Io(#[from] io::Error),
    #[error("q-table file is malformed: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::QLearning => "qlearning",
            Algorithm::Sarsa => "sarsa",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "qlearning" | "q" => Ok(Algorithm::QLearning),
            "sarsa" => Ok(Algorithm::Sarsa),
            other => Err(format!("unknown algorithm `{other}` (expected qlearning or sarsa)")),
        }
    }
}

/// Dense state × action value table, zero-initialised.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn for_env<E: TabularEnv>(env: &E) -> Self {
        Self::zeros(env.state_count(), env.action_count())
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Highest-valued valid action, lowest id on ties.
    pub fn argmax(&self, s: usize, valid: &[usize]) -> Option<usize> {
        let row = self.row(s);
        let mut best: Option<usize> = None;
        for &a in valid {
            match best {
                Some(b) if row[a] < row[b] || (row[a] == row[b] && a > b) => {}
                _ => best = Some(a),
            }
        }
        best
    }

    /// `max_a' Q(s', a')` over `valid`, zero when there are none (terminal).
    pub fn max_value(&self, s: usize, valid: &[usize]) -> f64 {
        self.argmax(s, valid).map_or(0.0, |a| self.get(s, a))
    }

    const MAGIC: &'static [u8; 8] = b"OWCQTAB1";

    /// Little-endian binary dump: magic, state count, action count, values.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.states as u64).to_le_bytes())?;
        w.write_all(&(self.actions as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, AgentError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(AgentError::Format("bad magic".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let states = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let actions = u64::from_le_bytes(word) as usize;
        let len = states
            .checked_mul(actions)
            .ok_or_else(|| AgentError::Format("dimension overflow".into()))?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        if r.read(&mut word)? != 0 {
            return Err(AgentError::Format("trailing bytes".into()));
        }
        Ok(Self { states, actions, values })
    }
}

/// Writes a Q-table; refuses to replace an existing file unless `overwrite`.
pub fn save_qtable(q: &QTable, path: &Path, overwrite: bool) -> Result<(), AgentError> {
    let file = if overwrite {
        File::create(path)?
    } else {
        File::options().write(true).create_new(true).open(path)?
    };
    q.write_to(BufWriter::new(file))?;
    Ok(())
}

pub fn load_qtable(path: &Path) -> Result<QTable, AgentError> {
    QTable::read_from(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Multiplicative ε decay applied after every episode.
    pub epsilon_decay: f64,
    pub episodes: usize,
    pub max_steps_guard: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_min: 0.01,
            epsilon_decay: 0.999,
            episodes: 20_000,
            max_steps_guard: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let unit_open_closed = |x: f64| x > 0.0 && x <= 1.0;
        let unit_closed = |x: f64| (0.0..=1.0).contains(&x);
        if !unit_open_closed(self.learning_rate) {
            return Err(AgentError::Config(format!("learning rate {} not in (0, 1]", self.learning_rate)));
        }
        if !unit_open_closed(self.discount) {
            return Err(AgentError::Config(format!("discount {} not in (0, 1]", self.discount)));
        }
        if !unit_closed(self.epsilon_start) || !unit_closed(self.epsilon_min) {
            return Err(AgentError::Config("epsilon bounds must be in [0, 1]".into()));
        }
        if !unit_open_closed(self.epsilon_decay) {
            return Err(AgentError::Config(format!("epsilon decay {} not in (0, 1]", self.epsilon_decay)));
        }
        if self.max_steps_guard == 0 {
            return Err(AgentError::Config("max_steps_guard must be positive".into()));
        }
        Ok(())
    }

    /// ε used during episode `episode` (0-based).
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let mut eps = self.epsilon_start;
        for _ in 0..episode {
            eps = (eps * self.epsilon_decay).max(self.epsilon_min);
        }
        eps
    }
}

/// ε-greedy choice among `valid`.
///
/// A uniform draw `V` is always taken; `V < ε` explores uniformly, otherwise
/// the greedy action (lowest id on ties) is returned.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: usize, valid: &[usize], epsilon: f64, rng: &mut R) -> usize {
    assert!(!valid.is_empty(), "select_action needs at least one valid action");
    let v: f64 = rng.gen();
    if v < epsilon {
        valid[rng.gen_range(0..valid.len())]
    } else {
        q.argmax(s, valid).expect("non-empty")
    }
}

/// Off-policy TD target: `Q + α(r + γ·max Q(s',·) − Q)`.
pub fn q_learning_update(q: &QTable, s: usize, a: usize, r: f64, s_next: usize, valid_next: &[usize], alpha: f64, gamma: f64) -> f64 {
    let old = q.get(s, a);
    (1.0 - alpha) * old + alpha * (r + gamma * q.max_value(s_next, valid_next))
}

/// On-policy TD target: `Q + α(r + γ·Q(s',a') − Q)`; `a_next = None` at a terminal.
pub fn sarsa_update(q: &QTable, s: usize, a: usize, r: f64, s_next: usize, a_next: Option<usize>, alpha: f64, gamma: f64) -> f64 {
    let old = q.get(s, a);
    let next = a_next.map_or(0.0, |an| q.get(s_next, an));
    (1.0 - alpha) * old + alpha * (r + gamma * next)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub q: QTable,
    /// Undiscounted return of every episode.
    pub returns: Vec<f64>,
    /// Largest |ΔQ| of any single update over the final 100 episodes.
    pub convergence: f64,
    pub final_epsilon: f64,
}

pub fn train<E: TabularEnv, R: Rng + ?Sized>(env: &mut E, algo: Algorithm, cfg: &TrainConfig, rng: &mut R) -> Result<TrainOutcome, AgentError> {
    cfg.validate()?;
    let mut q = QTable::for_env(env);
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut recent_delta: Vec<f64> = Vec::with_capacity(cfg.episodes.min(100));
    let mut eps = cfg.epsilon_start;
    let (alpha, gamma) = (cfg.learning_rate, cfg.discount);

    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        let mut total = 0.0;
        let mut max_delta = 0.0f64;
        let mut steps = 0;
        let mut a = if env.valid_actions().is_empty() {
            None
        } else {
            Some(select_action(&q, s, env.valid_actions(), eps, rng))
        };
        while let Some(act) = a {
            if steps == cfg.max_steps_guard {
                return Err(AgentError::StepGuard(episode));
            }
            let t = env.step(act)?;
            if !t.reward.is_finite() {
                return Err(AgentError::NonFiniteReward { episode, step: steps, reward: t.reward });
            }
            total += t.reward;
            steps += 1;
            let valid_next = env.valid_actions();
            let (new, next_a) = match algo {
                Algorithm::QLearning => {
                    let new = q_learning_update(&q, s, act, t.reward, t.next_state, valid_next, alpha, gamma);
                    let next_a = (!t.done).then(|| select_action(&q, t.next_state, valid_next, eps, rng));
                    (new, next_a)
                }
                Algorithm::Sarsa => {
                    let next_a = (!t.done).then(|| select_action(&q, t.next_state, valid_next, eps, rng));
                    (sarsa_update(&q, s, act, t.reward, t.next_state, next_a, alpha, gamma), next_a)
                }
            };
            max_delta = max_delta.max((new - q.get(s, act)).abs());
            q.set(s, act, new);
            s = t.next_state;
            a = next_a;
        }
        returns.push(total);
        if recent_delta.len() == 100 {
            recent_delta.remove(0);
        }
        recent_delta.push(max_delta);
        eps = (eps * cfg.epsilon_decay).max(cfg.epsilon_min);
    }
    if !q.is_finite() {
        return Err(AgentError::Format("training produced non-finite Q-values".into()));
    }
    Ok(TrainOutcome {
        q,
        returns,
        convergence: recent_delta.iter().cloned().fold(0.0, f64::max),
        final_epsilon: eps,
    })
}

/// Actions of the ε = 0 rollout from the initial state.
pub fn greedy_actions<E: TabularEnv>(q: &QTable, env: &mut E) -> Result<Vec<usize>, AgentError> {
    let want = (env.state_count(), env.action_count());
    if (q.states(), q.actions()) != want {
        return Err(AgentError::Shape { got: (q.states(), q.actions()), want });
    }
    let mut s = env.reset();
    let mut actions = Vec::new();
    while let Some(a) = q.argmax(s, env.valid_actions()) {
        if actions.len() == want.0.max(1) {
            return Err(AgentError::StepGuard(0));
        }
        actions.push(a);
        let t = env.step(a)?;
        s = t.next_state;
        if t.done {
            break;
        }
    }
    Ok(actions)
}

pub fn greedy_allocation(q: &QTable, env: &mut OwcEnv) -> Result<Allocation, AgentError> {
    let actions = greedy_actions(q, env)?;
    Ok(env.actions_to_allocation(&actions))
}
