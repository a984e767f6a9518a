//! The joint AP/mirror assignment problem as a finite episodic MDP.
//!
//! One user is assigned per step, in index order. The state is the index of
//! the next user plus the number of users already on each AP; an action is an
//! (AP, mirror) pair. The reward of a step is the acting user's rate divided
//! by its minimum rate, evaluated on the users assigned so far.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, Link, RateModel};

/// Normaliser used in place of a zero minimum rate, bit/s.
pub const DEFAULT_REWARD_SCALE: f64 = 1.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on a terminal state")]
    Terminal,
    #[error("action {action} is not valid in the current state")]
    InvalidAction { action: usize },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// A complete assignment: one AP and one mirror (or none) per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Allocation {
    links: Vec<Link>,
}

impl Allocation {
    pub fn new(links: Vec<Link>) -> Self {
        Self { links }
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn ap_of(&self, user: usize) -> usize {
        self.links[user].ap
    }

    pub fn mirror_of(&self, user: usize) -> Option<usize> {
        self.links[user].mirror
    }

    /// Checks one-AP/one-mirror per user and index ranges.
    pub fn is_valid_for(&self, model: &RateModel) -> bool {
        self.links.len() == model.users()
            && self
                .links
                .iter()
                .all(|l| l.ap < model.aps() && l.mirror.map_or(true, |m| m < model.mirrors()))
    }

    /// Drops every mirror assignment.
    pub fn without_mirrors(&self) -> Self {
        Self::new(self.links.iter().map(|l| Link::new(l.ap, None)).collect())
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, l) in self.links.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            match l.mirror {
                Some(m) => write!(f, "u{k}:ap{}/m{m}", l.ap)?,
                None => write!(f, "u{k}:ap{}/-", l.ap)?,
            }
        }
        Ok(())
    }
}

/// Proportional-fair utility `Σ ln R_k`; `-∞` if any user has zero rate.
pub fn allocation_utility(model: &RateModel, alloc: &Allocation) -> Result<f64, ChannelError> {
    Ok(utility_of_rates(&model.rates(alloc.links())?))
}

pub fn utility_of_rates(rates: &[f64]) -> f64 {
    if rates.iter().any(|&r| !(r > 0.0)) {
        return f64::NEG_INFINITY;
    }
    rates.iter().map(|r| r.ln()).sum()
}

/// Per-user minimum-rate check (`R_k ≥ R_min,k`).
pub fn qos_satisfied(model: &RateModel, alloc: &Allocation) -> Result<Vec<bool>, ChannelError> {
    let rates = model.rates(alloc.links())?;
    Ok(rates
        .iter()
        .enumerate()
        .map(|(k, &r)| r >= model.min_rate(k))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub next_user: usize,
    pub ap_load: Vec<usize>,
}

impl EnvState {
    pub fn initial(aps: usize) -> Self {
        Self {
            next_user: 0,
            ap_load: vec![0; aps],
        }
    }
}

/// Mixed-radix state id: `next_user·(K+1)^L + Σ_l load_l·(K+1)^l`.
pub fn encode_state(s: &EnvState, users: usize, aps: usize) -> usize {
    debug_assert_eq!(s.ap_load.len(), aps);
    let base = users + 1;
    let loads = s
        .ap_load
        .iter()
        .rev()
        .fold(0usize, |acc, &load| acc * base + load);
    s.next_user * base.pow(aps as u32) + loads
}

pub fn state_count(users: usize, aps: usize) -> usize {
    (users + 1).pow(aps as u32 + 1)
}

/// An (AP, mirror) pair flattened to `ap·M + mirror`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn from_pair(ap: usize, mirror: usize, mirrors: usize) -> Self {
        ActionId(ap * mirrors + mirror)
    }

    pub fn ap(self, mirrors: usize) -> usize {
        self.0 / mirrors
    }

    pub fn mirror(self, mirrors: usize) -> usize {
        self.0 % mirrors
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next_state: usize,
    pub reward: f64,
    pub done: bool,
}

/// Minimal interface a tabular agent needs from an environment.
pub trait TabularEnv {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Starts an episode and returns the initial state id.
    fn reset(&mut self) -> usize;
    /// Valid actions in the current state; never empty unless terminal.
    fn valid_actions(&self) -> &[usize];
    fn step(&mut self, action: usize) -> Result<Transition, EnvError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvOptions {
    /// Forbid two users from sharing a mirror.
    pub exclusive_mirrors: bool,
    /// Used as the reward denominator for users whose minimum rate is zero.
    pub reward_scale: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            exclusive_mirrors: false,
            reward_scale: DEFAULT_REWARD_SCALE,
        }
    }
}

/// Sequential assignment environment over a fixed scene.
#[derive(Debug, Clone)]
pub struct OwcEnv {
    model: RateModel,
    options: EnvOptions,
    state: EnvState,
    links: Vec<Link>,
    valid: Vec<usize>,
}

impl OwcEnv {
    pub fn new(model: RateModel, options: EnvOptions) -> Result<Self, EnvError> {
        if model.mirrors() == 0 {
            return Err(EnvError::Config("the action space needs at least one mirror".into()));
        }
        if options.exclusive_mirrors && model.mirrors() < model.users() {
            return Err(EnvError::Config(format!(
                "exclusive mirrors need at least {} mirrors, scene has {}",
                model.users(),
                model.mirrors()
            )));
        }
        if !(options.reward_scale > 0.0) {
            return Err(EnvError::Config("reward scale must be positive".into()));
        }
        let aps = model.aps();
        let mut env = Self {
            model,
            options,
            state: EnvState::initial(aps),
            links: Vec::new(),
            valid: Vec::new(),
        };
        env.refresh_valid();
        Ok(env)
    }

    pub fn model(&self) -> &RateModel {
        &self.model
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn users(&self) -> usize {
        self.model.users()
    }

    pub fn is_terminal(&self) -> bool {
        self.state.next_user == self.users()
    }

    pub fn state_id(&self) -> usize {
        encode_state(&self.state, self.users(), self.model.aps())
    }

    /// Links assigned so far in the running episode.
    pub fn partial_links(&self) -> &[Link] {
        &self.links
    }

    pub fn action_to_link(&self, action: usize) -> Link {
        let m = self.model.mirrors();
        let a = ActionId(action);
        Link::new(a.ap(m), Some(a.mirror(m)))
    }

    pub fn actions_to_allocation(&self, actions: &[usize]) -> Allocation {
        Allocation::new(actions.iter().map(|&a| self.action_to_link(a)).collect())
    }

    fn refresh_valid(&mut self) {
        self.valid.clear();
        if self.is_terminal() {
            return;
        }
        let m = self.model.mirrors();
        let total = self.model.aps() * m;
        if self.options.exclusive_mirrors {
            let used: Vec<usize> = self.links.iter().filter_map(|l| l.mirror).collect();
            self.valid
                .extend((0..total).filter(|a| !used.contains(&ActionId(*a).mirror(m))));
        } else {
            self.valid.extend(0..total);
        }
    }

    /// Eq.-11 style ratio for a rate earned by `user`.
    pub fn reward_for(&self, user: usize, rate: f64) -> f64 {
        let min = self.model.min_rate(user);
        let denom = if min > 0.0 { min } else { self.options.reward_scale };
        rate / denom
    }

    /// Exact final utility of the allocation built in this episode.
    pub fn final_utility(&self) -> Result<f64, EnvError> {
        if !self.is_terminal() {
            return Err(EnvError::Config("episode has not finished".into()));
        }
        Ok(utility_of_rates(&self.model.rates(&self.links)?))
    }

    pub fn current_allocation(&self) -> Option<Allocation> {
        self.is_terminal().then(|| Allocation::new(self.links.clone()))
    }
}

impl TabularEnv for OwcEnv {
    fn state_count(&self) -> usize {
        state_count(self.users(), self.model.aps())
    }

    fn action_count(&self) -> usize {
        self.model.aps() * self.model.mirrors()
    }

    fn reset(&mut self) -> usize {
        self.state = EnvState::initial(self.model.aps());
        self.links.clear();
        self.refresh_valid();
        self.state_id()
    }

    fn valid_actions(&self) -> &[usize] {
        &self.valid
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if self.is_terminal() {
            return Err(EnvError::Terminal);
        }
        if !self.valid.contains(&action) {
            return Err(EnvError::InvalidAction { action });
        }
        let user = self.state.next_user;
        let link = self.action_to_link(action);
        self.links.push(link);
        let rate = self.model.rate(user, &self.links)?;
        let reward = self.reward_for(user, rate);
        self.state.ap_load[link.ap] += 1;
        self.state.next_user += 1;
        self.refresh_valid();
        Ok(Transition {
            next_state: self.state_id(),
            reward,
            done: self.is_terminal(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelTables, NoiseModel};
    use proptest::prelude::*;

    fn toy_model(users: usize, aps: usize, mirrors: usize, min_rate: f64) -> RateModel {
        let los: Vec<f64> = (0..users * aps).map(|i| 1e-6 * (1.0 + (i % 3) as f64)).collect();
        let irs: Vec<f64> = (0..users * aps * mirrors).map(|i| 1e-9 * (i % 5) as f64).collect();
        RateModel::from_parts(
            ChannelTables::from_raw(users, aps, mirrors, los, irs),
            vec![5.0; aps],
            vec![20e6; aps],
            vec![0.4; users],
            vec![min_rate; users],
            NoiseModel::default(),
        )
    }

    #[test]
    fn encoding_examples() {
        let s = EnvState { next_user: 0, ap_load: vec![0; 4] };
        assert_eq!(encode_state(&s, 5, 4), 0);
        let s = EnvState { next_user: 2, ap_load: vec![1, 1, 0, 0] };
        assert_eq!(encode_state(&s, 5, 4), 2599);
        assert_eq!(state_count(5, 4), 7776);
    }

    #[test]
    fn reset_is_repeatable() {
        let mut env = OwcEnv::new(toy_model(3, 4, 25, 1e6), EnvOptions::default()).unwrap();
        let a = env.reset();
        let s1 = env.state().clone();
        env.step(7).unwrap();
        assert_eq!(env.reset(), a);
        assert_eq!(a, 0);
        assert_eq!(env.state(), &s1);
        assert_eq!(env.valid_actions().len(), 100);
    }

    #[test]
    fn single_pair_action_space() {
        let mut env = OwcEnv::new(toy_model(1, 1, 1, 1e6), EnvOptions::default()).unwrap();
        env.reset();
        assert_eq!(env.valid_actions(), &[0]);
    }

    #[test]
    fn reward_is_rate_over_minimum() {
        let model = toy_model(1, 1, 1, 1e6);
        let rate = model.rate(0, &[Link::new(0, Some(0))]).unwrap();
        // rate exactly at the minimum gives 1, twice the minimum gives 2
        let at = RateModel::from_parts(model.tables().clone(), vec![5.0], vec![20e6], vec![0.4], vec![rate], NoiseModel::default());
        let mut env = OwcEnv::new(at, EnvOptions::default()).unwrap();
        env.reset();
        assert_eq!(env.step(0).unwrap().reward, 1.0);
        let half = RateModel::from_parts(model.tables().clone(), vec![5.0], vec![20e6], vec![0.4], vec![rate / 2.0], NoiseModel::default());
        let mut env = OwcEnv::new(half, EnvOptions::default()).unwrap();
        env.reset();
        assert_eq!(env.step(0).unwrap().reward, 2.0);
        assert_eq!(env.reward_for(0, 12e6) / env.reward_for(0, 6e6), 2.0);
    }

    #[test]
    fn terminal_and_invalid_steps_are_rejected() {
        let mut env = OwcEnv::new(toy_model(1, 2, 2, 1e6), EnvOptions::default()).unwrap();
        env.reset();
        assert_eq!(env.step(9), Err(EnvError::InvalidAction { action: 9 }));
        assert!(env.step(3).unwrap().done);
        assert_eq!(env.step(0), Err(EnvError::Terminal));
        assert!(env.valid_actions().is_empty());
    }

    #[test]
    fn exclusive_mirrors_shrink_the_action_set() {
        let opts = EnvOptions { exclusive_mirrors: true, ..EnvOptions::default() };
        let mut env = OwcEnv::new(toy_model(2, 2, 3, 1e6), opts).unwrap();
        env.reset();
        env.step(ActionId::from_pair(1, 2, 3).0).unwrap();
        assert_eq!(env.valid_actions(), &[0, 1, 3, 4]);
        assert!(OwcEnv::new(toy_model(3, 2, 2, 1e6), opts).is_err());
    }

    #[test]
    fn utility_and_qos() {
        let model = toy_model(2, 2, 2, 0.0);
        let alloc = Allocation::new(vec![Link::new(0, Some(0)), Link::new(1, Some(1))]);
        assert!(qos_satisfied(&model, &alloc).unwrap().iter().all(|&b| b));
        assert_eq!(utility_of_rates(&[2.0, 2.0, 2.0]), 3.0 * 2f64.ln());
        assert_eq!(utility_of_rates(&[2.0, 0.0]), f64::NEG_INFINITY);
        // rate exactly at the threshold counts as satisfied
        let r = model.rates(alloc.links()).unwrap();
        let at = RateModel::from_parts(model.tables().clone(), vec![5.0; 2], vec![20e6; 2], vec![0.4; 2], r.clone(), NoiseModel::default());
        assert_eq!(qos_satisfied(&at, &alloc).unwrap(), vec![true, true]);
        let blocked = RateModel::from_parts(ChannelTables::zeros(2, 2, 2), vec![5.0; 2], vec![20e6; 2], vec![0.4; 2], vec![1e6; 2], NoiseModel::default());
        assert_eq!(qos_satisfied(&blocked, &alloc).unwrap(), vec![false, false]);
        assert_eq!(allocation_utility(&blocked, &alloc).unwrap(), f64::NEG_INFINITY);
    }

    fn arb_state() -> impl Strategy<Value = EnvState> {
        (0usize..=5, proptest::collection::vec(0usize..=5, 4))
            .prop_map(|(next_user, ap_load)| EnvState { next_user, ap_load })
    }

    proptest! {
        #[test]
        fn encoding_is_injective(a in arb_state(), b in arb_state()) {
            let (ia, ib) = (encode_state(&a, 5, 4), encode_state(&b, 5, 4));
            prop_assert!(ia < state_count(5, 4));
            prop_assert_eq!(ia == ib, a == b);
        }

        #[test]
        fn episodes_end_with_valid_allocations(actions in proptest::collection::vec(0usize..12, 4)) {
            let mut env = OwcEnv::new(toy_model(4, 3, 4, 1e6), EnvOptions::default()).unwrap();
            env.reset();
            let mut steps = 0;
            for &a in &actions {
                prop_assert!(env.valid_actions().iter().all(|&v| v < 12));
                let t = env.step(a).unwrap();
                steps += 1;
                prop_assert_eq!(t.done, steps == 4);
                let loads: usize = env.state().ap_load.iter().sum();
                prop_assert_eq!(loads, env.state().next_user);
            }
            let alloc = env.current_allocation().unwrap();
            prop_assert!(alloc.is_valid_for(env.model()));
            prop_assert_eq!(alloc, env.actions_to_allocation(&actions));
        }
    }
}
