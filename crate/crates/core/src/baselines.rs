//! Reference allocators: exhaustive optimum, two-stage decomposition,
//! nearest-mirror assignment and the no-IRS scheme.
//!
//! Without mirror exclusivity a user's mirror only affects its own signal
//! term (interference is LoS-only and bandwidth sharing depends on APs), and
//! the rate is increasing in the end-to-end gain. For a fixed AP assignment
//! the best mirror of each user is therefore the per-(user, AP) argmax of the
//! mirror gain, and the joint search reduces to enumerating AP assignments.

use thiserror::Error;

use crate::channel::{ChannelError, Link, RateModel};
use crate::env::{utility_of_rates, Allocation};
use crate::scene::Scene;

/// Default cap on the number of candidate allocations an exhaustive search may evaluate.
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("exhaustive search over {options} allocations (K={users}, L={aps}, M={mirrors}) exceeds the budget of {budget}")]
    BudgetExceeded {
        options: u128,
        budget: u64,
        users: usize,
        aps: usize,
        mirrors: usize,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("scene and rate model disagree on dimensions")]
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub budget: u64,
    pub exclusive_mirrors: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_ORACLE_BUDGET,
            exclusive_mirrors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub utility: f64,
    /// Every user meets its minimum rate.
    pub feasible: bool,
    /// Number of complete allocations that were evaluated.
    pub evaluated: u64,
}

fn search_size(base: usize, users: usize) -> u128 {
    (base as u128).saturating_pow(users as u32)
}

fn check_budget(model: &RateModel, options: u128, budget: u64) -> Result<(), BaselineError> {
    if options > budget as u128 {
        return Err(BaselineError::BudgetExceeded {
            options,
            budget,
            users: model.users(),
            aps: model.aps(),
            mirrors: model.mirrors(),
        });
    }
    Ok(())
}

/// Index of the strongest mirror path for every (user, AP), lowest index on ties.
fn best_mirrors(model: &RateModel) -> Vec<Vec<Option<usize>>> {
    let t = model.tables();
    (0..model.users())
        .map(|k| {
            (0..model.aps())
                .map(|l| {
                    let mut best: Option<(usize, f64)> = None;
                    for m in 0..model.mirrors() {
                        let g = t.irs(k, m, l);
                        if best.map_or(true, |(_, bg)| g > bg) {
                            best = Some((m, g));
                        }
                    }
                    best.map(|(m, _)| m)
                })
                .collect()
        })
        .collect()
}

/// Keeps the first strictly better candidate, preferring QoS-feasible ones.
#[derive(Default)]
struct Incumbent {
    feasible: Option<(Vec<Link>, f64)>,
    any: Option<(Vec<Link>, f64)>,
    evaluated: u64,
}

impl Incumbent {
    fn offer(&mut self, model: &RateModel, links: &[Link]) -> Result<(), ChannelError> {
        let rates = model.rates(links)?;
        let u = utility_of_rates(&rates);
        self.evaluated += 1;
        let ok = rates.iter().enumerate().all(|(k, &r)| r >= model.min_rate(k));
        if self.any.as_ref().map_or(true, |(_, b)| u > *b) {
            self.any = Some((links.to_vec(), u));
        }
        if ok && self.feasible.as_ref().map_or(true, |(_, b)| u > *b) {
            self.feasible = Some((links.to_vec(), u));
        }
        Ok(())
    }

    fn finish(self) -> Solution {
        let evaluated = self.evaluated;
        match (self.feasible, self.any) {
            (Some((links, utility)), _) => Solution {
                allocation: Allocation::new(links),
                utility,
                feasible: true,
                evaluated,
            },
            (None, Some((links, utility))) => Solution {
                allocation: Allocation::new(links),
                utility,
                feasible: false,
                evaluated,
            },
            (None, None) => Solution {
                allocation: Allocation::new(Vec::new()),
                utility: f64::NEG_INFINITY,
                feasible: false,
                evaluated,
            },
        }
    }
}

/// Advances a little-endian-last odometer (user 0 most significant).
fn next_digits(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Enumerates AP assignments in lexicographic order; `mirror_of(k, l)` fills mirrors.
fn search_ap_assignments<F>(model: &RateModel, mut mirror_of: F) -> Result<Solution, BaselineError>
where
    F: FnMut(usize, usize) -> Option<usize>,
{
    let (users, aps) = (model.users(), model.aps());
    let mut digits = vec![0usize; users];
    let mut links = vec![Link::new(0, None); users];
    let mut inc = Incumbent::default();
    loop {
        for (k, &l) in digits.iter().enumerate() {
            links[k] = Link::new(l, mirror_of(k, l));
        }
        inc.offer(model, &links)?;
        if !next_digits(&mut digits, aps) {
            break;
        }
    }
    Ok(inc.finish())
}

/// Joint optimum of the proportional-fair objective over all assignments.
///
/// Among QoS-feasible allocations when any exist, else over all of them
/// (`feasible = false`). Ties resolve to the lexicographically first
/// allocation in (AP, mirror) per-user order.
pub fn exhaustive_optimal(model: &RateModel, opts: &OracleOptions) -> Result<Solution, BaselineError> {
    let (users, aps, mirrors) = (model.users(), model.aps(), model.mirrors());
    if !opts.exclusive_mirrors || mirrors == 0 {
        check_budget(model, search_size(aps, users), opts.budget)?;
        let best = best_mirrors(model);
        return search_ap_assignments(model, |k, l| best[k][l]);
    }
    check_budget(model, search_size(aps * mirrors, users), opts.budget)?;
    let pairs = aps * mirrors;
    let mut digits = vec![0usize; users];
    let mut links = vec![Link::new(0, None); users];
    let mut inc = Incumbent::default();
    loop {
        let mut distinct = true;
        for (k, &a) in digits.iter().enumerate() {
            links[k] = Link::new(a / mirrors, Some(a % mirrors));
            if digits[..k].iter().any(|&b| b % mirrors == a % mirrors) {
                distinct = false;
            }
        }
        if distinct {
            inc.offer(model, &links)?;
        }
        if !next_digits(&mut digits, pairs) {
            break;
        }
    }
    Ok(inc.finish())
}

/// Best AP assignment using LoS gains only.
pub fn los_stage(model: &RateModel, budget: u64) -> Result<Solution, BaselineError> {
    check_budget(model, search_size(model.aps(), model.users()), budget)?;
    search_ap_assignments(&model.without_irs(), |_, _| None)
}

/// Stage one assigns APs on LoS rates; stage two picks mirrors with APs frozen.
pub fn two_stage(model: &RateModel, budget: u64) -> Result<Allocation, BaselineError> {
    let aps = los_stage(model, budget)?;
    let best = best_mirrors(model);
    Ok(Allocation::new(
        aps.allocation
            .links()
            .iter()
            .enumerate()
            .map(|(k, l)| Link::new(l.ap, best[k][l.ap]))
            .collect(),
    ))
}

/// Stage-one APs, each user on its geometrically nearest mirror.
pub fn distance_based(scene: &Scene, model: &RateModel, budget: u64) -> Result<Allocation, BaselineError> {
    if scene.users.len() != model.users() || scene.mirrors.len() != model.mirrors() {
        return Err(BaselineError::Mismatch);
    }
    let aps = los_stage(model, budget)?;
    Ok(Allocation::new(
        aps.allocation
            .links()
            .iter()
            .zip(&scene.users)
            .map(|(l, u)| Link::new(l.ap, nearest_mirror(scene, u.position)))
            .collect(),
    ))
}

pub fn nearest_mirror(scene: &Scene, p: crate::geometry::Point3) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in scene.mirrors.iter().enumerate() {
        let d = m.center.distance(p);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Stage-one APs with no mirror at all.
pub fn no_irs(model: &RateModel, budget: u64) -> Result<Allocation, BaselineError> {
    Ok(los_stage(model, budget)?.allocation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelTables, NoiseModel};
    use crate::env::allocation_utility;

    fn model(users: usize, aps: usize, mirrors: usize, los: Vec<f64>, irs: Vec<f64>) -> RateModel {
        RateModel::from_parts(
            ChannelTables::from_raw(users, aps, mirrors, los, irs),
            vec![5.0; aps],
            vec![20e6; aps],
            vec![0.4; users],
            vec![0.0; users],
            NoiseModel::default(),
        )
    }

    #[test]
    fn single_user_picks_best_pair() {
        // one user, two APs, two mirrors; AP 1 with mirror 0 is strongest
        let m = model(1, 2, 2, vec![1e-6, 1.2e-6], vec![1e-9, 5e-9, 4e-9, 1e-9]);
        let sol = exhaustive_optimal(&m, &OracleOptions::default()).unwrap();
        assert_eq!(sol.allocation.links(), &[Link::new(1, Some(0))]);
        assert!(sol.feasible);
    }

    #[test]
    fn budget_is_enforced() {
        let m = model(3, 2, 2, vec![1e-6; 6], vec![0.0; 12]);
        let opts = OracleOptions { budget: 7, exclusive_mirrors: false };
        assert!(matches!(exhaustive_optimal(&m, &opts), Err(BaselineError::BudgetExceeded { options: 8, .. })));
        let opts = OracleOptions { budget: 8, exclusive_mirrors: false };
        assert_eq!(exhaustive_optimal(&m, &opts).unwrap().evaluated, 8);
        let opts = OracleOptions { budget: 63, exclusive_mirrors: true };
        assert!(exhaustive_optimal(&m, &opts).is_err());
    }

    #[test]
    fn exclusivity_separates_users() {
        // both users prefer mirror 0; with exclusivity one must move
        let m = model(2, 1, 2, vec![0.0, 0.0], vec![5e-6, 1e-6, 4e-6, 3e-6]);
        let shared = exhaustive_optimal(&m, &OracleOptions::default()).unwrap();
        assert_eq!(shared.allocation.mirror_of(0), Some(0));
        assert_eq!(shared.allocation.mirror_of(1), Some(0));
        let excl = exhaustive_optimal(&m, &OracleOptions { exclusive_mirrors: true, ..Default::default() }).unwrap();
        assert_ne!(excl.allocation.mirror_of(0), excl.allocation.mirror_of(1));
        assert!(excl.utility <= shared.utility);
    }

    #[test]
    fn single_mirror_two_stage_uses_it() {
        let m = model(2, 2, 1, vec![1e-6, 2e-7, 3e-7, 1e-6], vec![1e-9, 0.0, 0.0, 2e-9]);
        let ts = two_stage(&m, DEFAULT_ORACLE_BUDGET).unwrap();
        let stage1 = no_irs(&m, DEFAULT_ORACLE_BUDGET).unwrap();
        for k in 0..2 {
            assert_eq!(ts.ap_of(k), stage1.ap_of(k));
            assert_eq!(ts.mirror_of(k), Some(0));
        }
    }

    #[test]
    fn two_stage_myopia_is_suboptimal() {
        // user 1 has no LoS at all and is only reachable through AP 1's mirror
        let los = vec![2e-6, 1e-6, 0.0, 0.0];
        let irs = vec![0.0, 0.0, 0.0, 5e-7];
        let m = model(2, 2, 1, los, irs);
        let opt = exhaustive_optimal(&m, &OracleOptions::default()).unwrap();
        let ts = two_stage(&m, DEFAULT_ORACLE_BUDGET).unwrap();
        let u_ts = allocation_utility(&m, &ts).unwrap();
        assert!(opt.utility.is_finite());
        assert!(u_ts < opt.utility);
        assert_eq!(opt.allocation.ap_of(1), 1);
    }

    #[test]
    fn infeasible_instances_are_flagged() {
        let mut m = model(1, 1, 1, vec![1e-6], vec![0.0]);
        m = RateModel::from_parts(m.tables().clone(), vec![5.0], vec![20e6], vec![0.4], vec![1e12], NoiseModel::default());
        let sol = exhaustive_optimal(&m, &OracleOptions::default()).unwrap();
        assert!(!sol.feasible);
        assert!(sol.utility.is_finite());
    }
}
