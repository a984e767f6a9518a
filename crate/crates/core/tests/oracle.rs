//! The exhaustive oracle against a naive joint enumeration whose rates are
//! recomputed here from the raw channel tables.

mod common;

use irs_owc::baselines::{exhaustive_optimal, two_stage, OracleOptions, DEFAULT_ORACLE_BUDGET};
use irs_owc::channel::{RateModel, ELECTRON_CHARGE};
use irs_owc::config::SceneOverrides;
use irs_owc::scene::Scene;

/// Rates straight from the definitions, for AP/mirror pairs `(l, m)`.
fn naive_rates(scene: &Scene, model: &RateModel, pairs: &[(usize, usize)]) -> Vec<f64> {
    let t = model.tables();
    let nz = &scene.noise;
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(l, m))| {
            let ap = &scene.aps[l];
            let r0 = scene.users[k].responsivity;
            let h = t.los(k, l) + t.irs(k, m, l);
            let mut interference = 0.0;
            for other in 0..scene.aps.len() {
                if other != l && pairs.iter().any(|p| p.0 == other) {
                    interference += r0 * scene.aps[other].optical_power * t.los(k, other);
                }
            }
            let b = ap.bandwidth;
            let shot = if nz.include_signal_shot { 2.0 * ELECTRON_CHARGE * r0 * ap.optical_power * h * b } else { 0.0 };
            let sigma2 = shot + 2.0 * ELECTRON_CHARGE * nz.background_current * b + nz.amplifier_noise_density * b;
            let sinr = (r0 * ap.optical_power * h).powi(2) / (interference.powi(2) + sigma2);
            let sharing = pairs.iter().filter(|p| p.0 == l).count() as f64;
            b / sharing * (1.0 + std::f64::consts::E / (2.0 * std::f64::consts::PI) * sinr).log2()
        })
        .collect()
}

/// Best (feasible-first) log utility over all `(L·M)^K` joint choices.
fn naive_optimum(scene: &Scene, model: &RateModel, exclusive: bool) -> (f64, bool) {
    let (k, l, m) = (scene.users.len(), scene.aps.len(), scene.mirrors.len());
    let options = l * m;
    let mut best = (f64::NEG_INFINITY, false);
    let mut found = false;
    for code in 0..options.pow(k as u32) {
        let mut c = code;
        let pairs: Vec<(usize, usize)> = (0..k)
            .map(|_| {
                let a = c % options;
                c /= options;
                (a / m, a % m)
            })
            .collect();
        if exclusive {
            let mut mirrors: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            mirrors.sort_unstable();
            mirrors.dedup();
            if mirrors.len() < k {
                continue;
            }
        }
        let rates = naive_rates(scene, model, &pairs);
        let u = if rates.iter().all(|&r| r > 0.0) { rates.iter().map(|r| r.ln()).sum() } else { f64::NEG_INFINITY };
        let feasible = rates.iter().zip(&scene.users).all(|(r, user)| *r >= user.min_rate);
        let better = (feasible && !best.1) || (feasible == best.1 && u > best.0) || !found;
        if better {
            best = (u, feasible);
            found = true;
        }
    }
    best
}

fn check(exclusive: bool) {
    for i in 0..10 {
        let (mut cfg, seed) = common::reduced(i);
        cfg.users.min_rate_bps = 4e6;
        for power in [0.5, 5.0] {
            let scene = cfg.build_scene(seed, &SceneOverrides { power_w: Some(power), ..Default::default() }).unwrap();
            let model = RateModel::from_scene(&scene).unwrap();
            if exclusive && scene.mirrors.len() < scene.users.len() {
                continue;
            }
            let opts = OracleOptions { budget: DEFAULT_ORACLE_BUDGET, exclusive_mirrors: exclusive };
            let sol = exhaustive_optimal(&model, &opts).unwrap();
            let (u, feasible) = naive_optimum(&scene, &model, exclusive);
            assert_eq!(sol.feasible, feasible, "scene {i} at {power} W");
            assert!((sol.utility - u).abs() <= 1e-9 * u.abs(), "scene {i} at {power} W: oracle {} naive {u}", sol.utility);
            // the oracle's own utility must be reproducible from the naive rates
            let pairs: Vec<(usize, usize)> =
                sol.allocation.links().iter().map(|lk| (lk.ap, lk.mirror.unwrap_or(0))).collect();
            let rates = naive_rates(&scene, &model, &pairs);
            let recomputed: f64 = rates.iter().map(|r| r.ln()).sum();
            assert!((recomputed - sol.utility).abs() <= 1e-9 * u.abs());
        }
    }
}

#[test]
fn oracle_matches_naive_enumeration_shared_mirrors() {
    check(false);
}

#[test]
fn oracle_matches_naive_enumeration_exclusive_mirrors() {
    check(true);
}

#[test]
fn oracle_dominates_two_stage() {
    for i in 0..10 {
        let (cfg, seed) = common::reduced(i);
        let scene = cfg.build_scene(seed, &SceneOverrides::default()).unwrap();
        let model = RateModel::from_scene(&scene).unwrap();
        let sol = exhaustive_optimal(&model, &OracleOptions::default()).unwrap();
        let ts = two_stage(&model, DEFAULT_ORACLE_BUDGET).unwrap();
        let u = irs_owc::env::allocation_utility(&model, &ts).unwrap();
        assert!(u <= sol.utility + 1e-12 * sol.utility.abs());
    }
}
