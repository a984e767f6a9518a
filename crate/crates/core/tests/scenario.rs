mod common;

use irs_owc::channel::{NoiseModel, RateModel};
use irs_owc::config::{load_scenario, parse_scenario, SceneOverrides};
use irs_owc::env::allocation_utility;
use irs_owc::experiment::{evaluate, Scheme};
use proptest::prelude::*;

#[test]
fn bundled_scenarios_load_and_build() {
    for (name, mirrors) in [("default_fig3.cfg", 25), ("fig4.cfg", 25), ("fig5.cfg", 50)] {
        let cfg = common::scenario(name);
        let scene = cfg.build_scene(cfg.seed, &SceneOverrides::default()).unwrap();
        assert_eq!(scene.aps.len(), 4, "{name}");
        assert_eq!(scene.mirrors.len(), mirrors, "{name}");
        assert_eq!(scene.users.len(), 5, "{name}");
    }
    assert_eq!(common::scenario("fig4.cfg").seeds().len(), 20);
}

#[test]
fn omitted_noise_block_uses_defaults() {
    let cfg = common::scenario("default_fig3.cfg");
    assert_eq!(cfg.noise, NoiseModel::default());
}

#[test]
fn out_of_room_ap_is_reported() {
    let text = std::fs::read_to_string(common::scenario_path("default_fig3.cfg")).unwrap();
    let bad = text.replace("[3.75, 3.75, 3.0]", "[3.75, 3.75, 3.2]");
    let err = parse_scenario(&bad).unwrap_err().to_string();
    assert!(err.contains("access point 3"), "{err}");
}

#[test]
fn missing_file_is_an_error() {
    assert!(load_scenario(std::path::Path::new("/definitely/not/here.cfg")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A fixed allocation never loses rate when every AP's power grows.
    #[test]
    fn fixed_allocation_rates_grow_with_power(seed in 0u64..1000, p in 0.2f64..5.0, factor in 1.0f64..4.0) {
        let cfg = common::scenario("default_fig3.cfg");
        let lo = cfg.build_scene(seed, &SceneOverrides { power_w: Some(p), ..Default::default() }).unwrap();
        let hi = cfg.build_scene(seed, &SceneOverrides { power_w: Some(p * factor), ..Default::default() }).unwrap();
        let (mlo, mhi) = (RateModel::from_scene(&lo).unwrap(), RateModel::from_scene(&hi).unwrap());
        let e = evaluate(Scheme::DistanceBased, &lo, &mlo, &cfg, &cfg.training, seed).unwrap();
        let rlo = mlo.rates(e.allocation.links()).unwrap();
        let rhi = mhi.rates(e.allocation.links()).unwrap();
        for (a, b) in rlo.iter().zip(&rhi) {
            prop_assert!(b >= a);
        }
        prop_assert!(allocation_utility(&mhi, &e.allocation).unwrap() >= allocation_utility(&mlo, &e.allocation).unwrap());
    }

    /// Adding blockers to a scene can only remove channel gain.
    #[test]
    fn blockers_only_remove_gain(seed in 0u64..1000) {
        let cfg = common::scenario("fig5.cfg");
        let clear = cfg.build_scene(seed, &SceneOverrides::default()).unwrap();
        let mut blocked = clear.clone();
        blocked.blockers = cfg.build_scene(seed, &SceneOverrides { blockers: Some(3), ..Default::default() }).unwrap().blockers;
        let (a, b) = (RateModel::from_scene(&clear).unwrap(), RateModel::from_scene(&blocked).unwrap());
        for (x, y) in a.tables().los_table().iter().zip(b.tables().los_table()) {
            prop_assert!(y <= x);
        }
        for (x, y) in a.tables().irs_table().iter().zip(b.tables().irs_table()) {
            prop_assert!(y <= x);
        }
    }
}
