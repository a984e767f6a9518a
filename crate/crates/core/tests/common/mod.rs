#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;

use irs_owc::config::{load_scenario, ScenarioConfig};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn scenario(name: &str) -> ScenarioConfig {
    load_scenario(&scenario_path(name)).unwrap()
}

/// Reduced scene `i` of the fixed family used for optimality checks:
/// K = 2..3 users, L = 2..3 APs, one row of M = 2..4 mirrors, no blockers.
pub fn reduced(i: usize) -> (ScenarioConfig, u64) {
    let mut cfg = scenario("default_fig3.cfg");
    let (k, l, m) = (2 + i % 2, 2 + (i / 2) % 2, 2 + i % 3);
    let aps = [[1.25, 1.25, 3.0], [3.75, 3.75, 3.0], [1.25, 3.75, 3.0]];
    cfg.access_points.positions = aps[..l].to_vec();
    cfg.mirror_arrays[0].rows = 1;
    cfg.mirror_arrays[0].cols = m;
    cfg.users.count = k;
    cfg.blockers.count = 0;
    cfg.validate().unwrap();
    (cfg, 100 + i as u64)
}

/// Writes straight to stderr so the line shows up even under output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}
