#![allow(dead_code)]

use dlsim::config::{ExperimentConfig, Protocol};
use dlsim::presets::{fig1_base, multi_region};
use dlsim::sim::{Fault, MS, SEC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A short run with a random crash/partition schedule. Odd seeds use three
/// regions. Clock offsets sit at the skew bound.
pub fn random_faulty(protocol: Protocol, seed: u64) -> ExperimentConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5afe_7e57);
    let mut cfg = fig1_base();
    cfg.experiment = "safety".into();
    cfg.protocol = protocol;
    cfg.seed = seed;
    cfg.nodes = rng.gen_range(3..=7);
    if seed % 2 == 1 {
        multi_region(&mut cfg);
        cfg.lease.lease_ms = 500.0;
    }
    cfg.adversarial_clocks = true;
    cfg.workload.resources = rng.gen_range(2..=5);
    cfg.workload.clients = rng.gen_range(2..=8);
    cfg.workload.contention = rng.gen_range(0.0..=1.0);
    cfg.workload.locality = rng.gen_range(0.0..=1.0);
    cfg.workload.duration_s = 3.0;
    cfg.workload.warmup_s = 0.0;
    cfg.durable_write_us = rng.gen_range(0..=2) * MS;
    let end = 3 * SEC;
    let n = cfg.nodes as u32;
    // One crash window per chosen node keeps the schedule consistent.
    let mut nodes: Vec<u32> = (0..n).collect();
    for _ in 0..rng.gen_range(0..=2) {
        let node = nodes.swap_remove(rng.gen_range(0..nodes.len()));
        let at = rng.gen_range(100 * MS..end - 500 * MS);
        cfg.faults.push(Fault::Crash { node, at_us: at });
        if rng.gen_bool(0.7) {
            cfg.faults.push(Fault::Recover { node, at_us: at + rng.gen_range(50 * MS..800 * MS) });
        }
    }
    for _ in 0..rng.gen_range(0..=2) {
        let side: Vec<u32> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        if side.is_empty() || side.len() == n as usize {
            continue;
        }
        let start = rng.gen_range(100 * MS..end - 300 * MS);
        cfg.faults.push(Fault::Partition { side, start_us: start, end_us: start + rng.gen_range(20 * MS..600 * MS) });
    }
    cfg.faults.sort_by_key(Fault::at);
    cfg
}
