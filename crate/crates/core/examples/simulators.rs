//! Roll out the three simulator presets under their observational and
//! interventional policies and summarise the outcomes.
//!
//! cargo run --release --example simulators

use edq::evaluation::{PolicyParams, SimulatorConfig};
use edq::process::EventKind;
use edq::rng::SeedStream;
use edq::stats::{mean, standard_error};

fn main() -> edq::error::Result<()> {
    let rate = |rate| PolicyParams::Rate { rate };
    let tumor = |gamma, beta| PolicyParams::Tumor { gamma, beta };
    let cases = [
        ("failure-short", SimulatorConfig::failure_short(), [rate(0.2), rate(2.0)]),
        ("failure-long", SimulatorConfig::failure_long(), [rate(0.1), rate(0.5)]),
        ("tumor", SimulatorConfig::tumor(), [tumor(10.0, 0.5), tumor(6.0, 0.75)]),
    ];
    let n = 300;
    println!("{:<14} {:>9} {:>10} {:>8} {:>9} {:>9}", "simulator", "policy", "mean Y", "se", "treats", "features");
    for (name, cfg, policies) in cases {
        let sim = cfg.build()?;
        for p in policies {
            let policy = cfg.policy(&p)?;
            let seeds = SeedStream::new(0).child(name);
            let mut ys = Vec::with_capacity(n);
            let (mut treats, mut feats) = (0usize, 0usize);
            for i in 0..n {
                let (traj, y) = sim.simulate(&policy, &mut seeds.index(i as u64).rng())?;
                treats += traj.of_kind(EventKind::Treatment).count();
                feats += traj.of_kind(EventKind::Feature).count();
                ys.push(y);
            }
            let (m, se) = (mean(&ys), standard_error(&ys));
            println!(
                "{name:<14} {:>9} {m:>10.3} {se:>8.3} {:>9.2} {:>9.2}",
                p.label(),
                treats as f64 / n as f64,
                feats as f64 / n as f64
            );
        }
    }
    Ok(())
}
