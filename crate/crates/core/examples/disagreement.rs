//! Earliest disagreement between an observed trajectory and a target policy.
//!
//! For one failure-simulator patient, draw target treatments after `t`, find
//! where the two treatment streams first part ways, and splice the
//! trajectory there.
//!
//! cargo run --example disagreement

use edq::disagreement::AugmentedSample;
use edq::evaluation::{PolicyParams, SimulatorConfig};
use edq::rng::SeedStream;
use std::collections::BTreeMap;

fn main() -> edq::error::Result<()> {
    let cfg = SimulatorConfig::failure_short();
    let sim = cfg.build()?;
    let observed = cfg.policy(&PolicyParams::Rate { rate: 2.0 })?;
    let target = cfg.policy(&PolicyParams::Rate { rate: 0.2 })?;
    let seeds = SeedStream::new(3);

    let (traj, y) = sim.simulate(&observed, &mut seeds.child("patient").rng())?;
    println!("observed trajectory: {} events, outcome {y:.3}", traj.len());

    let t = 1.0;
    let mut rng = seeds.child("target").rng();
    let s = AugmentedSample::draw(traj.clone(), &target, t, &mut rng)?;
    println!("anchor t = {t}");
    println!("target treatments after t: {:?}", s.target_treatments.iter().map(|e| e.time).collect::<Vec<_>>());
    println!("delta = {:.4} ({:?})", s.delta, s.boundary);
    let spliced = s.splice()?;
    println!("spliced trajectory keeps {} events up to t+delta", spliced.len());

    // how often each boundary ends the window, and the mean window length
    let mut tally: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for _ in 0..2_000 {
        let s = AugmentedSample::draw(traj.clone(), &target, t, &mut rng)?;
        let e = tally.entry(format!("{:?}", s.boundary)).or_default();
        e.0 += 1;
        e.1 += s.delta;
    }
    println!("\nboundary         share   mean delta");
    for (b, (n, sum)) in &tally {
        println!("{b:<16} {:>5.3}   {:>8.4}", *n as f64 / 2000.0, sum / *n as f64);
    }
    Ok(())
}
