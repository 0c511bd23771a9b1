//! Draw a marked point process by thinning and check the event counts
//! against their known means.
//!
//! cargo run --example thinning

use edq::process::{
    sample_trajectory, Component, Constant, EventKind, GaussianMark, PiecewiseConstant, Policy, ProcessSpec,
};
use edq::rng::SeedStream;

fn main() -> edq::error::Result<()> {
    // features: rate 0.5 on [0,3), 4 on [3,6), 1.5 afterwards; sparse outcomes
    let feature = Component::new(
        PiecewiseConstant::new(vec![0.0, 3.0, 6.0], vec![0.5, 4.0, 1.5])?,
        GaussianMark { mean: 0.0, sd: 1.0 },
    );
    let outcome = Component::new(Constant(0.2), GaussianMark { mean: 1.0, sd: 0.1 });
    let policy = Policy::from_intensity(Constant(1.0), GaussianMark { mean: 0.5, sd: 0.2 });
    let spec = ProcessSpec::new(feature, outcome, policy, 10.0)?;

    let mut rng = SeedStream::new(7).child("thinning").rng();
    let n = 5_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let traj = sample_trajectory(&spec, &mut rng)?;
        for e in traj.events() {
            counts[e.kind.index()] += 1;
        }
    }

    // expected: ∫λ over [0,10]
    let expected = [
        (EventKind::Feature, 0.5 * 3.0 + 4.0 * 3.0 + 1.5 * 4.0),
        (EventKind::Outcome, 0.2 * 10.0),
        (EventKind::Treatment, 1.0 * 10.0),
    ];
    println!("{:<10} {:>9} {:>9}", "kind", "mean", "expected");
    for (kind, mu) in expected {
        let mean = counts[kind.index()] as f64 / n as f64;
        println!("{:<10} {:>9.3} {:>9.3}", kind.as_str(), mean, mu);
    }

    let one = sample_trajectory(&spec, &mut rng)?;
    println!("\none draw, first events:");
    for e in one.events().iter().take(6) {
        println!("  t={:.3} {} {:?}", e.time, e.kind, e.mark);
    }
    Ok(())
}
