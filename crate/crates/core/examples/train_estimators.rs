//! Train EDQ, discretised FQE and ERM on the same observational data and
//! score them on held-out trajectories from the target policy.
//!
//! cargo run --release --example train_estimators

use edq::approximator::{FeatureConfig, MlpConfig};
use edq::estimators::{train_estimator, EstimatorKind, TrainConfig};
use edq::evaluation::{evaluate, test_data, training_data, PolicyParams, SimulatorConfig};

fn main() -> edq::error::Result<()> {
    let sim = SimulatorConfig::failure_short();
    let (obs, int) = (PolicyParams::Rate { rate: 0.2 }, PolicyParams::Rate { rate: 2.0 });
    let data = training_data(&sim, &obs, 300, 0)?;
    let test = test_data(&sim, &int, 200, 0)?;
    let target = sim.policy(&int)?;

    let cfg = TrainConfig {
        iterations: 800,
        batch_size: 16,
        lr_end_factor: 0.1,
        features: FeatureConfig { k_events: 8, time_dim: 8, mark_dim: sim.mark_dim() },
        mlp: MlpConfig { hidden: vec![32, 32], ..Default::default() },
        log_every: 200,
        ..Default::default()
    };
    println!("obs rate {} -> target rate {}, {} training trajectories", obs.label(), int.label(), data.len());
    for kind in [EstimatorKind::Edq, EstimatorKind::Fqe, EstimatorKind::Erm] {
        let trained = train_estimator(kind, &data, &target, &cfg)?;
        let last = trained.diagnostics.last().expect("log_every divides iterations");
        println!(
            "{:<4} loss {:.3e}  mean window {:.3}  nRMSE {:.3}",
            kind.as_str(),
            last.loss,
            last.mean_delta,
            evaluate(&trained.q, &test)?
        );
    }
    Ok(())
}
