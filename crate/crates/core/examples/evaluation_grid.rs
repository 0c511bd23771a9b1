//! A small estimator × setting grid over two seeds, printed in the same CSV
//! layout the `evaluate` command writes.
//!
//! cargo run --release --example evaluation_grid

use edq::approximator::{FeatureConfig, MlpConfig};
use edq::estimators::{EstimatorKind, TrainConfig};
use edq::evaluation::{aggregate, aggregate_csv, results_csv, run_grid, GridCell, GridConfig, PolicyParams, SimulatorConfig};

fn main() -> edq::error::Result<()> {
    let sim = SimulatorConfig::failure_short();
    let r = |rate| PolicyParams::Rate { rate };
    let mut cells = Vec::new();
    for (obs, int) in [(r(2.0), r(0.2)), (r(0.2), r(2.0))] {
        for estimator in [EstimatorKind::Edq, EstimatorKind::Fqe, EstimatorKind::Erm] {
            cells.push(GridCell { estimator, obs, int });
        }
    }
    let cfg = GridConfig {
        n_train: 200,
        n_test: 100,
        seeds: vec![0, 1],
        train: TrainConfig {
            iterations: 300,
            batch_size: 16,
            features: FeatureConfig { k_events: 8, time_dim: 8, mark_dim: 1 },
            mlp: MlpConfig { hidden: vec![16, 16], ..Default::default() },
            ..Default::default()
        },
    };
    let rows = run_grid(&sim, &cells, &cfg)?;
    print!("{}", results_csv(&rows));
    println!();
    print!("{}", aggregate_csv(&aggregate(&rows)));
    Ok(())
}
