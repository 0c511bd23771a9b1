//! Exact answers on a small discrete decision process, and sampled tabular
//! EDQ converging to them.
//!
//! cargo run --release --example tabular_oracle

use edq::estimators::{edq_value_iteration, train_edq_tabular, TabularConfig};
use edq::oracle::{
    edq_fixed_point, edq_residual, enumerate_expectation, fixed_point_sweep, identity_sweep, DiscreteProcess,
    Measure,
};
use edq::rng::SeedStream;

fn main() -> edq::error::Result<()> {
    let mut rng = SeedStream::new(11).child("example").rng();
    let proc = DiscreteProcess::random(2, 2, 2, &mut rng)?;

    let target_value = enumerate_expectation(&proc, &[], Measure::Target)?;
    let observed_value = enumerate_expectation(&proc, &[], Measure::Observed)?;
    println!("E_target[Y] = {target_value:.6}   E_obs[Y] = {observed_value:.6}");

    let exact = edq_fixed_point(&proc)?;
    println!("fixed point: {} entries, residual {:.1e}", exact.len(), edq_residual(&proc, &exact)?);
    println!("Q(root) = {:.6}", exact.get(&[])?);
    let vi = edq_value_iteration(&proc, 10)?;
    println!("value iteration, 10 sweeps: sup distance {:.1e}", vi.max_abs_diff(&exact)?);

    let cfg = TabularConfig { updates: 200_000, log_every: 25_000, ..Default::default() };
    let (_, trace) = train_edq_tabular(&proc, &cfg, Some(&exact))?;
    println!("\nsampled EDQ, 1/n steps");
    for (n, d) in trace {
        println!("  {n:>7} updates  sup |Q - Q*| = {d:.4}");
    }

    let id = identity_sweep(20, 0)?;
    let fp = fixed_point_sweep(20, 0)?;
    println!("\nrandom instances: identity {} checks, max err {:.1e}", id.checks, id.max_error);
    println!("                  fixed point {} checks, max err {:.1e}", fp.checks, fp.max_error);
    Ok(())
}
