//! The Q-network building blocks: time embedding, featuriser, an MLP with a
//! finite-difference gradient check, and the soft target update.
//!
//! cargo run --example mlp_gradient

use edq::approximator::{
    embed_time, featurize, gradient_check, soft_update_law_error, Activation, FeatureConfig, Mlp, Optimizer,
    OptimizerKind,
};
use edq::process::{Event, EventKind};
use edq::rng::SeedStream;

fn main() -> edq::error::Result<()> {
    println!("embed_time(2.5, 8) = {:.4?}", embed_time(2.5, 8)?);

    let history = vec![
        Event::new(0.4, EventKind::Feature, vec![1.2]),
        Event::new(1.1, EventKind::Treatment, vec![0.7]),
        Event::new(1.9, EventKind::Outcome, vec![]),
    ];
    let fc = FeatureConfig { k_events: 4, time_dim: 4, mark_dim: 1 };
    let x = featurize(&history, 2.5, &fc)?;
    println!("features at t=2.5: {} values", x.len());

    let worst = gradient_check(100, 42)?;
    println!("backprop vs central differences, 100 random nets: max rel err {worst:.2e}");

    // fit y = sin(3x) on [-1, 1]
    let mut rng = SeedStream::new(1).rng();
    let mut net = Mlp::new(vec![1, 16, 16, 1], Activation::Tanh, &mut rng)?;
    let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-2, 0.9, net.n_params());
    let xs: Vec<f64> = (0..64).map(|i| -1.0 + 2.0 * i as f64 / 63.0).collect();
    for step in 0..=2000 {
        let mut grad = vec![0.0; net.n_params()];
        let mut loss = 0.0;
        for &x in &xs {
            let err = net.forward(&[x])? - (3.0 * x).sin();
            loss += err * err / xs.len() as f64;
            net.backward(&[x], 2.0 * err / xs.len() as f64, &mut grad)?;
        }
        if step % 500 == 0 {
            println!("step {step:>4}  mse {loss:.2e}");
        }
        opt.step(&mut net.params, &grad);
    }

    // θ' ← (1−τ)θ' + τθ against the closed form θ + (1−τ)^n (θ'₀ − θ)
    let err = soft_update_law_error(&[0.3, -1.0, 2.0], &[1.0, 0.5, -0.25], 0.01, 100)?;
    println!("soft update, 100 steps at tau=0.01: max rel err {err:.2e}");
    Ok(())
}
