//! Write a simulated dataset in the on-disk format, read it back, and show
//! that the round trip is bit-exact.
//!
//! cargo run --example dataset_io

use edq::artifacts::{content_hash, dataset_to_string, parse_dataset, read_text, write_text};
use edq::estimators::Dataset;
use edq::evaluation::{PolicyParams, SimulatorConfig};
use edq::rng::SeedStream;
use std::path::Path;

fn main() -> edq::error::Result<()> {
    let cfg = SimulatorConfig::failure_short();
    let sim = cfg.build()?;
    let policy = cfg.policy(&PolicyParams::Rate { rate: 2.0 })?;
    let data = Dataset::simulate(sim.as_ref(), &policy, 3, &SeedStream::new(5))?;

    let text = dataset_to_string(&data, "example-data", "example-config");
    println!("{text}");

    let path = std::env::temp_dir().join("edq-example-dataset.csv");
    write_text(&path, &text)?;
    let back = read_text(&path)?;
    let (header, parsed) = parse_dataset(&back, &path)?;
    println!("header: n={} horizon={} data={}", header.n, header.horizon, header.data_key);
    println!("records identical: {}", parsed.records == data.records);
    println!("content hash: {}", content_hash(back.as_bytes()));

    match parse_dataset("# edq-dataset v1 horizon=10 n=1 data=a config=b\n0,3.0,feature,1\n", Path::new("bad.csv")) {
        Err(e) => println!("malformed file: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
