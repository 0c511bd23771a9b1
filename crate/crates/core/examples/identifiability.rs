//! Check whether the unobserved processes of a local-independence graph can
//! be eliminated, with open trails reported as witnesses.
//!
//! cargo run --example identifiability

use edq::identifiability::{check_eliminability, confounded_example, figure_one, Graph, GraphSpec};

fn main() -> edq::error::Result<()> {
    for (name, spec) in [("assumed structure", figure_one()), ("hidden confounder", confounded_example())] {
        let g = Graph::from_spec(&spec)?;
        println!("== {name}");
        print!("{}", check_eliminability(&g));
    }

    // the same check from a graph file
    let text = r#"{
        "nodes": ["Nx", "Ny", "Na", "U"],
        "edges": [["Nx", "Na"], ["Nx", "Ny"], ["Na", "Ny"], ["U", "Nx"], ["U", "Ny"]],
        "unobserved_order": ["U"]
    }"#;
    let spec: GraphSpec = serde_json::from_str(text).expect("valid graph json");
    println!("== U drives features and outcomes only");
    print!("{}", check_eliminability(&Graph::from_spec(&spec)?));
    Ok(())
}
