//! Causality of a residual generator depends on which equation plays the
//! residual role. This walks a five-equation model with two integrators and
//! one sensor through every residual choice and prints the resulting
//! computational graph classification.
//!
//! ```bash
//! cargo run --example causality_tour
//! ```

use greybox_fdi::causal::{classify_residual_choices, extract_state_space, Causality};
use greybox_fdi::model::{serialize_model, two_state_example};
use greybox_fdi::mso::find_msos;

fn main() {
    let model = two_state_example();
    println!("model:\n{}", serialize_model(&model));

    let msos = find_msos(&model).expect("enumeration fits in the default cap");
    println!("MSO sets: {}", msos.len());
    let mso = &msos[0];

    for (eq, result) in classify_residual_choices(mso, &model) {
        let name = &model.equation(eq).name;
        match result {
            Ok(graph) => {
                println!(
                    "residual {name}: {} causality ({} integrations, {} differentiations)",
                    graph.causality().label(),
                    graph.integration_nodes.len(),
                    graph.differentiation_nodes.len()
                );
                if graph.causality() == Causality::Integral {
                    let s = extract_state_space(&graph, &model).unwrap();
                    println!("--- state-space structure ---\n{}", s.to_text());
                    println!("--- DOT graph ---\n{}", graph.to_dot(&model));
                }
            }
            Err(err) => println!("residual {name}: rejected ({err})"),
        }
    }
}
