//! Structural analysis of the bundled benchmark plant: incidence matrix,
//! Dulmage-Mendelsohn decomposition, redundancy, and fault detectability and
//! isolability.
//!
//! ```bash
//! cargo run --example structural_analysis
//! ```

use greybox_fdi::dm::{detectable_faults, dm_decompose, isolability_matrix, redundancy};
use greybox_fdi::plant::reference_structural_model;

fn main() {
    let model = reference_structural_model();
    let sub = model.all_equations();

    let inc = model.incidence_matrix();
    println!(
        "incidence: {} equations x {} variables, {} entries",
        inc.rows.len(),
        inc.cols.len(),
        inc.true_entries()
    );

    let dm = dm_decompose(&sub);
    let names = |eqs: &[greybox_fdi::model::EqId]| {
        eqs.iter()
            .map(|&e| model.equation(e).name.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("redundancy: {}", redundancy(&sub));
    println!("over-determined:    {}", names(&dm.over_eqs));
    println!("exactly determined: {}", names(&dm.exact_eqs));
    println!("under-determined:   {}", names(&dm.under_eqs));

    let detectable = detectable_faults(&model);
    println!(
        "detectable faults: {}",
        detectable
            .iter()
            .map(|&f| model.variable(f).name.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    );

    let iso = isolability_matrix(&model);
    let fault_names: Vec<&str> = model
        .fault_locations()
        .iter()
        .map(|&(f, _)| model.variable(f).name.as_str())
        .collect();
    println!("isolability (X = row isolable from column):");
    println!("         {}", fault_names.join("  "));
    for (i, row) in iso.iter().enumerate() {
        let cells: Vec<&str> = row.iter().map(|&b| if b { "X" } else { "." }).collect();
        println!("{:8} {}", fault_names[i], cells.join("     "));
    }
}
