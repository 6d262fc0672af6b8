//! Trains one grey-box RNN residual generator on nominal data from the
//! benchmark plant and saves the weights. Short schedule; expect a coarse
//! fit. The flow predictor used here has one state driven by one actuator.
//!
//! ```bash
//! cargo run --example train_residual
//! ```

use greybox_fdi::causal::{enumerate_integral_candidates, extract_state_space};
use greybox_fdi::mso::find_msos;
use greybox_fdi::plant::{excitation_profile, simulate_plant, reference_structural_model, PlantSpec};
use greybox_fdi::rnn::{GreyBoxRnn, NetConfig};
use greybox_fdi::timeseries::{Normalization, NormalizationKind};
use greybox_fdi::train::{make_batches, train, TrainConfig};

fn main() {
    let model = reference_structural_model();
    let spec = PlantSpec::default();

    // nominal training data, normalized per signal to [0, 1]
    let data = simulate_plant(&spec, &excitation_profile(6000, 3), None, 30).unwrap();
    let names: Vec<String> = ["u1", "u2", "y1", "y2", "y3"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let columns: Vec<Vec<f64>> = names
        .iter()
        .map(|n| data.signal(n).unwrap().to_vec())
        .collect();
    let norm = Normalization::fit(NormalizationKind::MinMax, &names, &columns);

    // pick the flow predictor: smallest integral candidate, sensor y3
    let msos = find_msos(&model).unwrap();
    let candidate = enumerate_integral_candidates(&msos, &model, None)
        .into_iter()
        .find(|c| model.variable(c.sensor).name == "y3")
        .expect("the benchmark has a y3 candidate");
    let structure = extract_state_space(&candidate.graph, &model).unwrap();
    println!("structure:\n{}", structure.to_text());

    let inputs: Vec<Vec<f64>> = structure
        .inputs
        .iter()
        .map(|n| norm.normalize(n, data.signal(n).unwrap()).unwrap())
        .collect();
    let measured = norm
        .normalize(&structure.output_sensor, data.signal(&structure.output_sensor).unwrap())
        .unwrap();
    let batches = make_batches(&inputs, &measured, 600, None).unwrap();

    let net_cfg = NetConfig {
        hidden_widths: vec![16, 16],
        seed: 1,
        sampling_time: 0.05,
        initial_state: None,
        state_clamp: 1e6,
    };
    let mut rnn = GreyBoxRnn::new(structure, &net_cfg).unwrap();
    let train_cfg = TrainConfig {
        epochs: 80,
        initial_lr: 1e-2,
        hidden_widths: vec![16, 16],
        ..TrainConfig::default()
    };
    let report = train(&mut rnn, &batches, &train_cfg).unwrap();
    for (e, loss) in report.loss_curve.iter().enumerate() {
        if e % 10 == 0 || e + 1 == report.loss_curve.len() {
            println!("epoch {e:3}: loss {loss:.6}");
        }
    }

    std::fs::write("flow_predictor.weights", rnn.save_weights()).unwrap();
    println!(
        "saved flow_predictor.weights ({} parameters, structure hash {})",
        rnn.param_count(),
        &rnn.structure.structure_hash()[..12]
    );
}
