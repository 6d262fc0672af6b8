//! Ensemble prediction: several identically structured networks trained from
//! different random initializations, combined into a mean prediction with a
//! three-sigma confidence band. The band widens during input transients and
//! tightens in steady operation.
//!
//! ```bash
//! cargo run --example ensemble_bands
//! ```

use greybox_fdi::causal::{enumerate_integral_candidates, extract_state_space};
use greybox_fdi::mso::find_msos;
use greybox_fdi::plant::{excitation_profile, simulate_plant, reference_structural_model, PlantSpec};
use greybox_fdi::rnn::NetConfig;
use greybox_fdi::timeseries::{Normalization, NormalizationKind};
use greybox_fdi::train::{make_batches, train_ensemble, Ensemble, TrainConfig};

fn main() {
    let model = reference_structural_model();
    let spec = PlantSpec::default();
    let train_data = simulate_plant(&spec, &excitation_profile(6000, 21), None, 210).unwrap();
    let eval_data = simulate_plant(&spec, &excitation_profile(2000, 22), None, 211).unwrap();

    let names: Vec<String> = ["u1", "u2", "y1", "y2", "y3"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let columns: Vec<Vec<f64>> = names
        .iter()
        .map(|n| train_data.signal(n).unwrap().to_vec())
        .collect();
    let norm = Normalization::fit(NormalizationKind::MinMax, &names, &columns);

    let msos = find_msos(&model).unwrap();
    let candidate = enumerate_integral_candidates(&msos, &model, None)
        .into_iter()
        .find(|c| model.variable(c.sensor).name == "y3")
        .unwrap();
    let structure = extract_state_space(&candidate.graph, &model).unwrap();

    let inputs: Vec<Vec<f64>> = structure
        .inputs
        .iter()
        .map(|n| norm.normalize(n, train_data.signal(n).unwrap()).unwrap())
        .collect();
    let measured = norm
        .normalize(&structure.output_sensor, train_data.signal(&structure.output_sensor).unwrap())
        .unwrap();
    let batches = make_batches(&inputs, &measured, 600, None).unwrap();

    let net_cfg = NetConfig {
        hidden_widths: vec![12, 12],
        seed: 0,
        sampling_time: 0.05,
        initial_state: None,
        state_clamp: 1e6,
    };
    let train_cfg = TrainConfig {
        epochs: 60,
        initial_lr: 1e-2,
        hidden_widths: vec![12, 12],
        ..TrainConfig::default()
    };
    let seeds: Vec<u64> = (0..8).collect();
    println!("training {} members in parallel...", seeds.len());
    let members = train_ensemble(&structure, &batches, &net_cfg, &train_cfg, &seeds)
        .unwrap()
        .into_iter()
        .map(|(rnn, report)| {
            println!("  seed done, final loss {:.5}", report.loss_curve.last().unwrap());
            rnn
        })
        .collect();
    let ensemble = Ensemble::new(members).unwrap();

    let eval_inputs: Vec<Vec<f64>> = structure
        .inputs
        .iter()
        .map(|n| norm.normalize(n, eval_data.signal(n).unwrap()).unwrap())
        .collect();
    let eval_measured = norm
        .normalize(&structure.output_sensor, eval_data.signal(&structure.output_sensor).unwrap())
        .unwrap();
    let pred = ensemble.predict(&eval_inputs, &eval_measured).unwrap();

    println!("t,measured,mean,band_lower,band_upper");
    for t in (200..eval_measured.len()).step_by(50) {
        println!(
            "{t},{:.4},{:.4},{:.4},{:.4}",
            eval_measured[t], pred.mean[t], pred.band_lower[t], pred.band_upper[t]
        );
    }
    let avg_width: f64 = pred
        .std
        .iter()
        .skip(200)
        .map(|s| 6.0 * s)
        .sum::<f64>()
        / (pred.std.len() - 200) as f64;
    println!("average band width past settling: {avg_width:.4}");
}
