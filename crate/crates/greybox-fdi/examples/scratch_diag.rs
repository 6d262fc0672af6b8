use greybox_fdi::causal::{enumerate_integral_candidates, extract_state_space, StateSpaceStructure};
use greybox_fdi::detect::{debias, tune_cusum, roc_auc, cusum, CusumTuning, Direction};
use greybox_fdi::mso::find_msos;
use greybox_fdi::plant::{excitation_profile, simulate_plant, FaultKind, FaultScenario, PlantDataset, PlantSpec};
use greybox_fdi::rnn::{GreyBoxRnn, NetConfig};
use greybox_fdi::timeseries::{Normalization, NormalizationKind};
use greybox_fdi::train::{make_batches, train, TrainConfig};

const SKIP: usize = 200; const WINDOW: usize = 100; const ONSET: usize = 2000; const HORIZON: usize = 4000;

struct Gen { name: String, s: StateSpaceStructure, rnn: GreyBoxRnn }

fn main() {
    let model = greybox_fdi::plant::reference_structural_model();
    let spec = PlantSpec::default();
    let train_data = simulate_plant(&spec, &excitation_profile(12_000, 11), None, 100).unwrap();
    let names: Vec<String> = ["u1","u2","y1","y2","y3"].iter().map(|s| s.to_string()).collect();
    let cols: Vec<Vec<f64>> = names.iter().map(|n| train_data.signal(n).unwrap().to_vec()).collect();
    let norm = Normalization::fit(NormalizationKind::MinMax, &names, &cols);
    let msos = find_msos(&model).unwrap();
    let cands = enumerate_integral_candidates(&msos, &model, None);

    let mut gens = Vec::new();
    for want in ["mso1_y1", "mso2_y3", "mso5_y2"] {
        let c = cands.iter().find(|c| format!("mso{}_{}", c.mso_id, model.variable(c.sensor).name) == want).unwrap();
        let s = extract_state_space(&c.graph, &model).unwrap();
        let cache = format!("/tmp/gb_cache_{want}.weights");
        let rnn = if let Ok(text) = std::fs::read_to_string(&cache) {
            GreyBoxRnn::load_weights(&text, s.clone()).unwrap()
        } else {
            let inputs: Vec<Vec<f64>> = s.inputs.iter().map(|n| norm.normalize(n, train_data.signal(n).unwrap()).unwrap()).collect();
            let measured = norm.normalize(&s.output_sensor, train_data.signal(&s.output_sensor).unwrap()).unwrap();
            let batches = make_batches(&inputs, &measured, 600, None).unwrap();
            let net_cfg = NetConfig { hidden_widths: vec![16,16], seed: 42, sampling_time: 0.05, initial_state: None, state_clamp: 1e6 };
            let mut rnn = GreyBoxRnn::new(s.clone(), &net_cfg).unwrap();
            let tc = TrainConfig { epochs: 300, initial_lr: 1e-2, hidden_widths: vec![16,16], ..TrainConfig::default() };
            train(&mut rnn, &batches, &tc).unwrap();
            std::fs::write(&cache, rnn.save_weights()).unwrap();
            rnn
        };
        gens.push(Gen { name: want.to_string(), s, rnn });
    }

    let tail_of = |g: &Gen, data: &PlantDataset| -> Vec<f64> {
        let inputs: Vec<Vec<f64>> = g.s.inputs.iter().map(|n| norm.normalize(n, data.signal(n).unwrap()).unwrap()).collect();
        let m = norm.normalize(&g.s.output_sensor, data.signal(&g.s.output_sensor).unwrap()).unwrap();
        let traj = g.rnn.simulate(&inputs, &m).unwrap();
        let d = debias(&traj.residual[SKIP..], WINDOW).unwrap();
        d[WINDOW..].to_vec()
    };

    // tuning over val + 2 extra excitations
    let val = simulate_plant(&spec, &excitation_profile(HORIZON, 12), None, 101).unwrap();
    let ex18 = simulate_plant(&spec, &excitation_profile(HORIZON, 18), None, 103).unwrap();
    let ex19 = simulate_plant(&spec, &excitation_profile(HORIZON, 19), None, 104).unwrap();
    let mut tuned = Vec::new();
    for g in &gens {
        let mut series = tail_of(g, &val);
        series.extend(tail_of(g, &ex18));
        series.extend(tail_of(g, &ex19));
        let t = tune_cusum(&series, &CusumTuning::default()).unwrap();
        println!("{}: nu={:.4} J={:.4}", g.name, t.drift_positive, t.threshold);
        tuned.push(t);
    }

    // decoupled sweep detail: mso1_y1 vs f_y2
    println!("--- decoupled sweep (mso1_y1 vs f_y2) ---");
    for (i, mag) in [-0.2, -0.1, 0.0, 0.1, 0.2].into_iter().enumerate() {
        let seed = 301 + i as u64;
        let inputs = excitation_profile(HORIZON, seed);
        let nominal = simulate_plant(&spec, &inputs, None, seed ^ 0x1111).unwrap();
        let scen = FaultScenario { kind: FaultKind::Sensor(1), magnitude: mag, onset: ONSET };
        let faulty = simulate_plant(&spec, &inputs, Some(&scen), seed ^ 0x2222).unwrap();
        let post = ONSET - SKIP - WINDOW;
        let nt = tail_of(&gens[0], &nominal)[post..].to_vec();
        let ft = tail_of(&gens[0], &faulty)[post..].to_vec();
        let roc = roc_auc(&nt, &ft).unwrap();
        println!("mag {mag:+.2}: norm_pos {:+.4} norm_neg {:+.4}", roc.normalized_positive, roc.normalized_negative);
    }

    // criterion-5-style scenarios
    println!("--- scenarios ---");
    let faults = [(FaultKind::Sensor(0), "f_y1"), (FaultKind::Sensor(1), "f_y2"), (FaultKind::Sensor(2), "f_y3"), (FaultKind::Leak, "f_leak")];
    for s in 0..20usize {
        let (kind, truth) = faults[s % 4];
        let magnitude = match kind { FaultKind::Leak => 0.9, _ => if (s/4) % 2 == 0 { -0.2 } else { 0.2 } };
        let scen = FaultScenario { kind, magnitude, onset: ONSET };
        let data = simulate_plant(&spec, &excitation_profile(HORIZON, 400 + s as u64), Some(&scen), (400 + s as u64) ^ 0xabcd).unwrap();
        print!("s{s:02} {truth} f={magnitude:+.1}: ");
        for (k, g) in gens.iter().enumerate() {
            let tail = tail_of(g, &data);
            let alarm = tuned[k].first_alarm(&tail);
            let maxpos = cusum(&tail, tuned[k].drift_positive, Direction::Positive).into_iter().fold(0.0f64, f64::max);
            let maxneg = cusum(&tail, tuned[k].drift_negative, Direction::Negative).into_iter().fold(0.0f64, f64::max);
            print!("{}[{} max {:.2}/{:.2} J {:.2}] ", g.name, alarm.map_or("-".into(), |a| format!("{}", SKIP+WINDOW+a)), maxpos, maxneg, tuned[k].threshold);
        }
        println!();
    }
}
