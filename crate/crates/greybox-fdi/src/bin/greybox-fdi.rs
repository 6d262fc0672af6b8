//! Command-line front end; every subcommand is a thin wrapper over the
//! library. See the crate examples for programmatic use.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use greybox_fdi::causal::{enumerate_integral_candidates, extract_state_space};
use greybox_fdi::detect::CusumTuning;
use greybox_fdi::dm::{fault_signature, FaultSignatureMatrix};
use greybox_fdi::model::{parse_model, serialize_model, StructuralModel, VarKind};
use greybox_fdi::mso::find_msos_capped;
use greybox_fdi::pipeline::{
    candidate_name, derive_seed, dm_ordered_incidence_csv, dm_report, evaluate_residual_tables,
    mso_listing, mso_support_csv, run_pipeline, PipelineConfig, PipelineOutcome, StageState,
};
use greybox_fdi::plant::{excitation_profile, simulate_plant, FaultKind, FaultScenario, PlantSpec};
use greybox_fdi::rnn::{GreyBoxRnn, NetConfig};
use greybox_fdi::timeseries::{read_timeseries, Normalization, NormalizationKind};
use greybox_fdi::train::{make_batches, train, TrainConfig};

#[derive(Parser)]
#[command(
    name = "greybox-fdi",
    version,
    about = "Structural-model-driven grey-box RNN residual generators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a structural model file.
    Validate { model: PathBuf },
    /// Dulmage-Mendelsohn decomposition: partition text and DM-ordered
    /// incidence CSV.
    Dm {
        model: PathBuf,
        /// Directory for dm.txt and dm.csv; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate MSO sets with their fault signature rows.
    Msos {
        model: PathBuf,
        /// Also emit the MSO-by-equation membership CSV.
        #[arg(long)]
        support_matrix: bool,
        #[arg(long, default_value_t = 10_000)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Computational graphs with integral causality: DOT files plus
    /// state-space structure blocks.
    Graphs {
        model: PathBuf,
        /// Comma-separated sensor variables admissible as residual
        /// equations.
        #[arg(long, value_delimiter = ',')]
        sensors: Option<Vec<String>>,
        #[arg(long, default_value = "graphs-out")]
        out: PathBuf,
    },
    /// Simulate the bundled benchmark plant to CSV.
    Simulate(SimulateArgs),
    /// Train grey-box RNN residual generators for one MSO/sensor choice.
    Train(TrainArgs),
    /// Evaluate residual CSVs: AUC tables, CUSUM traces, alarms, diagnoses.
    Evaluate(EvaluateArgs),
    /// Run the whole design pipeline from a config file.
    Pipeline { config: PathBuf },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "plant.csv")]
    out: PathBuf,
    /// Samples at 20 Hz.
    #[arg(long, default_value_t = 12_000)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault to inject: f_y1, f_y2, f_y3 or f_leak.
    #[arg(long)]
    fault: Option<String>,
    #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
    magnitude: f64,
    /// Fault onset sample.
    #[arg(long, default_value_t = 0)]
    onset: usize,
    /// Also write the structural model file to this path.
    #[arg(long)]
    emit_model: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: PathBuf,
    /// MSO id as printed by `msos`.
    #[arg(long)]
    mso: usize,
    /// Sensor variable used as residual equation.
    #[arg(long)]
    residual: String,
    /// Nominal training data CSV.
    #[arg(long)]
    data: PathBuf,
    /// Optional TOML config; its [training]/[data] sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    root_seed: u64,
    #[arg(long, default_value = "train-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Nominal residual table (one column per residual generator).
    #[arg(long)]
    nominal: PathBuf,
    /// Scenario residual tables with matching columns.
    #[arg(long, num_args = 1..)]
    scenarios: Vec<PathBuf>,
    /// Fault signature CSV (candidate rows, fault columns).
    #[arg(long)]
    signature: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    margin: f64,
    #[arg(long, default_value_t = 2.0)]
    safety_factor: f64,
    #[arg(long, default_value = "evaluate-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_model(path: &Path) -> Result<StructuralModel, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_model(&text).map_err(|e| e.to_string())
}

fn write_out(path: &Path, content: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    }
    std::fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Validate { model } => {
            let m = load_model(&model)?;
            let unknowns = m
                .variable_ids()
                .filter(|&v| m.variable(v).kind.is_unknown())
                .count();
            let knowns = m
                .variable_ids()
                .filter(|&v| m.variable(v).kind == VarKind::Known)
                .count();
            println!(
                "ok: {} equations, {} unknown variables ({} states), {} known, {} faults, {} sensors",
                m.equations().len(),
                unknowns,
                m.links().len(),
                knowns,
                m.fault_locations().len(),
                m.sensor_equations().len()
            );
            print!("{}", serialize_model(&m));
            Ok(ExitCode::SUCCESS)
        }
        Command::Dm { model, out } => {
            let m = load_model(&model)?;
            let report = dm_report(&m);
            let csv = dm_ordered_incidence_csv(&m);
            match out {
                Some(dir) => {
                    write_out(&dir.join("dm.txt"), &report)?;
                    write_out(&dir.join("dm.csv"), &csv)?;
                    println!("wrote {}", dir.display());
                }
                None => {
                    print!("{report}");
                    print!("{csv}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Msos {
            model,
            support_matrix,
            cap,
            out,
        } => {
            let m = load_model(&model)?;
            let msos = find_msos_capped(&m, cap).map_err(|e| e.to_string())?;
            let listing = mso_listing(&m, &msos);
            let sig = fault_signature(
                &msos
                    .iter()
                    .map(|s| (format!("mso{}", s.id), s.equations.clone()))
                    .collect::<Vec<_>>(),
                &m,
            );
            match out {
                Some(dir) => {
                    write_out(&dir.join("msos.txt"), &listing)?;
                    write_out(&dir.join("signature.csv"), &sig.to_csv())?;
                    if support_matrix {
                        write_out(&dir.join("support.csv"), &mso_support_csv(&m, &msos))?;
                    }
                    println!("wrote {}", dir.display());
                }
                None => {
                    print!("{listing}");
                    if support_matrix {
                        print!("{}", mso_support_csv(&m, &msos));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Graphs { model, sensors, out } => {
            let m = load_model(&model)?;
            let msos = find_msos_capped(&m, 10_000).map_err(|e| e.to_string())?;
            let filter = match &sensors {
                None => None,
                Some(names) => {
                    let mut set = BTreeSet::new();
                    for n in names {
                        set.insert(
                            m.find_variable(n)
                                .ok_or_else(|| format!("unknown sensor `{n}`"))?,
                        );
                    }
                    Some(set)
                }
            };
            let candidates = enumerate_integral_candidates(&msos, &m, filter.as_ref());
            for c in &candidates {
                let name = candidate_name(c.mso_id, &m.variable(c.sensor).name);
                let structure = extract_state_space(&c.graph, &m).map_err(|e| e.to_string())?;
                write_out(&out.join(format!("{name}.dot")), &c.graph.to_dot(&m))?;
                write_out(&out.join(format!("{name}.statespace")), &structure.to_text())?;
                println!(
                    "{name}: {} states, inputs [{}]",
                    structure.states.len(),
                    structure.inputs.join(", ")
                );
            }
            if candidates.is_empty() {
                println!("no integral-causality candidates");
            } else {
                println!("wrote {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => {
            let spec = PlantSpec::default();
            let scenario = match &args.fault {
                None => None,
                Some(name) => {
                    let kind = match name.as_str() {
                        "f_y1" => FaultKind::Sensor(0),
                        "f_y2" => FaultKind::Sensor(1),
                        "f_y3" => FaultKind::Sensor(2),
                        "f_leak" => FaultKind::Leak,
                        other => return Err(format!("unknown fault `{other}`")),
                    };
                    Some(FaultScenario {
                        kind,
                        magnitude: args.magnitude,
                        onset: args.onset,
                    })
                }
            };
            let inputs = excitation_profile(args.len, derive_seed(args.seed, "inputs"));
            let data = simulate_plant(
                &spec,
                &inputs,
                scenario.as_ref(),
                derive_seed(args.seed, "noise"),
            )
            .map_err(|e| e.to_string())?;
            write_out(&args.out, &data.to_csv())?;
            if let Some(model_path) = args.emit_model {
                write_out(&model_path, greybox_fdi::plant::MODEL_TEXT)?;
            }
            println!("wrote {} ({} samples)", args.out.display(), data.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let m = load_model(&args.model)?;
            let msos = find_msos_capped(&m, 10_000).map_err(|e| e.to_string())?;
            let mso = msos
                .iter()
                .find(|s| s.id == args.mso)
                .ok_or_else(|| format!("no MSO with id {}", args.mso))?;
            let sensor_var = m
                .find_variable(&args.residual)
                .ok_or_else(|| format!("unknown sensor `{}`", args.residual))?;
            let filter = BTreeSet::from([sensor_var]);
            let candidate =
                enumerate_integral_candidates(std::slice::from_ref(mso), &m, Some(&filter))
                    .into_iter()
                    .next()
                    .ok_or_else(|| {
                        format!(
                            "mso{} with residual `{}` has no integral-causality graph",
                            args.mso, args.residual
                        )
                    })?;
            let structure = extract_state_space(&candidate.graph, &m).map_err(|e| e.to_string())?;
            let name = candidate_name(args.mso, &args.residual);

            // training settings: config file when given, defaults otherwise
            let (train_cfg, sampling_time, norm_kind) = match &args.config {
                Some(path) => {
                    let cfg = PipelineConfig::load(path).map_err(|e| e.to_string())?;
                    let tc = TrainConfig {
                        epochs: cfg.training.epochs,
                        initial_lr: cfg.training.initial_lr,
                        decay_factor: cfg.training.decay_factor,
                        decay_every: cfg.training.decay_every,
                        batch_len: cfg.training.batch_len,
                        batch_count: cfg.training.batch_count,
                        hidden_widths: cfg.training.hidden.clone(),
                        ..TrainConfig::default()
                    };
                    let kind = match cfg.data.normalization.as_str() {
                        "zscore" => NormalizationKind::ZScore,
                        _ => NormalizationKind::MinMax,
                    };
                    (tc, cfg.training.sampling_time, kind)
                }
                None => (TrainConfig::default(), 0.05, NormalizationKind::MinMax),
            };

            let table = read_timeseries(&args.data).map_err(|e| e.to_string())?;
            let signal_names: Vec<String> = table
                .names
                .iter()
                .filter(|n| n.as_str() != "time")
                .cloned()
                .collect();
            let columns = table.select(&signal_names).map_err(|e| e.to_string())?;
            let norm = Normalization::fit(norm_kind, &signal_names, &columns);
            write_out(&args.out.join("normalization.txt"), &norm.to_text())?;

            let inputs = structure
                .inputs
                .iter()
                .map(|n| {
                    let col = table
                        .column(n)
                        .ok_or_else(|| format!("missing column `{n}`"))?;
                    norm.normalize(n, col).map_err(|e| e.to_string())
                })
                .collect::<Result<Vec<_>, String>>()?;
            let sensor_col = table
                .column(&structure.output_sensor)
                .ok_or_else(|| format!("missing column `{}`", structure.output_sensor))?;
            let measured = norm
                .normalize(&structure.output_sensor, sensor_col)
                .map_err(|e| e.to_string())?;
            let batches = make_batches(
                &inputs,
                &measured,
                train_cfg.batch_len,
                train_cfg.batch_count,
            )
            .map_err(|e| e.to_string())?;

            for s in 0..args.seeds {
                let seed = derive_seed(args.root_seed, &format!("train/{name}/{s}"));
                let net_cfg = NetConfig {
                    hidden_widths: train_cfg.hidden_widths.clone(),
                    seed,
                    sampling_time,
                    initial_state: None,
                    state_clamp: 1e6,
                };
                let mut rnn =
                    GreyBoxRnn::new(structure.clone(), &net_cfg).map_err(|e| e.to_string())?;
                let report = train(&mut rnn, &batches, &train_cfg).map_err(|e| e.to_string())?;
                let mut loss_csv = String::from("epoch,loss\n");
                for (e, l) in report.loss_curve.iter().enumerate() {
                    loss_csv.push_str(&format!("{e},{l}\n"));
                    if train_cfg.report_every > 0 && e % train_cfg.report_every == 0 {
                        eprintln!("seed {s} epoch {e}: loss {l:.6}");
                    }
                }
                write_out(
                    &args.out.join(format!("{name}_seed{s}.weights")),
                    &rnn.save_weights(),
                )?;
                write_out(&args.out.join(format!("{name}_seed{s}_loss.csv")), &loss_csv)?;
            }
            println!("wrote {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate(args) => {
            let nominal = read_timeseries(&args.nominal).map_err(|e| e.to_string())?;
            let mut scenarios = Vec::new();
            for p in &args.scenarios {
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "scenario".into());
                scenarios.push((label, read_timeseries(p).map_err(|e| e.to_string())?));
            }
            let sig_text = std::fs::read_to_string(&args.signature).map_err(|e| e.to_string())?;
            let sig = FaultSignatureMatrix::from_csv(&sig_text)?;
            let tuning = CusumTuning {
                margin: args.margin,
                safety_factor: args.safety_factor,
                ..CusumTuning::default()
            };
            let eval = evaluate_residual_tables(&nominal, &scenarios, &sig, &tuning)
                .map_err(|e| e.to_string())?;
            write_out(&args.out.join("auc.csv"), &eval.auc_csv)?;
            for (label, csv) in &eval.cusum_csvs {
                write_out(&args.out.join(format!("cusum_{label}.csv")), csv)?;
            }
            write_out(&args.out.join("alarms.txt"), &eval.alarm_log)?;
            write_out(&args.out.join("report.txt"), &eval.report)?;
            print!("{}", eval.report);
            println!("wrote {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline { config } => {
            let cfg = PipelineConfig::load(&config).map_err(|e| e.to_string())?;
            let threads = cfg.output.workers;
            let outcome = if threads > 0 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| e.to_string())?;
                pool.install(|| run_pipeline(&cfg))
            } else {
                run_pipeline(&cfg)
            }
            .map_err(|e| e.to_string())?;
            for s in outcome.stages() {
                println!(
                    "{}: {}",
                    s.name,
                    match s.state {
                        StageState::Ran => "ran",
                        StageState::Cached => "cached",
                    }
                );
            }
            match outcome {
                PipelineOutcome::Complete { out_dir, .. } => {
                    println!("complete: {}", out_dir.display());
                }
                PipelineOutcome::NoCandidates { .. } => {
                    println!("no candidates: pipeline stopped after graphs");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
