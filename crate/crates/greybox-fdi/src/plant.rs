//! Bundled benchmark plant: a desk-scale nonlinear system with ground truth
//! for end-to-end evaluation. Two coupled subsystems, four states:
//!
//! ```text
//! dx1 = a1*u1 - q1 - leak*sqrt(x1)      q1 = a2*sqrt(x1)
//! dx2 = q1 - a3*sqrt(x2)
//! dx3 = b1*u2 - b2*x3 + b3*sqrt(x2)
//! dx4 = b4*x3 - b5*x4 - b6*x3*x4
//! ```
//!
//! Sensors measure x2, x4, and the flow q1, each with additive Gaussian
//! noise. The matching structural model ships as `reference_structural_model`
//! and also carries an unmeasured internal variable (`p`, equation `e13`)
//! that stays outside the over-determined part.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{parse_model, StructuralModel};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
    #[error("fault onset {onset} is outside the horizon {len}")]
    OnsetOutsideHorizon { onset: usize, len: usize },
    #[error("simulation became unstable at step {t}")]
    Unstable { t: usize },
    #[error("input series lengths differ")]
    LengthMismatch,
}

/// Plant parameters; the defaults are the documented benchmark values and
/// every acceptance number is pinned to them.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub sampling_time: f64,
    /// Per-sensor additive noise standard deviation (y1, y2, y3).
    pub noise_std: [f64; 3],
    pub initial_state: [f64; 4],
    pub tank_in_gain: f64,     // a1
    pub tank_flow_coeff: f64,  // a2
    pub tank_out_coeff: f64,   // a3
    pub heat_in_gain: f64,     // b1
    pub heat_loss: f64,        // b2
    pub heat_coupling: f64,    // b3
    pub load_gain: f64,        // b4
    pub load_loss: f64,        // b5
    pub load_product: f64,     // b6
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            sampling_time: 0.05,
            noise_std: [0.005, 0.005, 0.005],
            initial_state: [0.5, 0.5, 0.5, 0.5],
            tank_in_gain: 2.4,
            tank_flow_coeff: 1.5,
            tank_out_coeff: 1.35,
            heat_in_gain: 1.2,
            heat_loss: 1.05,
            heat_coupling: 0.75,
            load_gain: 1.5,
            load_loss: 1.2,
            load_product: 0.45,
        }
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("sampling_time", self.sampling_time),
            ("tank_in_gain", self.tank_in_gain),
            ("tank_flow_coeff", self.tank_flow_coeff),
            ("tank_out_coeff", self.tank_out_coeff),
            ("heat_in_gain", self.heat_in_gain),
            ("heat_loss", self.heat_loss),
            ("heat_coupling", self.heat_coupling),
            ("load_gain", self.load_gain),
            ("load_loss", self.load_loss),
            ("load_product", self.load_product),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlantError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.sampling_time > 0.5 {
            return Err(PlantError::InvalidParameter(
                "sampling_time above 0.5 s makes the Euler scheme unstable".into(),
            ));
        }
        if self.noise_std.iter().any(|s| *s < 0.0) {
            return Err(PlantError::InvalidParameter("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Drain flow of the first tank, the quantity measured by `y3`.
    pub fn flow(&self, x1: f64) -> f64 {
        self.tank_flow_coeff * x1.max(0.0).sqrt()
    }

    /// State derivatives; `leak` is the active leak coefficient (zero when
    /// no leak fault is present).
    pub fn derivatives(&self, x: &[f64; 4], u1: f64, u2: f64, leak: f64) -> [f64; 4] {
        let q1 = self.flow(x[0]);
        let root_x1 = x[0].max(0.0).sqrt();
        let root_x2 = x[1].max(0.0).sqrt();
        [
            self.tank_in_gain * u1 - q1 - leak * root_x1,
            q1 - self.tank_out_coeff * root_x2,
            self.heat_in_gain * u2 - self.heat_loss * x[2] + self.heat_coupling * root_x2,
            self.load_gain * x[2] - self.load_loss * x[3] - self.load_product * x[2] * x[3],
        ]
    }

    /// Analytic fixed point for constant inputs.
    pub fn fixed_point(&self, u1: f64, u2: f64) -> [f64; 4] {
        let q1 = self.tank_in_gain * u1;
        let x1 = (q1 / self.tank_flow_coeff).powi(2);
        let x2 = (q1 / self.tank_out_coeff).powi(2);
        let x3 = (self.heat_in_gain * u2 + self.heat_coupling * x2.sqrt()) / self.heat_loss;
        let x4 = self.load_gain * x3 / (self.load_loss + self.load_product * x3);
        [x1, x2, x3, x4]
    }
}

/// Which fault a scenario injects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Multiplicative fault on sensor 0..=2 (y1, y2, y3): the measured
    /// signal is scaled by (1 + magnitude) from the onset.
    Sensor(usize),
    /// Leak-like disturbance on the first tank: an extra outflow
    /// `magnitude * sqrt(x1)` from the onset.
    Leak,
}

impl FaultKind {
    /// Fault variable name in the reference structural model.
    pub fn fault_name(&self) -> &'static str {
        match self {
            FaultKind::Sensor(0) => "f_y1",
            FaultKind::Sensor(1) => "f_y2",
            FaultKind::Sensor(2) => "f_y3",
            FaultKind::Sensor(_) => panic!("benchmark plant has three sensors"),
            FaultKind::Leak => "f_leak",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FaultScenario {
    pub kind: FaultKind,
    pub magnitude: f64,
    pub onset: usize,
}

/// Actuator series fed to the plant.
#[derive(Debug, Clone)]
pub struct InputSeries {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl InputSeries {
    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }
}

/// Seeded excitation covering the operating range: for each actuator, a
/// sequence of random ramps to new set points followed by holds.
pub fn excitation_profile(len: usize, seed: u64) -> InputSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channel = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        let mut level = rng.gen_range(lo..hi);
        while out.len() < len {
            let target = rng.gen_range(lo..hi);
            let ramp = rng.gen_range(20..100);
            let hold = rng.gen_range(40..200);
            for k in 0..ramp {
                if out.len() == len {
                    break;
                }
                out.push(level + (target - level) * (k + 1) as f64 / ramp as f64);
            }
            level = target;
            for _ in 0..hold {
                if out.len() == len {
                    break;
                }
                out.push(level);
            }
        }
        out
    };
    InputSeries {
        u1: channel(0.3, 0.9, &mut rng),
        u2: channel(0.2, 0.8, &mut rng),
    }
}

/// Simulated dataset: actuators, noisy sensors, and the true states (the
/// latter for analysis only, never written to CSV).
#[derive(Debug, Clone)]
pub struct PlantDataset {
    pub time: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub y3: Vec<f64>,
    pub states: Vec<[f64; 4]>,
}

impl PlantDataset {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn signal(&self, name: &str) -> Option<&[f64]> {
        match name {
            "u1" => Some(&self.u1),
            "u2" => Some(&self.u2),
            "y1" => Some(&self.y1),
            "y2" => Some(&self.y2),
            "y3" => Some(&self.y3),
            _ => None,
        }
    }

    /// CSV with the signal columns named exactly as the structural model's
    /// known variables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,u1,u2,y1,y2,y3\n");
        for t in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.time[t], self.u1[t], self.u2[t], self.y1[t], self.y2[t], self.y3[t]
            ));
        }
        out
    }
}

/// Simulates the plant over the input series; the seed drives only the
/// sensor noise streams.
pub fn simulate_plant(
    spec: &PlantSpec,
    inputs: &InputSeries,
    scenario: Option<&FaultScenario>,
    seed: u64,
) -> Result<PlantDataset, PlantError> {
    spec.validate()?;
    if inputs.u1.len() != inputs.u2.len() {
        return Err(PlantError::LengthMismatch);
    }
    let len = inputs.len();
    if let Some(s) = scenario {
        if s.onset >= len {
            return Err(PlantError::OnsetOutsideHorizon {
                onset: s.onset,
                len,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };

    let mut x = spec.initial_state;
    let mut out = PlantDataset {
        time: Vec::with_capacity(len),
        u1: inputs.u1.clone(),
        u2: inputs.u2.clone(),
        y1: Vec::with_capacity(len),
        y2: Vec::with_capacity(len),
        y3: Vec::with_capacity(len),
        states: Vec::with_capacity(len),
    };
    for t in 0..len {
        let fault_active = scenario.is_some_and(|s| t >= s.onset);
        let leak = match scenario {
            Some(FaultScenario {
                kind: FaultKind::Leak,
                magnitude,
                ..
            }) if fault_active => *magnitude,
            _ => 0.0,
        };
        let sensor_gain = |idx: usize| -> f64 {
            match scenario {
                Some(FaultScenario {
                    kind: FaultKind::Sensor(s),
                    magnitude,
                    ..
                }) if fault_active && *s == idx => 1.0 + magnitude,
                _ => 1.0,
            }
        };
        out.time.push(t as f64 * spec.sampling_time);
        out.states.push(x);
        out.y1.push(sensor_gain(0) * (x[1] + spec.noise_std[0] * gauss()));
        out.y2.push(sensor_gain(1) * (x[3] + spec.noise_std[1] * gauss()));
        out.y3
            .push(sensor_gain(2) * (spec.flow(x[0]) + spec.noise_std[2] * gauss()));

        let dx = spec.derivatives(&x, inputs.u1[t], inputs.u2[t], leak);
        for i in 0..4 {
            x[i] += spec.sampling_time * dx[i];
        }
        // tank levels cannot go negative
        x[0] = x[0].max(0.0);
        x[1] = x[1].max(0.0);
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(PlantError::Unstable { t });
        }
    }
    Ok(out)
}

/// The plant's structural model, with fault annotations and the
/// exactly determined appendix equation `e13`.
pub fn reference_structural_model() -> StructuralModel {
    parse_model(MODEL_TEXT).expect("bundled benchmark model is valid")
}

pub const MODEL_TEXT: &str = "\
# Benchmark plant structural model: two coupled nonlinear subsystems,
# three sensors, four faults, one unmeasured internal variable.
@variables
x1 state
dx1 derivative
x2 state
dx2 derivative
x3 state
dx3 derivative
x4 state
dx4 derivative
q1 unknown
p unknown
u1 known
u2 known
y1 known
y2 known
y3 known
f_y1 fault
f_y2 fault
f_y3 fault
f_leak fault
@equations
e1 : dx1 q1 u1 f_leak
e2 : q1 x1
e3 : dx2 q1 x2
e4 : dx3 x2 x3 u2
e5 : dx4 x3 x4
e6 : x1 dx1
e7 : x2 dx2
e8 : x3 dx3
e9 : x4 dx4
e10 : y1 x2 f_y1
e11 : y2 x4 f_y2
e12 : y3 q1 f_y3
e13 : p x3 x4
@links
x1 dx1 via e6
x2 dx2 via e7
x3 dx3 via e8
x4 dx4 via e9
@faults
f_y1 in e10
f_y2 in e11
f_y3 in e12
f_leak in e1
@sensors
e10 measures y1
e11 measures y2
e12 measures y3
";
