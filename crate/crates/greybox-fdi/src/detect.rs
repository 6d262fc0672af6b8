//! Residual evaluation: debiasing, two-sided CUSUM tests and their tuning,
//! rank-statistic ROC/AUC, fault-magnitude sweeps, and consistency-based
//! diagnosis against a fault signature matrix.

use thiserror::Error;

use crate::dm::FaultSignatureMatrix;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("empty series")]
    EmptySeries,
    #[error("window of {window} samples does not fit a series of {len}")]
    WindowSize { window: usize, len: usize },
    #[error("insufficient nominal data: {len} samples, need at least {need}")]
    InsufficientData { len: usize, need: usize },
    #[error("alarm pattern has {got} entries, signature matrix has {expected} rows")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Subtracts the median of the first `window` samples, assumed fault-free,
/// from the whole series.
pub fn debias(residual: &[f64], window: usize) -> Result<Vec<f64>, DetectError> {
    if residual.is_empty() {
        return Err(DetectError::EmptySeries);
    }
    if window == 0 || window > residual.len() {
        return Err(DetectError::WindowSize {
            window,
            len: residual.len(),
        });
    }
    let m = median(&residual[..window]);
    Ok(residual.iter().map(|r| r - m).collect())
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Side of a CUSUM accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Positive,
    Negative,
}

/// Streaming one-sided CUSUM: `T[t] = max(0, T[t-1] +/- r[t] - drift)`,
/// alarmed against the threshold. Single-owner accumulator, one per residual
/// and direction.
#[derive(Debug, Clone)]
pub struct CusumTest {
    pub drift: f64,
    pub threshold: f64,
    pub direction: Direction,
    state: f64,
    /// First time the statistic exceeded the threshold; latched.
    first_alarm: Option<usize>,
    steps: usize,
}

impl CusumTest {
    pub fn new(drift: f64, threshold: f64, direction: Direction) -> CusumTest {
        CusumTest {
            drift,
            threshold,
            direction,
            state: 0.0,
            first_alarm: None,
            steps: 0,
        }
    }

    /// Feeds one residual sample and returns the updated statistic.
    pub fn update(&mut self, r: f64) -> f64 {
        let signed = match self.direction {
            Direction::Positive => r,
            Direction::Negative => -r,
        };
        self.state = (self.state + signed - self.drift).max(0.0);
        if self.state > self.threshold && self.first_alarm.is_none() {
            self.first_alarm = Some(self.steps);
        }
        self.steps += 1;
        self.state
    }

    pub fn state(&self) -> f64 {
        self.state
    }

    pub fn alarmed(&self) -> bool {
        self.first_alarm.is_some()
    }

    pub fn first_alarm(&self) -> Option<usize> {
        self.first_alarm
    }

    pub fn reset(&mut self) {
        self.state = 0.0;
        self.first_alarm = None;
        self.steps = 0;
    }
}

/// Batch form of the CUSUM recursion; returns the whole statistic trace.
pub fn cusum(residual: &[f64], drift: f64, direction: Direction) -> Vec<f64> {
    let mut test = CusumTest::new(drift, f64::INFINITY, direction);
    residual.iter().map(|&r| test.update(r)).collect()
}

#[derive(Debug, Clone)]
pub struct CusumTuning {
    /// Margin in nominal standard deviations added to the mean absolute
    /// residual when setting the drifts.
    pub margin: f64,
    /// Threshold = max nominal statistic * safety factor.
    pub safety_factor: f64,
    /// The threshold never drops below this multiple of the drift; guards
    /// against a degenerate near-zero threshold when the nominal statistic
    /// never accumulates.
    pub threshold_floor_ratio: f64,
    pub min_drift: f64,
    pub min_threshold: f64,
    pub min_samples: usize,
}

impl Default for CusumTuning {
    fn default() -> Self {
        CusumTuning {
            margin: 3.0,
            safety_factor: 2.0,
            threshold_floor_ratio: 5.0,
            min_drift: 1e-6,
            min_threshold: 1e-6,
            min_samples: 20,
        }
    }
}

/// A tuned two-sided test plus the false-alarm rate achieved on the held-out
/// half of the nominal data.
#[derive(Debug, Clone)]
pub struct TunedCusum {
    pub drift_positive: f64,
    pub drift_negative: f64,
    pub threshold: f64,
    pub achieved_false_alarm_rate: f64,
}

impl TunedCusum {
    pub fn tests(&self) -> (CusumTest, CusumTest) {
        (
            CusumTest::new(self.drift_positive, self.threshold, Direction::Positive),
            CusumTest::new(self.drift_negative, self.threshold, Direction::Negative),
        )
    }

    /// Runs both sides over a residual series; returns the earliest alarm
    /// time, if any.
    pub fn first_alarm(&self, residual: &[f64]) -> Option<usize> {
        let (mut pos, mut neg) = self.tests();
        for &r in residual {
            pos.update(r);
            neg.update(r);
        }
        match (pos.first_alarm(), neg.first_alarm()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Tunes drifts and threshold on the first half of fault-free residuals so
/// the nominal statistic stays below threshold, then reports the false-alarm
/// rate on the held-out second half.
pub fn tune_cusum(nominal: &[f64], tuning: &CusumTuning) -> Result<TunedCusum, DetectError> {
    if nominal.len() < tuning.min_samples.max(4) {
        return Err(DetectError::InsufficientData {
            len: nominal.len(),
            need: tuning.min_samples.max(4),
        });
    }
    let half = nominal.len() / 2;
    let (fit, held_out) = nominal.split_at(half);
    let mean_abs = fit.iter().map(|r| r.abs()).sum::<f64>() / fit.len() as f64;
    let mean = fit.iter().sum::<f64>() / fit.len() as f64;
    let var = fit.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / fit.len() as f64;
    let drift = (mean_abs + tuning.margin * var.sqrt()).max(tuning.min_drift);

    let peak_pos = cusum(fit, drift, Direction::Positive)
        .into_iter()
        .fold(0.0f64, f64::max);
    let peak_neg = cusum(fit, drift, Direction::Negative)
        .into_iter()
        .fold(0.0f64, f64::max);
    let threshold = (peak_pos.max(peak_neg) * tuning.safety_factor)
        .max(drift * tuning.threshold_floor_ratio)
        .max(tuning.min_threshold);

    let tuned = TunedCusum {
        drift_positive: drift,
        drift_negative: drift,
        threshold,
        achieved_false_alarm_rate: 0.0,
    };
    let (mut pos, mut neg) = tuned.tests();
    let mut alarms = 0usize;
    for &r in held_out {
        if pos.update(r) > threshold || neg.update(r) > threshold {
            alarms += 1;
        }
    }
    Ok(TunedCusum {
        achieved_false_alarm_rate: alarms as f64 / held_out.len().max(1) as f64,
        ..tuned
    })
}

/// AUC of both one-sided threshold tests, computed from the rank-sum
/// statistic with half-credit for ties, plus the normalized scores
/// `2 * (AUC - 0.5)`.
#[derive(Debug, Clone, Copy)]
pub struct RocResult {
    /// Test `r > J`.
    pub auc_positive: f64,
    /// Mirrored test `-r > J`.
    pub auc_negative: f64,
    pub normalized_positive: f64,
    pub normalized_negative: f64,
}

impl RocResult {
    /// Larger of the two one-sided normalized scores.
    pub fn best_normalized(&self) -> f64 {
        self.normalized_positive.max(self.normalized_negative)
    }
}

/// Probability that a faulty sample ranks above a nominal one under the test
/// `r > J` (and the mirrored test), via the Mann-Whitney statistic.
pub fn roc_auc(nominal: &[f64], faulty: &[f64]) -> Result<RocResult, DetectError> {
    if nominal.is_empty() || faulty.is_empty() {
        return Err(DetectError::EmptySeries);
    }
    let mut pooled: Vec<(f64, bool)> = nominal
        .iter()
        .map(|&v| (v, false))
        .chain(faulty.iter().map(|&v| (v, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite residuals"));

    // rank sum of the faulty sample, ties sharing the average rank
    let n = pooled.len();
    let mut rank_sum_faulty = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for item in &pooled[i..=j] {
            if item.1 {
                rank_sum_faulty += avg_rank;
            }
        }
        i = j + 1;
    }
    let nf = faulty.len() as f64;
    let nn = nominal.len() as f64;
    let u = rank_sum_faulty - nf * (nf + 1.0) / 2.0;
    let auc_positive = u / (nf * nn);
    let auc_negative = 1.0 - auc_positive;
    Ok(RocResult {
        auc_positive,
        auc_negative,
        normalized_positive: 2.0 * (auc_positive - 0.5),
        normalized_negative: 2.0 * (auc_negative - 0.5),
    })
}

/// One row of a fault-magnitude sweep.
#[derive(Debug, Clone, Copy)]
pub struct MagnitudeAuc {
    pub magnitude: f64,
    pub roc: RocResult,
}

/// Default sweep grid: 21 points over [-20%, +20%].
pub fn default_magnitude_grid() -> Vec<f64> {
    (0..21).map(|i| -0.20 + i as f64 * 0.02).collect()
}

/// Sweeps fault magnitudes, obtaining (nominal, faulty) residual samples
/// from the supplied generator for each magnitude.
pub fn auc_vs_magnitude<F, E>(
    magnitudes: &[f64],
    mut residuals_for: F,
) -> Result<Vec<MagnitudeAuc>, E>
where
    F: FnMut(f64) -> Result<(Vec<f64>, Vec<f64>), E>,
    E: From<DetectError>,
{
    magnitudes
        .iter()
        .map(|&magnitude| {
            let (nominal, faulty) = residuals_for(magnitude)?;
            let roc = roc_auc(&nominal, &faulty)?;
            Ok(MagnitudeAuc { magnitude, roc })
        })
        .collect()
}

/// One ranked diagnosis candidate: a fault whose signature column covers
/// every triggered residual.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultHypothesis {
    /// Column index into the signature matrix; `None` is the no-fault
    /// hypothesis.
    pub fault: Option<usize>,
    /// Residuals sensitive to this fault that did not trigger.
    pub unexplained_silent: usize,
    /// Total sensitivity count of the column.
    pub column_weight: usize,
}

/// Consistency-based diagnosis: candidates are faults whose signature column
/// covers all triggered residuals, ranked by how few sensitive residuals
/// stayed silent, then by column weight, then by fault index. An empty
/// pattern yields the no-fault hypothesis.
pub fn diagnose(
    pattern: &[bool],
    sig: &FaultSignatureMatrix,
) -> Result<Vec<FaultHypothesis>, DetectError> {
    if pattern.len() != sig.rows.len() {
        return Err(DetectError::DimensionMismatch {
            expected: sig.rows.len(),
            got: pattern.len(),
        });
    }
    if pattern.iter().all(|&p| !p) {
        return Ok(vec![FaultHypothesis {
            fault: None,
            unexplained_silent: 0,
            column_weight: 0,
        }]);
    }
    let mut candidates: Vec<FaultHypothesis> = (0..sig.fault_names.len())
        .filter_map(|j| {
            let column: Vec<bool> = (0..sig.rows.len()).map(|i| sig.entries[i][j]).collect();
            let covers = pattern
                .iter()
                .zip(&column)
                .all(|(&fired, &sensitive)| !fired || sensitive);
            if !covers {
                return None;
            }
            let unexplained_silent = pattern
                .iter()
                .zip(&column)
                .filter(|&(&fired, &sensitive)| sensitive && !fired)
                .count();
            Some(FaultHypothesis {
                fault: Some(j),
                unexplained_silent,
                column_weight: column.iter().filter(|&&b| b).count(),
            })
        })
        .collect();
    candidates.sort_by_key(|c| (c.unexplained_silent, c.column_weight, c.fault));
    Ok(candidates)
}
