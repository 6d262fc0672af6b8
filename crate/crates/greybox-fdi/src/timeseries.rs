//! Time-series handling: CSV reading with header-matched columns, integer
//! downsampling, and per-signal affine normalization whose parameters are
//! persisted so evaluation data reuses exactly the training-data transform.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row} has {got} fields, header has {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("row {row}, column `{column}`: bad number `{value}`")]
    BadNumber { row: usize, column: String, value: String },
    #[error("empty table")]
    Empty,
    #[error("downsampling factor must be at least 1")]
    BadFactor,
    #[error("normalization parameters: {0}")]
    BadParams(String),
}

/// Named, aligned signal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl SignalTable {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Columns in the given order; an absent name is an error.
    pub fn select(&self, names: &[String]) -> Result<Vec<Vec<f64>>, TimeseriesError> {
        names
            .iter()
            .map(|n| {
                self.column(n)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| TimeseriesError::MissingColumn(n.clone()))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for row in 0..self.len() {
            let mut first = true;
            for col in &self.columns {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{}", col[row]);
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

/// How a downsampling block is reduced to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownsampleMode {
    /// Keep the first sample of each block.
    Stride,
    /// Average each block.
    Mean,
}

/// Reduces the rate by an integer factor; the output length is
/// `floor(n / factor)` and a trailing partial block is dropped.
pub fn downsample(
    table: &SignalTable,
    factor: usize,
    mode: DownsampleMode,
) -> Result<SignalTable, TimeseriesError> {
    if factor == 0 {
        return Err(TimeseriesError::BadFactor);
    }
    let blocks = table.len() / factor;
    let columns = table
        .columns
        .iter()
        .map(|col| {
            (0..blocks)
                .map(|b| match mode {
                    DownsampleMode::Stride => col[b * factor],
                    DownsampleMode::Mean => {
                        col[b * factor..(b + 1) * factor].iter().sum::<f64>() / factor as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(SignalTable {
        names: table.names.clone(),
        columns,
    })
}

/// Parses a CSV file with a header row into named columns.
pub fn read_timeseries(path: &Path) -> Result<SignalTable, TimeseriesError> {
    let text = std::fs::read_to_string(path)?;
    read_timeseries_str(&text)
}

pub fn read_timeseries_str(text: &str) -> Result<SignalTable, TimeseriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(TimeseriesError::Empty);
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(TimeseriesError::RaggedRow {
                row: idx + 2,
                expected: names.len(),
                got: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| TimeseriesError::BadNumber {
                row: idx + 2,
                column: names[c].clone(),
                value: field.to_string(),
            })?;
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(TimeseriesError::Empty);
    }
    Ok(SignalTable { names, columns })
}

/// Per-signal affine transform `scaled = (x - offset) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalScaler {
    pub offset: f64,
    pub scale: f64,
    /// Set when the training signal had zero spread; the scale falls back
    /// to one.
    pub degenerate: bool,
}

/// Normalization scheme fitted on training data only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationKind {
    /// Map the training min/max to [0, 1].
    MinMax,
    /// Zero mean, unit variance.
    ZScore,
}

/// Named per-signal scalers, persisted alongside trained generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub kind: NormalizationKind,
    pub scalers: BTreeMap<String, SignalScaler>,
}

impl Normalization {
    /// Fits scalers from the given columns.
    pub fn fit(kind: NormalizationKind, names: &[String], columns: &[Vec<f64>]) -> Normalization {
        let scalers = names
            .iter()
            .zip(columns)
            .map(|(name, col)| {
                let scaler = match kind {
                    NormalizationKind::MinMax => {
                        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        if max - min > 0.0 {
                            SignalScaler {
                                offset: min,
                                scale: max - min,
                                degenerate: false,
                            }
                        } else {
                            SignalScaler {
                                offset: min,
                                scale: 1.0,
                                degenerate: true,
                            }
                        }
                    }
                    NormalizationKind::ZScore => {
                        let mean = col.iter().sum::<f64>() / col.len() as f64;
                        let var =
                            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
                        let std = var.sqrt();
                        if std > 0.0 {
                            SignalScaler {
                                offset: mean,
                                scale: std,
                                degenerate: false,
                            }
                        } else {
                            SignalScaler {
                                offset: mean,
                                scale: 1.0,
                                degenerate: true,
                            }
                        }
                    }
                };
                (name.clone(), scaler)
            })
            .collect();
        Normalization { kind, scalers }
    }

    pub fn scaler(&self, name: &str) -> Result<&SignalScaler, TimeseriesError> {
        self.scalers
            .get(name)
            .ok_or_else(|| TimeseriesError::MissingColumn(name.to_string()))
    }

    pub fn normalize(&self, name: &str, values: &[f64]) -> Result<Vec<f64>, TimeseriesError> {
        let s = self.scaler(name)?;
        Ok(values.iter().map(|v| (v - s.offset) / s.scale).collect())
    }

    pub fn denormalize(&self, name: &str, values: &[f64]) -> Result<Vec<f64>, TimeseriesError> {
        let s = self.scaler(name)?;
        Ok(values.iter().map(|v| v * s.scale + s.offset).collect())
    }

    /// Scale factor needed to map residuals of a signal into normalized
    /// units.
    pub fn residual_scale(&self, name: &str) -> Result<f64, TimeseriesError> {
        Ok(self.scaler(name)?.scale)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("normalization v1\n");
        let _ = writeln!(
            out,
            "kind = {}",
            match self.kind {
                NormalizationKind::MinMax => "minmax",
                NormalizationKind::ZScore => "zscore",
            }
        );
        for (name, s) in &self.scalers {
            let _ = writeln!(
                out,
                "signal {} = {} {} {}",
                name,
                s.offset,
                s.scale,
                if s.degenerate { 1 } else { 0 }
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Normalization, TimeseriesError> {
        let bad = |m: &str| TimeseriesError::BadParams(m.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("normalization v1") {
            return Err(bad("missing header"));
        }
        let mut kind = None;
        let mut scalers = BTreeMap::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad("malformed line"))?;
            let tokens: Vec<&str> = key.split_whitespace().collect();
            match tokens.as_slice() {
                ["kind"] => {
                    kind = Some(match value.trim() {
                        "minmax" => NormalizationKind::MinMax,
                        "zscore" => NormalizationKind::ZScore,
                        other => return Err(bad(&format!("unknown kind `{other}`"))),
                    })
                }
                ["signal", name] => {
                    let fields: Vec<&str> = value.split_whitespace().collect();
                    if fields.len() != 3 {
                        return Err(bad("signal line needs offset, scale, degenerate"));
                    }
                    let offset = fields[0].parse().map_err(|_| bad("offset"))?;
                    let scale = fields[1].parse().map_err(|_| bad("scale"))?;
                    let degenerate = fields[2] == "1";
                    scalers.insert(
                        name.to_string(),
                        SignalScaler {
                            offset,
                            scale,
                            degenerate,
                        },
                    );
                }
                _ => return Err(bad("unknown line")),
            }
        }
        Ok(Normalization {
            kind: kind.ok_or_else(|| bad("missing kind"))?,
            scalers,
        })
    }
}
