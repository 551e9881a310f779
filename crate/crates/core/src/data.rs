//! Tabular reference datasets and CSV ingestion.

use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::parametric::ParametricSpec;
use crate::rng::RandomStream;
use crate::schema::{Feature, FeatureKind, FeatureSchema};

/// An `n x M` table of complete rows with nonnegative row weights.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    values: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
    sampler: WeightedIndex<f64>,
}

impl Dataset {
    pub fn new(
        schema: Arc<FeatureSchema>,
        rows: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let m = schema.len();
        if rows.is_empty() {
            return Err(Error::Dataset("at least one row is required".into()));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; rows.len()]);
        if weights.len() != rows.len() {
            return Err(Error::Dataset(format!(
                "{} weights for {} rows",
                weights.len(),
                rows.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Dataset(
                "row weights must be finite and nonnegative".into(),
            ));
        }
        let total_weight: f64 = weights.iter().sum();
        if total_weight <= 0.0 {
            return Err(Error::Dataset(
                "row weights must have a positive sum".into(),
            ));
        }
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dataset(format!(
                    "row {i} has {} values, expected {m}",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                schema.check_value(j, *v)?;
            }
            values.extend_from_slice(row);
        }
        let sampler = WeightedIndex::new(&weights)
            .map_err(|e| Error::Dataset(format!("row weights: {e}")))?;
        Ok(Self {
            schema,
            values,
            weights,
            total_weight,
            sampler,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.schema.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.schema.len())
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        self.rows()
            .zip(&self.weights)
            .map(|(r, w)| r[j] * w)
            .sum::<f64>()
            / self.total_weight
    }

    /// Weighted standard deviation of column `j` (population form).
    pub fn column_sd(&self, j: usize) -> f64 {
        let mean = self.column_mean(j);
        let var = self
            .rows()
            .zip(&self.weights)
            .map(|(r, w)| w * (r[j] - mean).powi(2))
            .sum::<f64>()
            / self.total_weight;
        var.sqrt()
    }

    /// Index of a row drawn with probability proportional to its weight.
    pub fn sample_index(&self, stream: &mut RandomStream) -> usize {
        self.sampler.sample(stream)
    }

    /// Weighted resampling with replacement.
    pub fn sample(&self, count: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| self.row(self.sample_index(stream)).to_vec())
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Detect `{0,1}`-valued columns as binary.
    pub infer_schema: bool,
    /// Column holding row weights; excluded from the features.
    pub weight_column: Option<String>,
    /// Declared schema; header names must match it in order.
    pub schema: Option<FeatureSchema>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads a header-first CSV with every non-header cell a plain decimal number.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let weight_col = match &options.weight_column {
        Some(w) => Some(
            header
                .iter()
                .position(|h| h == w)
                .ok_or_else(|| Error::Dataset(format!("weight column `{w}` not in header")))?,
        ),
        None => None,
    };
    let width = header.len();
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| io_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width {
            return Err(Error::RaggedRow(line));
        }
        let mut row = Vec::with_capacity(width);
        let mut weight = 1.0;
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    line,
                    column: c + 1,
                });
            }
            let v: f64 =
                cell.parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or(Error::NonNumericCell {
                        line,
                        column: c + 1,
                    })?;
            if Some(c) == weight_col {
                weight = v;
            } else {
                row.push(v);
            }
        }
        rows.push(row);
        weights.push(weight);
    }
    let names: Vec<&String> = header
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != weight_col)
        .map(|(_, h)| h)
        .collect();
    let schema = match &options.schema {
        Some(schema) => {
            if schema.len() != names.len() || !schema.names().zip(&names).all(|(a, b)| a == *b) {
                return Err(Error::Schema(format!(
                    "CSV header {names:?} does not match declared features {:?}",
                    schema.names().collect::<Vec<_>>()
                )));
            }
            schema.clone()
        }
        None => {
            let features = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let binary = options.infer_schema
                        && !rows.is_empty()
                        && rows.iter().all(|r| r[j] == 0.0 || r[j] == 1.0);
                    Feature {
                        name: name.to_string(),
                        kind: if binary {
                            FeatureKind::Binary
                        } else {
                            FeatureKind::Continuous
                        },
                    }
                })
                .collect();
            FeatureSchema::new(features)?
        }
    };
    Dataset::new(
        Arc::new(schema),
        rows,
        if weight_col.is_some() {
            Some(weights)
        } else {
            None
        },
    )
}

/// Where reference rows come from.
#[derive(Debug, Clone)]
pub enum Source {
    Dataset(Dataset),
    Parametric(ParametricSpec),
}

impl Source {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            Source::Dataset(d) => d.schema(),
            Source::Parametric(p) => p.schema(),
        }
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        match self {
            Source::Dataset(d) => d.schema_arc(),
            Source::Parametric(p) => p.schema_arc(),
        }
    }

    /// `count` i.i.d. full rows.
    pub fn sample(&self, count: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
        match self {
            Source::Dataset(d) => d.sample(count, stream),
            Source::Parametric(p) => p.sample(count, stream),
        }
    }

    pub fn mean(&self, j: usize) -> f64 {
        match self {
            Source::Dataset(d) => d.column_mean(j),
            Source::Parametric(p) => p.law(j).mean(),
        }
    }
}
