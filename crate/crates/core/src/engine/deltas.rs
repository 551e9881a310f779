use serde::Serialize;

use super::exact::{shapley_weight, ValueTable, MAX_EXACT_FEATURES};
use super::{check_inputs, Backend};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::expr::ModelExpr;
use crate::numeric::CompensatedSum;
use crate::refdist::ReferenceDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoalitionDelta {
    pub coalition: Coalition,
    pub feature: usize,
    /// `v(S + j) - v(S)`.
    pub delta: f64,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaOptions {
    /// Cancellation threshold on `max |delta|`; `0.05 * max |v(S)|` when unset.
    pub tau: Option<f64>,
    /// `|phi_j|` at or below this counts as zero.
    pub zero_tolerance: f64,
    pub force: bool,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        Self {
            tau: None,
            zero_tolerance: 1e-6,
            force: false,
        }
    }
}

/// All coalition deltas of one feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub feature: String,
    pub feature_index: usize,
    pub features: Vec<String>,
    pub phi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_standard_error: Option<f64>,
    pub tau: f64,
    pub max_abs_delta: f64,
    /// `phi_j` is indistinguishable from zero while some delta exceeds `tau`.
    pub cancellation: bool,
    pub deltas: Vec<CoalitionDelta>,
}

impl DeltaReport {
    pub fn delta(&self, s: Coalition) -> Option<f64> {
        self.deltas
            .iter()
            .find(|d| d.coalition == s)
            .map(|d| d.delta)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["coalition", "feature", "delta", "weight", "se"])
            .map_err(err)?;
        for d in &self.deltas {
            let names: Vec<&str> = d
                .coalition
                .members()
                .map(|i| self.features[i].as_str())
                .collect();
            w.write_record([
                names.join(" "),
                self.feature.clone(),
                d.delta.to_string(),
                d.weight.to_string(),
                d.standard_error.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// The `2^(M-1)` coalition deltas of feature `j` with their Shapley weights.
pub fn coalition_deltas(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    j: usize,
    backend: &Backend,
    opts: &DeltaOptions,
) -> Result<DeltaReport> {
    let m = check_inputs(model, refd, x)?;
    if j >= m {
        return Err(Error::InvalidArgument(format!(
            "feature index {j} out of range"
        )));
    }
    if m > MAX_EXACT_FEATURES && !opts.force {
        return Err(Error::TooManyFeatures {
            what: "coalition deltas",
            features: m,
            limit: MAX_EXACT_FEATURES,
        });
    }
    if let Some(t) = opts.tau {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {t}")));
        }
    }
    let table = ValueTable::compute(model, refd, x, backend, None)?;
    let mut deltas = Vec::with_capacity(1 << (m - 1));
    let mut phi = CompensatedSum::default();
    let mut var = 0.0;
    for bits in 0..(1u64 << m) {
        let s = Coalition::from_bits(bits);
        if s.contains(j) {
            continue;
        }
        let weight = shapley_weight(m, s.len());
        let delta = table.value(s.with(j)) - table.value(s);
        let se = table
            .standard_error(s)
            .zip(table.standard_error(s.with(j)))
            .map(|(a, b)| a.hypot(b));
        if let Some(se) = se {
            var += (weight * se).powi(2);
        }
        phi.add(weight * delta);
        deltas.push(CoalitionDelta {
            coalition: s,
            feature: j,
            delta,
            weight,
            standard_error: se,
        });
    }
    let phi = phi.value();
    let phi_se = table.standard_error(Coalition::EMPTY).map(|_| var.sqrt());
    let tau = opts.tau.unwrap_or(0.05 * table.max_abs());
    let max_abs_delta = deltas.iter().fold(0.0f64, |a, d| a.max(d.delta.abs()));
    let zero = opts.zero_tolerance.max(4.0 * phi_se.unwrap_or(0.0));
    Ok(DeltaReport {
        feature: model.schema().name(j).to_string(),
        feature_index: j,
        features: model.schema().names().map(String::from).collect(),
        phi,
        phi_standard_error: phi_se,
        tau,
        max_abs_delta,
        cancellation: phi.abs() <= zero && max_abs_delta > tau,
        deltas,
    })
}
