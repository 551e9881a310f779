use rayon::prelude::*;

use super::report::{AttributionMode, AttributionReport, Estimator};
use super::{check_inputs, value_function, Backend, ExactOptions};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::expr::ModelExpr;
use crate::numeric::CompensatedSum;
use crate::refdist::{ExactKind, Mode, ReferenceDistribution};

/// Largest `M` enumerated without `force`.
pub const MAX_EXACT_FEATURES: usize = 25;
const FORCED_EXACT_FEATURES: usize = 32;

/// `|S|! (M - |S| - 1)! / M!`.
pub fn shapley_weight(m: usize, s: usize) -> f64 {
    assert!(s < m, "coalition size {s} must be below {m}");
    // 1 / (M * C(M-1, s)), with C built as a running product
    let k = s.min(m - 1 - s);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (m - 1 - i) as f64 / (i + 1) as f64;
    }
    1.0 / (m as f64 * c.round())
}

/// `v(S)` for a set of coalitions, indexed by bitmask.
#[derive(Debug, Clone)]
pub struct ValueTable {
    m: usize,
    values: Vec<f64>,
    errors: Option<Vec<f64>>,
    kind: ExactKind,
}

impl ValueTable {
    /// Evaluates `v` on every coalition in `needed` (all `2^M` when `None`).
    pub fn compute(
        model: &ModelExpr,
        refd: &ReferenceDistribution,
        x: &[f64],
        backend: &Backend,
        needed: Option<&[Coalition]>,
    ) -> Result<Self> {
        let m = check_inputs(model, refd, x)?;
        if m > FORCED_EXACT_FEATURES {
            return Err(Error::TooManyFeatures {
                what: "coalition table",
                features: m,
                limit: FORCED_EXACT_FEATURES,
            });
        }
        let n = 1usize << m;
        let masks: Vec<Coalition> = match needed {
            Some(list) => list.to_vec(),
            None => (0..n as u64).map(Coalition::from_bits).collect(),
        };
        let estimates = masks
            .par_iter()
            .map(|&s| value_function(model, refd, x, s, backend))
            .collect::<Result<Vec<_>>>()?;
        let mut values = vec![f64::NAN; n];
        let mut errors = match backend {
            Backend::Exact(_) => None,
            Backend::MonteCarlo { .. } => Some(vec![f64::NAN; n]),
        };
        for e in &estimates {
            values[e.coalition.index()] = e.value;
            if let Some(errs) = errors.as_mut() {
                errs[e.coalition.index()] = e.standard_error.unwrap_or(0.0);
            }
        }
        let kind = match refd.source() {
            crate::data::Source::Dataset(_) => ExactKind::Enumeration,
            crate::data::Source::Parametric(_) => ExactKind::Quadrature,
        };
        Ok(Self {
            m,
            values,
            errors,
            kind,
        })
    }

    pub fn n_features(&self) -> usize {
        self.m
    }

    pub fn value(&self, s: Coalition) -> f64 {
        self.values[s.index()]
    }

    /// Monte Carlo standard error of `v(S)`, if the table was sampled.
    pub fn standard_error(&self, s: Coalition) -> Option<f64> {
        self.errors.as_ref().map(|e| e[s.index()])
    }

    pub fn kind(&self) -> ExactKind {
        self.kind
    }

    /// Largest `|v(S)|` over the computed coalitions.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `phi_j = sum_{S not containing j} w(|S|) (v(S + j) - v(S))`.
pub fn combine_weighted(table: &ValueTable) -> Vec<f64> {
    let m = table.m;
    let weights: Vec<f64> = (0..m).map(|s| shapley_weight(m, s)).collect();
    (0..m)
        .map(|j| {
            let mut acc = CompensatedSum::default();
            for bits in 0..(1u64 << m) {
                let s = Coalition::from_bits(bits);
                if s.contains(j) {
                    continue;
                }
                acc.add(weights[s.len()] * (table.value(s.with(j)) - table.value(s)));
            }
            acc.value()
        })
        .collect()
}

/// Same quantity as [`combine_weighted`], organized as: draw `|S|` uniformly
/// from `0..M`, then `S` uniformly among subsets of that size.
pub fn combine_by_cardinality(table: &ValueTable) -> Vec<f64> {
    let m = table.m;
    (0..m)
        .map(|j| {
            let mut by_size = vec![CompensatedSum::default(); m];
            let mut counts = vec![0u64; m];
            for bits in 0..(1u64 << m) {
                let s = Coalition::from_bits(bits);
                if s.contains(j) {
                    continue;
                }
                by_size[s.len()].add(table.value(s.with(j)) - table.value(s));
                counts[s.len()] += 1;
            }
            let mut acc = CompensatedSum::default();
            for k in 0..m {
                acc.add(by_size[k].value() / counts[k] as f64);
            }
            acc.value() / m as f64
        })
        .collect()
}

fn check_size(m: usize, force: bool) -> Result<()> {
    if m > MAX_EXACT_FEATURES && !force {
        return Err(Error::TooManyFeatures {
            what: "exact enumeration (use sampled Shapley or force)",
            features: m,
            limit: MAX_EXACT_FEATURES,
        });
    }
    Ok(())
}

pub(crate) fn report_from_table(
    refd: &ReferenceDistribution,
    model: &ModelExpr,
    x: &[f64],
    table: &ValueTable,
    phi: Vec<f64>,
    mode: AttributionMode,
    opts: &ExactOptions,
) -> AttributionReport {
    let m = table.n_features();
    AttributionReport {
        mode,
        estimator: Estimator::Exact {
            backend: table.kind(),
            quadrature_order: opts.config.quadrature_order,
        },
        reference: refd.describe(),
        features: model.schema().names().map(String::from).collect(),
        instance: x.to_vec(),
        prediction: table.value(Coalition::full(m)),
        base: table.value(Coalition::EMPTY),
        phi,
        standard_errors: None,
    }
}

/// Exact Shapley values by enumerating all `2^M` coalitions.
pub fn exact_shapley(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    opts: &ExactOptions,
) -> Result<AttributionReport> {
    let m = check_inputs(model, refd, x)?;
    check_size(m, opts.force)?;
    let table = ValueTable::compute(model, refd, x, &Backend::Exact(opts.config), None)?;
    let phi = combine_weighted(&table);
    Ok(report_from_table(
        refd,
        model,
        x,
        &table,
        phi,
        AttributionMode::of(refd),
        opts,
    ))
}

/// Symmetric Shapley values with an interventional value function.
pub fn causal_shapley(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    opts: &ExactOptions,
) -> Result<AttributionReport> {
    require_interventional(refd)?;
    exact_shapley(model, refd, x, opts)
}

pub(crate) fn require_interventional(refd: &ReferenceDistribution) -> Result<()> {
    if refd.mode() != Mode::InterventionalDag {
        return Err(Error::Reference(
            "causal Shapley needs an interventional DAG reference".into(),
        ));
    }
    Ok(())
}
