//! Value functions and Shapley attributions.
//!
//! `v(S) = E[f(x_S, X_{S-bar})]` with `X_{S-bar}` drawn from a
//! [`ReferenceDistribution`]. Attributions combine `v` over coalitions, either
//! exhaustively ([`exact_shapley`]) or along sampled feature orderings
//! ([`sampled_shapley`]). Orderings can be restricted to the linear extensions
//! of a causal DAG ([`asymmetric_shapley`]).

mod deltas;
mod exact;
mod ordering;
mod report;
mod sampled;

use serde::Serialize;

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::expr::ModelExpr;
use crate::numeric::mean_and_se;
use crate::refdist::{ExactConfig, ExactKind, ReferenceDistribution};
use crate::rng::{RandomStream, StreamKey};

pub use deltas::{coalition_deltas, CoalitionDelta, DeltaOptions, DeltaReport};
pub use exact::{
    causal_shapley, combine_by_cardinality, combine_weighted, exact_shapley, shapley_weight,
    ValueTable, MAX_EXACT_FEATURES,
};
pub use ordering::{asymmetric_shapley, LinearExtensions, MAX_EXTENSION_FEATURES};
pub use report::{AttributionMode, AttributionReport, Estimator};
pub use sampled::{sampled_causal_shapley, sampled_shapley, SampleOptions};

/// How a single value `v(S)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Quadrature for parametric sources, weighted row enumeration for datasets.
    Exact(ExactConfig),
    /// Average over `draws` imputed rows from the stream `(seed, "coalition", S)`.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Exact(ExactConfig::default())
    }
}

/// Settings for exhaustive enumeration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExactOptions {
    pub config: ExactConfig,
    /// Lift the feature-count caps on enumeration.
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValueBackend {
    Quadrature,
    Enumeration,
    MonteCarlo {
        count: usize,
        stream: StreamKey,
    },
    /// `S` is the full set, so `v(S) = f(x)` with nothing to integrate.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueFunctionEstimate {
    pub coalition: Coalition,
    pub value: f64,
    pub backend: ValueBackend,
    /// Present for Monte Carlo estimates only.
    pub standard_error: Option<f64>,
}

/// Checks that the model and reference agree on the feature schema and that
/// the instance is complete.
pub(crate) fn check_inputs(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
) -> Result<usize> {
    let schema = refd.source().schema();
    if model.schema() != schema {
        let a: Vec<&str> = model.schema().names().collect();
        let b: Vec<&str> = schema.names().collect();
        return Err(Error::Schema(format!(
            "model features {a:?} differ from reference features {b:?}"
        )));
    }
    let m = schema.len();
    if x.len() < m {
        return Err(Error::MissingFeature(schema.name(x.len()).to_string()));
    }
    if x.len() > m {
        return Err(Error::InvalidArgument(format!(
            "instance has {} values for {m} features",
            x.len()
        )));
    }
    for (j, &v) in x.iter().enumerate() {
        schema.check_value(j, v)?;
    }
    Ok(m)
}

pub(crate) fn monte_carlo_value(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    s: Coalition,
    draws: usize,
    key: StreamKey,
) -> Result<(f64, f64)> {
    if draws == 0 {
        return Err(Error::InvalidArgument(
            "reference draws must be >= 1".into(),
        ));
    }
    let mut stream = RandomStream::from_key(key);
    let rows = refd.impute(s, x, draws, &mut stream)?;
    let ys = rows
        .iter()
        .map(|r| model.eval(r))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_se(&ys))
}

/// `v(S)` at instance `x`.
pub fn value_function(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    s: Coalition,
    backend: &Backend,
) -> Result<ValueFunctionEstimate> {
    let m = check_inputs(model, refd, x)?;
    if !s.is_subset_of(Coalition::full(m)) {
        return Err(Error::InvalidArgument(format!(
            "coalition {s} exceeds {m} features"
        )));
    }
    if s == Coalition::full(m) {
        return Ok(ValueFunctionEstimate {
            coalition: s,
            value: model.eval(x)?,
            backend: ValueBackend::Direct,
            standard_error: match backend {
                Backend::Exact(_) => None,
                Backend::MonteCarlo { .. } => Some(0.0),
            },
        });
    }
    match *backend {
        Backend::Exact(cfg) => {
            let (value, kind) = refd.expectation(model, s, x, &cfg)?;
            Ok(ValueFunctionEstimate {
                coalition: s,
                value,
                backend: match kind {
                    ExactKind::Quadrature => ValueBackend::Quadrature,
                    ExactKind::Enumeration => ValueBackend::Enumeration,
                },
                standard_error: None,
            })
        }
        Backend::MonteCarlo { draws, seed } => {
            let key = StreamKey::new(seed, "coalition", s.bits());
            let (value, se) = monte_carlo_value(model, refd, x, s, draws, key)?;
            Ok(ValueFunctionEstimate {
                coalition: s,
                value,
                backend: ValueBackend::MonteCarlo {
                    count: draws,
                    stream: key,
                },
                standard_error: Some(se),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;
    use crate::expr::parse_model;
    use crate::parametric::{Law, ParametricSpec};
    use crate::schema::FeatureSchema;
    use std::sync::Arc;

    fn normal_ref() -> ReferenceDistribution {
        let s = Arc::new(FeatureSchema::continuous(&["x1", "x2"]).unwrap());
        let law = Law::Normal { mean: 1.0, sd: 1.0 };
        ReferenceDistribution::marginal(Source::Parametric(
            ParametricSpec::independent(s, vec![law, law]).unwrap(),
        ))
    }

    #[test]
    fn piecewise_value_at_kept_second_feature() {
        let r = normal_ref();
        let m = parse_model(
            "indicator(x1 > 1) * 3 * x2 - indicator(x1 <= 1) * x2",
            r.source().schema_arc(),
        )
        .unwrap();
        let v = value_function(
            &m,
            &r,
            &[0.5, 0.5],
            Coalition::from_indices([1]),
            &Backend::default(),
        )
        .unwrap();
        assert!((v.value - 0.5).abs() < 1e-12, "{}", v.value);
        assert_eq!(v.backend, ValueBackend::Quadrature);
        let full =
            value_function(&m, &r, &[0.5, 0.5], Coalition::full(2), &Backend::default()).unwrap();
        assert_eq!(full.value, -0.5);
    }

    #[test]
    fn monte_carlo_reports_error() {
        let r = normal_ref();
        let m = parse_model("x1 + x2", r.source().schema_arc()).unwrap();
        let v = value_function(
            &m,
            &r,
            &[0.0, 0.0],
            Coalition::EMPTY,
            &Backend::MonteCarlo {
                draws: 20_000,
                seed: 3,
            },
        )
        .unwrap();
        let se = v.standard_error.unwrap();
        assert!(se > 0.0);
        assert!((v.value - 2.0).abs() < 4.0 * se);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let r = normal_ref();
        let other = Arc::new(FeatureSchema::continuous(&["a", "b"]).unwrap());
        let m = parse_model("a", &other).unwrap();
        assert!(matches!(
            value_function(&m, &r, &[0.0, 0.0], Coalition::EMPTY, &Backend::default()),
            Err(Error::Schema(_))
        ));
    }
}
