//! Shapley-value attribution for black-box tabular models.
//!
//! Models are written in a small expression language ([`expr`]), features are
//! imputed from a [`ReferenceDistribution`] (marginal, conditional or
//! interventional), and attributions are computed exactly by coalition
//! enumeration or approximately by permutation sampling ([`engine`]).
//! [`diagnostics`] bundles fairness screens, mode comparisons and property
//! checks on top of the engine.

pub mod coalition;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod expr;
pub mod gaussian;
pub mod graph;
pub mod numeric;
pub mod parametric;
pub mod quadrature;
pub mod refdist;
pub mod rng;
pub mod schema;

pub use coalition::Coalition;
pub use data::{load_csv, CsvOptions, Dataset, Source};
pub use diagnostics::{
    compare_modes, counterfactual_fairness_screen, validate_properties, FairnessOptions,
    FairnessScreenResult, ModeComparisonReport, PropertyOptions, PropertyReport, Verdict,
};
pub use engine::{
    asymmetric_shapley, causal_shapley, coalition_deltas, exact_shapley, sampled_causal_shapley,
    sampled_shapley, value_function, AttributionMode, AttributionReport, Backend, CoalitionDelta,
    DeltaOptions, DeltaReport, Estimator, ExactOptions, SampleOptions, ValueFunctionEstimate,
};
pub use error::{Error, Result};
pub use expr::{parse_model, ModelExpr};
pub use graph::{CausalGraph, GraphSpec};
pub use parametric::{Law, ParametricSpec};
pub use refdist::{ExactConfig, ExactKind, KernelParams, Mode, ReferenceDistribution};
pub use rng::{RandomStream, StreamKey};
pub use schema::{Feature, FeatureKind, FeatureSchema, Instance};
