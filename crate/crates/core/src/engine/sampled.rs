use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::exact::require_interventional;
use super::report::{AttributionMode, AttributionReport, Estimator};
use super::{check_inputs, monte_carlo_value};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::expr::ModelExpr;
use crate::numeric::{mean_and_se, pairwise_sum};
use crate::refdist::ReferenceDistribution;
use crate::rng::{RandomStream, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Number of sampled feature orderings `P`.
    pub permutations: usize,
    /// Imputed rows per coalition value `R`.
    pub reference_draws: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            permutations: 2000,
            reference_draws: 10,
            seed: 0,
        }
    }
}

/// Walks sampled orderings and averages the per-ordering marginal
/// contributions.
///
/// Ordering `p` and every value estimate along it use streams keyed by
/// `(seed, p)`. All coalitions on one walk share the same imputation stream,
/// which correlates neighbouring estimates and shrinks the variance of their
/// differences. Contributions are reduced with a fixed pairwise tree, so the
/// result does not depend on the number of worker threads.
pub(crate) fn walk_orderings(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    opts: &SampleOptions,
    mode: AttributionMode,
    draw_order: impl Fn(&mut RandomStream) -> Vec<usize> + Sync,
) -> Result<AttributionReport> {
    let m = check_inputs(model, refd, x)?;
    if opts.permutations == 0 {
        return Err(Error::InvalidArgument("permutations must be >= 1".into()));
    }
    if opts.reference_draws == 0 {
        return Err(Error::InvalidArgument(
            "reference draws must be >= 1".into(),
        ));
    }
    let fx = model.eval(x)?;
    let full = Coalition::full(m);
    // per ordering: [v(empty), c_0, ..., c_{M-1}]
    let rows = (0..opts.permutations)
        .into_par_iter()
        .map(|p| {
            let mut order_stream = RandomStream::new(opts.seed, "permutation", p as u64);
            let order = draw_order(&mut order_stream);
            let key = StreamKey::new(opts.seed, "reference", p as u64);
            let value = |s: Coalition| -> Result<f64> {
                if s == full {
                    Ok(fx)
                } else {
                    Ok(monte_carlo_value(model, refd, x, s, opts.reference_draws, key)?.0)
                }
            };
            let mut out = vec![0.0; m + 1];
            let mut s = Coalition::EMPTY;
            let mut prev = value(s)?;
            out[0] = prev;
            for &j in &order {
                s = s.with(j);
                let next = value(s)?;
                out[j + 1] = next - prev;
                prev = next;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[c]).collect() };
    let base = pairwise_sum(&column(0)) / opts.permutations as f64;
    let (phi, se): (Vec<f64>, Vec<f64>) = (1..=m).map(|c| mean_and_se(&column(c))).unzip();
    Ok(AttributionReport {
        mode,
        estimator: Estimator::Sampled {
            permutations: opts.permutations,
            reference_draws: opts.reference_draws,
            seed: opts.seed,
        },
        reference: refd.describe(),
        features: model.schema().names().map(String::from).collect(),
        instance: x.to_vec(),
        prediction: fx,
        base,
        phi,
        standard_errors: Some(se),
    })
}

/// Shapley values estimated from `P` uniformly random feature orderings.
pub fn sampled_shapley(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    opts: &SampleOptions,
) -> Result<AttributionReport> {
    let m = refd.n_features();
    walk_orderings(model, refd, x, opts, AttributionMode::of(refd), |stream| {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(stream);
        order
    })
}

/// Sampled Shapley values with an interventional value function.
pub fn sampled_causal_shapley(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    opts: &SampleOptions,
) -> Result<AttributionReport> {
    require_interventional(refd)?;
    sampled_shapley(model, refd, x, opts)
}
