//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use coalition_attrib::{
    Dataset, FeatureSchema, KernelParams, Law, ParametricSpec, ReferenceDistribution, Source,
};

pub fn names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// Independent standard normals.
pub fn normals(m: usize) -> ReferenceDistribution {
    let schema = Arc::new(FeatureSchema::continuous(&names(m)).unwrap());
    let laws = vec![Law::Normal { mean: 0.0, sd: 1.0 }; m];
    ReferenceDistribution::marginal(Source::Parametric(
        ParametricSpec::independent(schema, laws).unwrap(),
    ))
}

/// Deterministic pseudo-random rows, correlated along the feature index.
pub fn rows(n: usize, m: usize) -> Dataset {
    let schema = Arc::new(FeatureSchema::continuous(&names(m)).unwrap());
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let data = (0..n)
        .map(|_| {
            let mut prev = 0.0;
            (0..m)
                .map(|_| {
                    prev = 0.6 * prev + next();
                    prev
                })
                .collect()
        })
        .collect();
    Dataset::new(schema, data, None).unwrap()
}

pub fn conditional(n: usize, m: usize) -> ReferenceDistribution {
    ReferenceDistribution::conditional_empirical(rows(n, m), KernelParams::default()).unwrap()
}

/// `x1*x2 + x3*x4 + ...` with a trailing linear term.
pub fn pairwise_model(m: usize) -> String {
    let n = names(m);
    let mut terms: Vec<String> = n.chunks(2).map(|c| c.join(" * ")).collect();
    terms.push(format!("0.5 * {}", n[0]));
    terms.join(" + ")
}
