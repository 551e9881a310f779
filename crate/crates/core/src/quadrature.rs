//! Gaussian quadrature rules for the parametric laws.
//!
//! Nodes come from the Golub-Welsch eigenproblem, are polished by Newton steps
//! on the orthonormal recurrence, and weighted by the Christoffel function.
//! Every rule here is normalized to a probability measure (weights sum to 1).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::parametric::{Law, ParametricSpec};

/// Order used on Normal pieces split at indicator thresholds.
pub const DENSE_ORDER: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Family {
    /// Uniform probability measure on [-1, 1].
    Legendre,
    /// Standard normal measure.
    Hermite,
}

impl Family {
    fn beta(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Family::Legendre => (n * n / (4.0 * n * n - 1.0)).sqrt(),
            Family::Hermite => n.sqrt(),
        }
    }
}

// Orthonormal q_k(x), q_k'(x) and sum_{n<k} q_n(x)^2.
fn recurrence(family: Family, k: usize, x: f64) -> (f64, f64, f64) {
    let (mut q_prev, mut q) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    let mut sum_sq = 0.0;
    for n in 0..k {
        sum_sq += q * q;
        let b_next = family.beta(n + 1);
        let b_n = if n == 0 { 0.0 } else { family.beta(n) };
        let q_next = (x * q - b_n * q_prev) / b_next;
        let d_next = (q + x * d - b_n * d_prev) / b_next;
        q_prev = q;
        q = q_next;
        d_prev = d;
        d = d_next;
    }
    (q, d, sum_sq)
}

fn compute(family: Family, k: usize) -> Rule {
    if k == 1 {
        return Rule {
            nodes: vec![0.0],
            weights: vec![1.0],
        };
    }
    let mut jacobi = DMatrix::<f64>::zeros(k, k);
    for n in 1..k {
        let b = family.beta(n);
        jacobi[(n - 1, n)] = b;
        jacobi[(n, n - 1)] = b;
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (q, d, _) = recurrence(family, k, *x);
            if d != 0.0 {
                *x -= q / d;
            }
        }
    }
    // both measures are symmetric about 0
    for i in 0..k / 2 {
        let m = 0.5 * (nodes[k - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[k - 1 - i] = m;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| 1.0 / recurrence(family, k, x).2)
        .collect();
    for i in 0..k / 2 {
        let w = 0.5 * (weights[i] + weights[k - 1 - i]);
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Rule { nodes, weights }
}

fn cached(family: Family, k: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(Family, usize), Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("rule cache poisoned").get(&(family, k)) {
        return r.clone();
    }
    let rule = Arc::new(compute(family, k));
    cache
        .lock()
        .expect("rule cache poisoned")
        .entry((family, k))
        .or_insert(rule)
        .clone()
}

/// `k`-point Gauss-Legendre rule for the uniform law on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> Arc<Rule> {
    cached(Family::Legendre, k.max(1))
}

/// `k`-point Gauss-Hermite rule for the standard normal law.
pub fn gauss_hermite(k: usize) -> Arc<Rule> {
    cached(Family::Hermite, k.max(1))
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_quantile(u: f64) -> f64 {
    Normal::standard().inverse_cdf(u)
}

fn interior_breaks(breaks: &[f64], low: f64, high: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|c| *c > low && *c < high)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// Rule for one law, split at `breaks` so that integrands which are piecewise
/// smooth between the breaks are integrated piece by piece.
///
/// Bernoulli laws are enumerated exactly. Normal laws without breaks use
/// Gauss-Hermite; with breaks, each piece is integrated in probability space
/// `u = Phi((x - mean) / sd)` with a Gauss-Legendre rule of at least
/// [`DENSE_ORDER`] points, exact for integrands constant on each piece.
pub fn law_rule(law: &Law, order: usize, breaks: &[f64]) -> Vec<(f64, f64)> {
    match *law {
        Law::Bernoulli { p } => [(0.0, 1.0 - p), (1.0, p)]
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .collect(),
        Law::Uniform { low, high } => {
            let rule = gauss_legendre(order);
            let mut edges = vec![low];
            edges.extend(interior_breaks(breaks, low, high));
            edges.push(high);
            let mut out = Vec::with_capacity(rule.len() * (edges.len() - 1));
            for piece in edges.windows(2) {
                let (a, b) = (piece[0], piece[1]);
                let mass = (b - a) / (high - low);
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                out.extend(rule.pairs().map(|(t, w)| (mid + half * t, mass * w)));
            }
            out
        }
        Law::Normal { mean, sd } => {
            let cuts = interior_breaks(breaks, f64::NEG_INFINITY, f64::INFINITY);
            if cuts.is_empty() {
                let rule = gauss_hermite(order);
                return rule.pairs().map(|(t, w)| (mean + sd * t, w)).collect();
            }
            let rule = gauss_legendre(order.max(DENSE_ORDER));
            let mut edges = vec![0.0];
            edges.extend(cuts.iter().map(|c| normal_cdf((c - mean) / sd)));
            edges.push(1.0);
            let mut out = Vec::with_capacity(rule.len() * (edges.len() - 1));
            for piece in edges.windows(2) {
                let (a, b) = (piece[0], piece[1]);
                if b <= a {
                    continue;
                }
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                out.extend(
                    rule.pairs()
                        .map(|(t, w)| (mean + sd * normal_quantile(mid + half * t), (b - a) * w)),
                );
            }
            out
        }
    }
}

/// Nodes and weights for one feature's law: Gauss-Legendre mapped onto a
/// uniform range, or Gauss-Hermite scaled to a normal law.
pub fn quadrature_nodes(
    spec: &ParametricSpec,
    feature: &str,
    order: usize,
) -> Result<Vec<(f64, f64)>> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "quadrature order must be >= 1".into(),
        ));
    }
    let law = spec.law_by_name(feature)?;
    if matches!(law, Law::Bernoulli { .. }) {
        return Err(Error::UnsupportedLaw(feature.to_string()));
    }
    Ok(law_rule(law, order, &[]))
}
