use rand::seq::SliceRandom;
use rand::Rng;

use super::exact::{report_from_table, ValueTable};
use super::report::AttributionMode;
use super::sampled::{walk_orderings, SampleOptions};
use super::{check_inputs, AttributionReport, Backend, ExactOptions};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::expr::ModelExpr;
use crate::graph::CausalGraph;
use crate::numeric::CompensatedSum;
use crate::refdist::ReferenceDistribution;
use crate::rng::RandomStream;

/// Largest `M` for exact linear-extension weights without `force`.
pub const MAX_EXTENSION_FEATURES: usize = 10;
const FORCED_EXTENSION_FEATURES: usize = 25;

/// Counts of linear extensions of a DAG, indexed by ideal (ancestor-closed
/// feature set).
///
/// `prefix[S]` counts the orderings of `S` consistent with the graph and
/// `suffix[S]` the orderings of the remaining features that extend them, so a
/// uniformly drawn linear extension places exactly `S` before `j` with
/// probability `prefix[S] * suffix[S + j] / total`.
#[derive(Debug, Clone)]
pub struct LinearExtensions {
    m: usize,
    parents: Vec<Coalition>,
    prefix: Vec<u128>,
    suffix: Vec<u128>,
}

impl LinearExtensions {
    pub fn new(graph: &CausalGraph) -> Result<Self> {
        let m = graph.n_nodes();
        if m > FORCED_EXTENSION_FEATURES {
            return Err(Error::TooManyFeatures {
                what: "linear extension counting",
                features: m,
                limit: FORCED_EXTENSION_FEATURES,
            });
        }
        let parents = graph.parent_masks();
        let n = 1usize << m;
        let is_ideal = |s: Coalition| s.members().all(|i| parents[i].is_subset_of(s));
        let mut prefix = vec![0u128; n];
        prefix[0] = 1;
        for bits in 1..n as u64 {
            let s = Coalition::from_bits(bits);
            if !is_ideal(s) {
                continue;
            }
            // last element must have no children inside S
            prefix[s.index()] = s
                .members()
                .filter(|&i| is_ideal(s.without(i)))
                .map(|i| prefix[s.without(i).index()])
                .sum();
        }
        let mut suffix = vec![0u128; n];
        suffix[n - 1] = 1;
        for bits in (0..(n as u64 - 1)).rev() {
            let s = Coalition::from_bits(bits);
            if !is_ideal(s) {
                continue;
            }
            suffix[s.index()] = (0..m)
                .filter(|&i| !s.contains(i) && parents[i].is_subset_of(s))
                .map(|i| suffix[s.with(i).index()])
                .sum();
        }
        Ok(Self {
            m,
            parents,
            prefix,
            suffix,
        })
    }

    pub fn total(&self) -> u128 {
        self.suffix[0]
    }

    pub fn is_ideal(&self, s: Coalition) -> bool {
        s.members().all(|i| self.parents[i].is_subset_of(s))
    }

    pub fn ideals(&self) -> Vec<Coalition> {
        (0..(1u64 << self.m))
            .map(Coalition::from_bits)
            .filter(|&s| self.is_ideal(s))
            .collect()
    }

    /// Fraction of linear extensions in which `j` comes right after exactly `S`.
    pub fn weight(&self, s: Coalition, j: usize) -> f64 {
        if s.contains(j) || !self.is_ideal(s) || !self.parents[j].is_subset_of(s) {
            return 0.0;
        }
        let count = self.prefix[s.index()] * self.suffix[s.with(j).index()];
        count as f64 / self.total() as f64
    }

    /// A uniformly distributed linear extension.
    pub fn sample(&self, stream: &mut RandomStream) -> Vec<usize> {
        let mut s = Coalition::EMPTY;
        let mut order = Vec::with_capacity(self.m);
        while order.len() < self.m {
            let mut ticket = stream.random_range(0..self.suffix[s.index()]);
            let next = (0..self.m)
                .filter(|&i| !s.contains(i) && self.parents[i].is_subset_of(s))
                .find(|&i| {
                    let c = self.suffix[s.with(i).index()];
                    if ticket < c {
                        true
                    } else {
                        ticket -= c;
                        false
                    }
                })
                .expect("tickets partition the extension count");
            order.push(next);
            s = s.with(next);
        }
        order
    }
}

fn require_conditional(refd: &ReferenceDistribution, graph: &CausalGraph) -> Result<()> {
    if !refd.is_conditional() {
        return Err(Error::Reference(
            "asymmetric Shapley needs a conditional reference".into(),
        ));
    }
    if graph.n_nodes() != refd.n_features() {
        return Err(Error::GraphSchemaMismatch(format!(
            "graph has {} nodes, schema has {} features",
            graph.n_nodes(),
            refd.n_features()
        )));
    }
    Ok(())
}

/// Asymmetric Shapley values: orderings restricted to linear extensions of
/// `graph`, value function conditioning by observation.
///
/// With `exact = Some(..)` the average over extensions is computed exactly;
/// otherwise `sampled` orderings are drawn uniformly from the extensions.
pub fn asymmetric_shapley(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
    graph: &CausalGraph,
    exact: Option<&ExactOptions>,
    sampled: &SampleOptions,
) -> Result<AttributionReport> {
    let m = check_inputs(model, refd, x)?;
    require_conditional(refd, graph)?;
    match exact {
        Some(opts) => {
            if m > MAX_EXTENSION_FEATURES && !opts.force {
                return Err(Error::TooManyFeatures {
                    what: "exact linear extension enumeration (use sampling or force)",
                    features: m,
                    limit: MAX_EXTENSION_FEATURES,
                });
            }
            let ext = LinearExtensions::new(graph)?;
            let ideals = ext.ideals();
            let table =
                ValueTable::compute(model, refd, x, &Backend::Exact(opts.config), Some(&ideals))?;
            let phi = (0..m)
                .map(|j| {
                    let mut acc = CompensatedSum::default();
                    for &s in &ideals {
                        let w = ext.weight(s, j);
                        if w > 0.0 {
                            acc.add(w * (table.value(s.with(j)) - table.value(s)));
                        }
                    }
                    acc.value()
                })
                .collect();
            Ok(report_from_table(
                refd,
                model,
                x,
                &table,
                phi,
                AttributionMode::Asymmetric,
                opts,
            ))
        }
        None => {
            if graph.has_edges() {
                let ext = LinearExtensions::new(graph)?;
                walk_orderings(model, refd, x, sampled, AttributionMode::Asymmetric, |st| {
                    ext.sample(st)
                })
            } else {
                walk_orderings(model, refd, x, sampled, AttributionMode::Asymmetric, |st| {
                    let mut order: Vec<usize> = (0..m).collect();
                    order.shuffle(st);
                    order
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::shapley_weight;

    fn permutations(m: usize) -> Vec<Vec<usize>> {
        if m == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(m - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, m - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_weight(graph: &CausalGraph, s: Coalition, j: usize) -> (usize, usize) {
        let m = graph.n_nodes();
        let valid: Vec<Vec<usize>> = permutations(m)
            .into_iter()
            .filter(|p| {
                graph
                    .edges()
                    .iter()
                    .all(|&(a, b)| p.iter().position(|&v| v == a) < p.iter().position(|&v| v == b))
            })
            .collect();
        let hits = valid
            .iter()
            .filter(|p| {
                let k = p.iter().position(|&v| v == j).unwrap();
                Coalition::from_indices(p[..k].iter().copied()) == s
            })
            .count();
        (hits, valid.len())
    }

    #[test]
    fn weights_match_brute_force() {
        let graphs = [
            CausalGraph::from_edges(4, &[]).unwrap(),
            CausalGraph::from_edges(4, &[(0, 1), (0, 2), (2, 3)]).unwrap(),
            CausalGraph::from_edges(4, &[(0, 3), (1, 3), (2, 1)]).unwrap(),
        ];
        for g in &graphs {
            let ext = LinearExtensions::new(g).unwrap();
            for bits in 0..16 {
                let s = Coalition::from_bits(bits);
                for j in 0..4 {
                    if s.contains(j) {
                        continue;
                    }
                    let (hits, total) = brute_weight(g, s, j);
                    assert_eq!(ext.total(), total as u128);
                    assert!((ext.weight(s, j) - hits as f64 / total as f64).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn empty_graph_gives_shapley_weights() {
        let ext = LinearExtensions::new(&CausalGraph::empty(5)).unwrap();
        assert_eq!(ext.total(), 120);
        for bits in 0..32u64 {
            let s = Coalition::from_bits(bits);
            if !s.contains(0) {
                assert!((ext.weight(s, 0) - shapley_weight(5, s.len())).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sampled_extensions_are_uniform_and_valid() {
        let g = CausalGraph::from_edges(3, &[(0, 2)]).unwrap();
        let ext = LinearExtensions::new(&g).unwrap();
        assert_eq!(ext.total(), 3);
        let mut st = RandomStream::new(1, "t", 0);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..30_000 {
            let o = ext.sample(&mut st);
            let a = o.iter().position(|&v| v == 0).unwrap();
            let b = o.iter().position(|&v| v == 2).unwrap();
            assert!(a < b);
            *counts.entry(o).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 3);
        assert!(counts
            .values()
            .all(|&c| (c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02));
    }
}
