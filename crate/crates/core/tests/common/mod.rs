#![allow(dead_code)]

use std::sync::Arc;

use coalition_attrib::expr::{BinOp, CmpOp, Extremum, Node};
use coalition_attrib::{
    CausalGraph, Dataset, ExactConfig, ExactOptions, Feature, FeatureKind, FeatureSchema,
    KernelParams, Law, ModelExpr, ParametricSpec, ReferenceDistribution, Source,
};
use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn continuous(names: &[&str]) -> Arc<FeatureSchema> {
    Arc::new(FeatureSchema::continuous(names).unwrap())
}

pub fn binary(names: &[&str]) -> Arc<FeatureSchema> {
    Arc::new(
        FeatureSchema::new(
            names
                .iter()
                .map(|n| Feature {
                    name: n.to_string(),
                    kind: FeatureKind::Binary,
                })
                .collect(),
        )
        .unwrap(),
    )
}

pub fn independent(names: &[&str], laws: Vec<Law>) -> ParametricSpec {
    let named: Vec<(String, Law)> = names
        .iter()
        .map(|n| n.to_string())
        .zip(laws.iter().copied())
        .collect();
    let schema = Arc::new(ParametricSpec::schema_for(&named).unwrap());
    ParametricSpec::independent(schema, laws).unwrap()
}

pub fn marginal(spec: ParametricSpec) -> ReferenceDistribution {
    ReferenceDistribution::marginal(Source::Parametric(spec))
}

pub fn uniform_pair() -> ParametricSpec {
    independent(
        &["x1", "x2"],
        vec![
            Law::Uniform {
                low: -1.0,
                high: 2.0,
            },
            Law::Uniform {
                low: 0.0,
                high: 3.0,
            },
        ],
    )
}

pub fn normal_pair(sd2: f64) -> ParametricSpec {
    independent(
        &["x1", "x2"],
        vec![
            Law::Normal { mean: 0.0, sd: 1.0 },
            Law::Normal { mean: 0.0, sd: sd2 },
        ],
    )
}

pub fn shifted_normal_pair() -> ParametricSpec {
    let law = Law::Normal { mean: 1.0, sd: 1.0 };
    independent(&["x1", "x2"], vec![law, law])
}

pub const PIECEWISE: &str = "indicator(x1 > 1) * 3 * x2 - indicator(x1 <= 1) * x2";

pub fn low_order() -> ExactOptions {
    ExactOptions {
        config: ExactConfig {
            quadrature_order: 3,
            max_points: 4_000_000,
        },
        force: false,
    }
}

/// Polynomial degree, `None` for non-polynomial nodes.
pub fn degree(n: &Node) -> Option<u32> {
    Some(match n {
        Node::Const(_) => 0,
        Node::Var(_) => 1,
        Node::Neg(e) => degree(e)?,
        Node::Binary {
            op: BinOp::Add | BinOp::Sub,
            lhs,
            rhs,
        } => degree(lhs)?.max(degree(rhs)?),
        Node::Binary {
            op: BinOp::Mul,
            lhs,
            rhs,
        } => degree(lhs)? + degree(rhs)?,
        Node::Pow { base, exponent } if *exponent >= 0 => degree(base)? * (*exponent as u32),
        _ => return None,
    })
}

/// One randomly drawn (model, reference, instance) setting.
pub struct Triple {
    pub model: ModelExpr,
    pub reference: ReferenceDistribution,
    pub instance: Vec<f64>,
    /// Features 0 and 1 are interchangeable when set.
    pub symmetric: bool,
    pub description: String,
    /// Quadrature settings that integrate this model exactly where possible.
    pub exact: ExactOptions,
}

fn leaf(rng: &mut ChaCha8Rng, m: usize) -> Node {
    if rng.random_bool(0.7) {
        Node::Var(rng.random_range(0..m))
    } else {
        Node::Const(f64::from(rng.random_range(0..8u8)) * 0.5)
    }
}

/// Random expression without division. Indicators only test features listed
/// in `steps`, whose laws keep exact integration cheap.
/// With `smooth` set, only polynomial nodes are produced.
pub fn random_node(
    rng: &mut ChaCha8Rng,
    m: usize,
    depth: usize,
    steps: &[usize],
    smooth: bool,
) -> Node {
    if depth == 0 || rng.random_bool(0.25) {
        return leaf(rng, m);
    }
    let sub = |rng: &mut ChaCha8Rng| random_node(rng, m, depth - 1, steps, smooth);
    match rng.random_range(0..if smooth { 6 } else { 8 }) {
        0 | 1 => {
            let (a, b) = (sub(rng), sub(rng));
            Node::binary(BinOp::Add, a, b)
        }
        2 => {
            let (a, b) = (sub(rng), sub(rng));
            Node::binary(BinOp::Sub, a, b)
        }
        3 => {
            let (a, b) = (sub(rng), sub(rng));
            Node::binary(BinOp::Mul, a, b)
        }
        4 => Node::Neg(Box::new(sub(rng))),
        5 => Node::Pow {
            base: Box::new(sub(rng)),
            exponent: if smooth { 2 } else { rng.random_range(2..=3) },
        },
        6 => {
            let (a, b) = (sub(rng), sub(rng));
            Node::Extremum {
                kind: if rng.random_bool(0.5) {
                    Extremum::Min
                } else {
                    Extremum::Max
                },
                lhs: Box::new(a),
                rhs: Box::new(b),
            }
        }
        _ => match steps.choose(rng) {
            Some(&j) => Node::binary(
                BinOp::Mul,
                Node::Indicator(Box::new(Node::compare(
                    CmpOp::Gt,
                    Node::Var(j),
                    Node::Const(f64::from(rng.random_range(0..3u8)) * 0.5),
                ))),
                sub(rng),
            ),
            None => sub(rng),
        },
    }
}

fn swap01(n: &Node) -> Node {
    let schema = Arc::new(FeatureSchema::continuous(&["a", "b", "c", "d", "e", "f"]).unwrap());
    let e = ModelExpr::from_node(n.clone(), schema).unwrap();
    e.swap_features(0, 1).root().clone()
}

fn draw_law(rng: &mut ChaCha8Rng) -> Law {
    match rng.random_range(0..3) {
        0 => {
            let low = f64::from(rng.random_range(-2..=0i8));
            Law::Uniform {
                low,
                high: low + f64::from(rng.random_range(1..=3u8)),
            }
        }
        1 => Law::Normal {
            mean: f64::from(rng.random_range(-1..=1i8)),
            sd: f64::from(rng.random_range(1..=2u8)),
        },
        _ => Law::Bernoulli {
            p: f64::from(rng.random_range(1..=9u8)) / 10.0,
        },
    }
}

fn draw_value(law: &Law, rng: &mut ChaCha8Rng) -> f64 {
    match *law {
        Law::Uniform { low, high } => rng.random_range(low..high),
        Law::Normal { mean, sd } => mean + sd * rng.random_range(-2.0..2.0),
        Law::Bernoulli { .. } => f64::from(u8::from(rng.random_bool(0.5))),
    }
}

fn random_dag(rng: &mut ChaCha8Rng, m: usize, symmetric: bool) -> CausalGraph {
    let mut edges = Vec::new();
    // edges only go from lower to higher index; keep 0 and 1 unlinked and
    // give them identical parent/child sets when a symmetric pair is wanted
    for c in 2..m {
        for p in 0..c {
            if rng.random_bool(0.3) {
                edges.push((p, c));
                if symmetric && p < 2 {
                    edges.push((1 - p, c));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    CausalGraph::from_edges(m, &edges).unwrap()
}

/// Draws a setting from `seed`: model depth up to 4, `M` in 2..=6, and one of
/// independent parametric, dataset (marginal / conditional / interventional)
/// or joint Gaussian (marginal / conditional / interventional) references.
pub fn random_triple(seed: u64) -> Triple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=6usize);
    let names: Vec<String> = (0..m).map(|j| format!("x{j}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let symmetric = rng.random_bool(0.5);
    let family = rng.random_range(0..3);
    let (reference, instance, steps, label) = match family {
        0 => {
            let mut laws: Vec<Law> = (0..m).map(|_| draw_law(&mut rng)).collect();
            if symmetric {
                laws[1] = laws[0];
            }
            let mut x: Vec<f64> = laws.iter().map(|l| draw_value(l, &mut rng)).collect();
            if symmetric {
                x[1] = x[0];
            }
            let steps: Vec<usize> = (0..m)
                .filter(|&j| !matches!(laws[j], Law::Normal { .. }))
                .collect();
            (
                marginal(independent(&name_refs, laws)),
                x,
                steps,
                "independent parametric",
            )
        }
        1 => {
            let schema = if rng.random_bool(0.5) {
                binary(&name_refs)
            } else {
                continuous(&name_refs)
            };
            let discrete = schema.kind(0).is_discrete();
            let n = rng.random_range(6..=14usize);
            // discrete data covers every level combination so that exact-match
            // conditioning always has support
            let grid: Vec<Vec<f64>> = if discrete {
                (0..1u32 << m)
                    .map(|b| (0..m).map(|j| f64::from((b >> j) & 1)).collect())
                    .collect()
            } else {
                Vec::new()
            };
            let mut rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| {
                            if discrete {
                                f64::from(u8::from(rng.random_bool(0.5)))
                            } else {
                                f64::from(rng.random_range(-2..=2i8)) * 0.5
                            }
                        })
                        .collect()
                })
                .collect();
            if symmetric {
                let swapped: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| {
                        let mut r = r.clone();
                        r.swap(0, 1);
                        r
                    })
                    .collect();
                rows.extend(swapped);
            }
            rows.extend(grid);
            let mut x = rows[rng.random_range(0..rows.len())].clone();
            if symmetric {
                x[1] = x[0];
            }
            let ds = Dataset::new(schema, rows, None).unwrap();
            let params = KernelParams {
                bandwidth: Some(1.0),
                neighbors: Some(rng.random_range(3..=30)),
            };
            let (r, label) = match rng.random_range(0..3) {
                0 => (
                    ReferenceDistribution::marginal(Source::Dataset(ds)),
                    "dataset marginal",
                ),
                1 => (
                    ReferenceDistribution::conditional_empirical(ds, params).unwrap(),
                    "dataset conditional",
                ),
                _ => {
                    let g = random_dag(&mut rng, m, symmetric);
                    (
                        ReferenceDistribution::interventional(Source::Dataset(ds), g, params)
                            .unwrap(),
                        "dataset interventional",
                    )
                }
            };
            (r, x, (0..m).collect(), label)
        }
        _ => {
            // covariance with an exchangeable 0/1 block when symmetric
            let a = DMatrix::from_fn(m, m, |_, _| f64::from(rng.random_range(-2..=2i8)) * 0.5);
            let mut a = a;
            if symmetric {
                let r0 = a.row(0).clone_owned();
                a.set_row(1, &r0);
                let c0 = a.column(0).clone_owned();
                a.set_column(1, &c0);
                a[(0, 1)] = a[(0, 0)];
                a[(1, 0)] = a[(0, 0)];
                a[(1, 1)] = a[(0, 0)];
            }
            let cov = &a * a.transpose() + DMatrix::identity(m, m);
            let laws: Vec<Law> = (0..m)
                .map(|j| Law::Normal {
                    mean: 0.0,
                    sd: cov[(j, j)].sqrt(),
                })
                .collect();
            let mut x: Vec<f64> = (0..m)
                .map(|_| f64::from(rng.random_range(-2..=2i8)) * 0.5)
                .collect();
            if symmetric {
                x[1] = x[0];
            }
            let spec = ParametricSpec::joint_gaussian(continuous(&name_refs), laws, cov).unwrap();
            let (r, label) = match rng.random_range(0..3) {
                0 => (marginal(spec), "joint gaussian marginal"),
                1 => (
                    ReferenceDistribution::conditional_gaussian(spec).unwrap(),
                    "joint gaussian conditional",
                ),
                _ => {
                    let g = random_dag(&mut rng, m, symmetric);
                    (
                        ReferenceDistribution::interventional(
                            Source::Parametric(spec),
                            g,
                            KernelParams::default(),
                        )
                        .unwrap(),
                        "joint gaussian interventional",
                    )
                }
            };
            (r, x, Vec::new(), label)
        }
    };
    // joint Gaussian blocks are integrated in rotated coordinates, where only
    // polynomials are integrated exactly
    let smooth = family == 2;
    let depth = rng.random_range(1..=if smooth { 3 } else { 4 });
    let mut node = random_node(&mut rng, m, depth, &steps, smooth);
    if symmetric {
        node = Node::binary(BinOp::Add, node.clone(), swap01(&node));
    }
    let exact = match degree(&node) {
        Some(d) if smooth => ExactOptions {
            config: ExactConfig {
                quadrature_order: (d as usize / 2 + 1).max(2),
                max_points: 4_000_000,
            },
            force: false,
        },
        _ => low_order(),
    };
    let model = ModelExpr::from_node(node, reference.source().schema_arc().clone()).unwrap();
    Triple {
        description: format!("{label}, M={m}, symmetric={symmetric}, f={model}"),
        model,
        reference,
        instance,
        symmetric,
        exact,
    }
}
