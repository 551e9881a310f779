//! Model expression DSL: AST, evaluation and feature analysis.
//!
//! Grammar (EBNF, whitespace-insensitive):
//!
//! ```text
//! expr        = additive [ cmp_op additive ] ;
//! cmp_op      = ">" | ">=" | "<" | "<=" | "==" ;
//! additive    = term { ( "+" | "-" ) term } ;
//! term        = unary { ( "*" | "/" ) unary } ;
//! unary       = "-" unary | power ;
//! power       = primary [ "^" [ "-" ] integer ] ;
//! primary     = number | feature
//!             | "(" expr ")"
//!             | "indicator" "(" expr ")"          (* argument must be a comparison *)
//!             | ( "min" | "max" ) "(" expr "," expr ")" ;
//! ```
//!
//! Comparisons evaluate to exactly `0` or `1`. Categorical features evaluate to
//! their level index and may not appear inside comparisons.

mod parser;
mod print;

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, Instance};

pub use parser::parse_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Extremum {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Feature reference by schema index.
    Var(usize),
    Neg(Box<Node>),
    Binary {
        op: BinOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Compare {
        op: CmpOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Indicator(Box<Node>),
    Extremum {
        kind: Extremum,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Pow {
        base: Box<Node>,
        exponent: i32,
    },
}

impl Node {
    pub fn binary(op: BinOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn compare(op: CmpOp, lhs: Node, rhs: Node) -> Node {
        Node::Compare {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    fn eval(&self, values: &[f64]) -> Result<f64> {
        Ok(match self {
            Node::Const(c) => *c,
            Node::Var(i) => values[*i],
            Node::Neg(e) => -e.eval(values)?,
            Node::Binary { op, lhs, rhs } => {
                let a = lhs.eval(values)?;
                let b = rhs.eval(values)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Node::Compare { op, lhs, rhs } => {
                let a = lhs.eval(values)?;
                let b = rhs.eval(values)?;
                f64::from(u8::from(op.holds(a, b)))
            }
            Node::Indicator(e) => f64::from(u8::from(e.eval(values)? != 0.0)),
            Node::Extremum { kind, lhs, rhs } => {
                let a = lhs.eval(values)?;
                let b = rhs.eval(values)?;
                match kind {
                    Extremum::Min => a.min(b),
                    Extremum::Max => a.max(b),
                }
            }
            Node::Pow { base, exponent } => {
                let b = base.eval(values)?;
                if b == 0.0 && *exponent < 0 {
                    return Err(Error::DivisionByZero);
                }
                b.powi(*exponent)
            }
        })
    }

    fn children(&self) -> Vec<&Node> {
        match self {
            Node::Const(_) | Node::Var(_) => vec![],
            Node::Neg(e) | Node::Indicator(e) => vec![e],
            Node::Pow { base, .. } => vec![base],
            Node::Binary { lhs, rhs, .. }
            | Node::Compare { lhs, rhs, .. }
            | Node::Extremum { lhs, rhs, .. } => vec![lhs, rhs],
        }
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    fn feature_indices(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let Node::Var(i) = n {
                out.insert(*i);
            }
        });
        out
    }

    fn map_vars(&self, f: &impl Fn(usize) -> usize) -> Node {
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(i) => Node::Var(f(*i)),
            Node::Neg(e) => Node::Neg(Box::new(e.map_vars(f))),
            Node::Indicator(e) => Node::Indicator(Box::new(e.map_vars(f))),
            Node::Pow { base, exponent } => Node::Pow {
                base: Box::new(base.map_vars(f)),
                exponent: *exponent,
            },
            Node::Binary { op, lhs, rhs } => Node::binary(*op, lhs.map_vars(f), rhs.map_vars(f)),
            Node::Compare { op, lhs, rhs } => Node::compare(*op, lhs.map_vars(f), rhs.map_vars(f)),
            Node::Extremum { kind, lhs, rhs } => Node::Extremum {
                kind: *kind,
                lhs: Box::new(lhs.map_vars(f)),
                rhs: Box::new(rhs.map_vars(f)),
            },
        }
    }
}

/// A parsed scalar model `f: R^M -> R` over a feature schema.
///
/// Immutable after construction; evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelExpr {
    root: Node,
    schema: Arc<FeatureSchema>,
}

impl ModelExpr {
    /// Wraps a hand-built AST, checking every feature index against the schema.
    pub fn from_node(root: Node, schema: Arc<FeatureSchema>) -> Result<Self> {
        if let Some(&i) = root.feature_indices().iter().find(|&&i| i >= schema.len()) {
            return Err(Error::UnknownFeature(format!("#{i}")));
        }
        Ok(Self { root, schema })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    /// Evaluates on a value slice laid out in schema order.
    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        if values.len() < self.schema.len() {
            return Err(Error::MissingFeature(
                self.schema.name(values.len()).to_string(),
            ));
        }
        let y = self.root.eval(values)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn eval_instance(&self, instance: &Instance) -> Result<f64> {
        self.eval(instance.values())
    }

    /// Names of the features appearing anywhere in the expression.
    pub fn referenced_features(&self) -> BTreeSet<String> {
        self.root
            .feature_indices()
            .into_iter()
            .map(|i| self.schema.name(i).to_string())
            .collect()
    }

    pub fn referenced_indices(&self) -> BTreeSet<usize> {
        self.root.feature_indices()
    }

    /// Constant thresholds `c` from comparisons of the form `x_j op c` or
    /// `c op x_j`, as `(j, c)` pairs sorted and deduplicated.
    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.root.visit(&mut |n| {
            if let Node::Compare { lhs, rhs, .. } = n {
                let pair = match (lhs.as_ref(), rhs.as_ref()) {
                    (Node::Var(j), other) | (other, Node::Var(j)) => {
                        if other.feature_indices().is_empty() {
                            other.eval(&[]).ok().map(|c| (*j, c))
                        } else {
                            None
                        }
                    }
                    _ => None,
                };
                if let Some((j, c)) = pair {
                    if c.is_finite() {
                        out.push((j, c));
                    }
                }
            }
        });
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        out.dedup();
        out
    }

    /// Threshold values for feature `j` only.
    pub fn thresholds_for(&self, j: usize) -> Vec<f64> {
        self.thresholds()
            .into_iter()
            .filter(|(i, _)| *i == j)
            .map(|(_, c)| c)
            .collect()
    }

    /// True if any comparison or indicator mentions feature `j`.
    pub fn has_discontinuity_in(&self, j: usize) -> bool {
        let mut hit = false;
        self.root.visit(&mut |n| {
            if let Node::Compare { .. } | Node::Indicator(_) = n {
                if n.feature_indices().contains(&j) {
                    hit = true;
                }
            }
        });
        hit
    }

    /// Same expression with features `i` and `j` exchanged.
    pub fn swap_features(&self, i: usize, j: usize) -> ModelExpr {
        let root = self.root.map_vars(&|k| {
            if k == i {
                j
            } else if k == j {
                i
            } else {
                k
            }
        });
        ModelExpr {
            root,
            schema: self.schema.clone(),
        }
    }

    /// Text form with operands of commutative operators sorted, so that
    /// expressions equal up to commutativity compare equal.
    pub fn canonical_form(&self) -> String {
        print::canonical(&self.root, &self.schema)
    }

    /// `a * self + b * other`; both expressions must share a schema.
    pub fn linear_combination(&self, a: f64, other: &ModelExpr, b: f64) -> Result<ModelExpr> {
        if self.schema != other.schema {
            return Err(Error::Schema("linear combination across schemas".into()));
        }
        let root = Node::binary(
            BinOp::Add,
            Node::binary(BinOp::Mul, Node::Const(a), self.root.clone()),
            Node::binary(BinOp::Mul, Node::Const(b), other.root.clone()),
        );
        Ok(ModelExpr {
            root,
            schema: self.schema.clone(),
        })
    }
}
