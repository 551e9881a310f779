use std::fmt;

use super::{BinOp, CmpOp, Extremum, ModelExpr, Node};
use crate::schema::FeatureSchema;

fn bin_sym(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
    }
}

fn cmp_sym(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Gt => ">",
        CmpOp::Ge => ">=",
        CmpOp::Lt => "<",
        CmpOp::Le => "<=",
        CmpOp::Eq => "==",
    }
}

fn ext_name(kind: Extremum) -> &'static str {
    match kind {
        Extremum::Min => "min",
        Extremum::Max => "max",
    }
}

// Composite nodes are always parenthesized, so printing never depends on
// precedence. Negative constants print as `(-c)` and re-parse as a negation.
fn write_node(node: &Node, schema: &FeatureSchema, out: &mut String) {
    use std::fmt::Write;
    match node {
        Node::Const(c) if *c < 0.0 => {
            let _ = write!(out, "(-{})", -c);
        }
        Node::Const(c) => {
            let _ = write!(out, "{c}");
        }
        Node::Var(i) => out.push_str(schema.name(*i)),
        Node::Neg(e) => {
            out.push_str("(-");
            write_node(e, schema, out);
            out.push(')');
        }
        Node::Binary { op, lhs, rhs } => {
            out.push('(');
            write_node(lhs, schema, out);
            let _ = write!(out, " {} ", bin_sym(*op));
            write_node(rhs, schema, out);
            out.push(')');
        }
        Node::Compare { op, lhs, rhs } => {
            out.push('(');
            write_node(lhs, schema, out);
            let _ = write!(out, " {} ", cmp_sym(*op));
            write_node(rhs, schema, out);
            out.push(')');
        }
        Node::Indicator(e) => {
            out.push_str("indicator");
            write_node(e, schema, out);
        }
        Node::Extremum { kind, lhs, rhs } => {
            out.push_str(ext_name(*kind));
            out.push('(');
            write_node(lhs, schema, out);
            out.push_str(", ");
            write_node(rhs, schema, out);
            out.push(')');
        }
        Node::Pow { base, exponent } => {
            out.push('(');
            write_node(base, schema, out);
            let _ = write!(out, " ^ {exponent})");
        }
    }
}

impl fmt::Display for ModelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_node(&self.root, &self.schema, &mut s);
        f.write_str(&s)
    }
}

pub(super) fn canonical(node: &Node, schema: &FeatureSchema) -> String {
    let pair = |sym: &str, a: &Node, b: &Node, commutative: bool| {
        let (mut x, mut y) = (canonical(a, schema), canonical(b, schema));
        if commutative && y < x {
            std::mem::swap(&mut x, &mut y);
        }
        format!("({x} {sym} {y})")
    };
    match node {
        Node::Binary { op, lhs, rhs } => pair(
            bin_sym(*op),
            lhs,
            rhs,
            matches!(op, BinOp::Add | BinOp::Mul),
        ),
        Node::Compare { op, lhs, rhs } => pair(cmp_sym(*op), lhs, rhs, *op == CmpOp::Eq),
        Node::Extremum { kind, lhs, rhs } => pair(ext_name(*kind), lhs, rhs, true),
        Node::Neg(e) => format!("(-{})", canonical(e, schema)),
        Node::Indicator(e) => format!("indicator{}", canonical(e, schema)),
        Node::Pow { base, exponent } => format!("({} ^ {exponent})", canonical(base, schema)),
        leaf => {
            let mut s = String::new();
            write_node(leaf, schema, &mut s);
            s
        }
    }
}
