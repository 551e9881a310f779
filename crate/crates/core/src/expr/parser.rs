use std::sync::Arc;

use super::{BinOp, CmpOp, Extremum, ModelExpr, Node};
use crate::error::{Error, Result};
use crate::schema::{FeatureKind, FeatureSchema};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
    End,
}

fn syntax(position: usize, expected: &[&str]) -> Error {
    Error::Syntax {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'>' | b'<' | b'=' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'>', false) => CmpOp::Gt,
                    (b'>', true) => CmpOp::Ge,
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (b'=', true) => CmpOp::Eq,
                    _ => return Err(syntax(i, &["=="])),
                };
                if eq {
                    i += 1;
                }
                Tok::Cmp(op)
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| syntax(start, &["number"]))?;
                if !v.is_finite() {
                    return Err(syntax(start, &["finite number"]));
                }
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => return Err(syntax(i, &["operator", "number", "feature"])),
        };
        i += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

const OPERAND: &[&str] = &["number", "feature", "(", "-", "indicator", "min", "max"];

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    schema: &'a FeatureSchema,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), &[label]))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let lhs = self.additive()?;
        if let Tok::Cmp(op) = *self.peek() {
            self.bump();
            let rhs = self.additive()?;
            for side in [&lhs, &rhs] {
                if let Some(i) = side
                    .feature_indices()
                    .into_iter()
                    .find(|&i| matches!(self.schema.kind(i), FeatureKind::Categorical { .. }))
                {
                    return Err(Error::CategoricalComparison(
                        self.schema.name(i).to_string(),
                    ));
                }
            }
            return Ok(Node::compare(op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) if v.fract() == 0.0 && v <= i32::MAX as f64 => {
                let e = v as i32;
                Ok(Node::Pow {
                    base: Box::new(base),
                    exponent: if negative { -e } else { e },
                })
            }
            _ => Err(syntax(at, &["integer exponent"])),
        }
    }

    fn primary(&mut self) -> Result<Node> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "indicator" => {
                    self.expect(Tok::LParen, "(")?;
                    let arg_at = self.offset();
                    let e = self.expr()?;
                    if !matches!(e, Node::Compare { .. }) {
                        return Err(syntax(arg_at, &["comparison"]));
                    }
                    self.expect(Tok::RParen, ")")?;
                    Ok(Node::Indicator(Box::new(e)))
                }
                "min" | "max" => {
                    self.expect(Tok::LParen, "(")?;
                    let lhs = self.expr()?;
                    self.expect(Tok::Comma, ",")?;
                    let rhs = self.expr()?;
                    self.expect(Tok::RParen, ")")?;
                    Ok(Node::Extremum {
                        kind: if name == "min" {
                            Extremum::Min
                        } else {
                            Extremum::Max
                        },
                        lhs: Box::new(lhs),
                        rhs: Box::new(rhs),
                    })
                }
                _ => self
                    .schema
                    .index_of(&name)
                    .map(Node::Var)
                    .ok_or(Error::UnknownFeature(name)),
            },
            _ => Err(syntax(at, OPERAND)),
        }
    }
}

/// Parses a model expression against `schema`.
pub fn parse_model(source: &str, schema: &Arc<FeatureSchema>) -> Result<ModelExpr> {
    if source.trim().is_empty() {
        return Err(syntax(0, OPERAND));
    }
    let toks = lex(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        schema,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.offset(), &["end of input"]));
    }
    Ok(ModelExpr {
        root,
        schema: schema.clone(),
    })
}
