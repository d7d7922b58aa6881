//! Expression language for ODE right-hand sides.
//!
//! A small arithmetic grammar over declared identifiers: `+ - * /`, a
//! constant-exponent power operator `^`, unary minus, parentheses, and the
//! function set `exp log sqrt sin cos tanh abs`. Precedence is
//! `^` > unary `-` > `* /` > `+ -`, with left associativity among equal
//! binary operators. There is no implicit multiplication: `2x` is a syntax
//! error.
//!
//! Parsed expressions evaluate both over plain reals and over the jet
//! algebra ([`crate::jets::Jet2`]), so one definition serves value queries
//! and exact higher derivatives alike.

use crate::jets::{Jet2, JetError};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub const FUNCTION_NAMES: [&str; 7] = ["exp", "log", "sqrt", "sin", "cos", "tanh", "abs"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Slot index into the declaration list the expression was parsed with.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a constant exponent (enforced at parse time).
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

/// A parsed expression together with the identifier list it was resolved
/// against. Slot `k` of an evaluation binding corresponds to `vars()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Expr,
    vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("undeclared identifier `{name}` at byte {pos}")]
    UndeclaredIdentifier { name: String, pos: usize },
    #[error("exponent at byte {pos} is not a numeric constant")]
    NonConstantExponent { pos: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func}({value}) is outside the function domain")]
    Domain { func: &'static str, value: f64 },
    #[error("binding for slot {0} missing")]
    MissingBinding(usize),
}

// ---------------------------------------------------------------------------
// Lexer

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
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<Option<(Tok, usize)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' => {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos < self.src.len() && self.src[self.pos] == b'.' {
                    self.pos += 1;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
                if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
                    let mark = self.pos;
                    self.pos += 1;
                    if self.pos < self.src.len()
                        && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                    {
                        self.pos += 1;
                    }
                    if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    } else {
                        // Not an exponent after all ("2e" would be "2" then ident "e").
                        self.pos = mark;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    message: format!("malformed number `{text}`"),
                })?;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(Tok, usize)>,
    cursor: usize,
    end_pos: usize,
    declared: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.cursor).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.cursor)
            .map(|&(_, p)| p)
            .unwrap_or(self.end_pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.cursor).map(|(t, _)| t.clone());
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.bump() {
            Some(Tok::RParen) => Ok(()),
            _ => Err(ParseError::Syntax {
                pos: self.pos(),
                message: "expected `)`".into(),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.atom()?;
        while matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let exp_pos = self.pos();
            let exp_tree = self.exponent_operand()?;
            let value = const_fold(&exp_tree)
                .ok_or(ParseError::NonConstantExponent { pos: exp_pos })?;
            base = Expr::Pow(Box::new(base), value);
        }
        Ok(base)
    }

    /// The operand of `^`: a (possibly negated or parenthesised) constant.
    fn exponent_operand(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.exponent_operand()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    let func = Func::from_name(&name).ok_or_else(|| ParseError::Syntax {
                        pos,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    let slot = self
                        .declared
                        .iter()
                        .position(|d| d == &name)
                        .ok_or(ParseError::UndeclaredIdentifier { name, pos })?;
                    Ok(Expr::Var(slot))
                }
            }
            Some(tok) => Err(ParseError::Syntax {
                pos,
                message: format!("unexpected token {tok:?}"),
            }),
            None => Err(ParseError::Syntax {
                pos,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Folds an identifier-free subtree to its numeric value.
fn const_fold(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        Expr::Neg(x) => const_fold(x).map(|v| -v),
        Expr::Bin(op, a, b) => {
            let (a, b) = (const_fold(a)?, const_fold(b)?);
            Some(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            })
        }
        Expr::Pow(a, e) => const_fold(a).map(|v| v.powf(*e)),
        Expr::Var(_) | Expr::Call(..) => None,
    }
}

/// Parses `text` against an ordered list of declared identifiers. Variable
/// slots in the result index into `declared`.
pub fn parse(text: &str, declared: &[String]) -> Result<ExprAst, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next()? {
        toks.push(t);
    }
    if toks.is_empty() {
        return Err(ParseError::Syntax {
            pos: 0,
            message: "empty expression".into(),
        });
    }
    let end_pos = text.len();
    let mut parser = Parser {
        toks,
        cursor: 0,
        end_pos,
        declared: declared.to_vec(),
    };
    let root = parser.expr()?;
    if parser.cursor != parser.toks.len() {
        return Err(ParseError::Syntax {
            pos: parser.pos(),
            message: "trailing input after expression".into(),
        });
    }
    Ok(ExprAst {
        root,
        vars: declared.to_vec(),
    })
}

impl ExprAst {
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Builds an AST directly from parts; used when assembling expressions
    /// programmatically (e.g. reduced centre-manifold equations).
    pub fn from_parts(root: Expr, vars: Vec<String>) -> ExprAst {
        ExprAst { root, vars }
    }

    /// Plain real evaluation over a slot array aligned with `vars()`.
    pub fn eval_real(&self, slots: &[f64]) -> Result<f64, EvalError> {
        eval_real_node(&self.root, slots)
    }

    /// Jet evaluation over a slot array aligned with `vars()`. All jets must
    /// share one order; the constant term of the result equals plain real
    /// evaluation at the expansion point.
    pub fn eval_jet(&self, slots: &[Jet2]) -> Result<Jet2, EvalError> {
        eval_jet_node(&self.root, slots)
    }

    /// Map-keyed variant of [`ExprAst::eval_jet`].
    pub fn eval_jet_map(&self, bindings: &BTreeMap<String, Jet2>) -> Result<Jet2, EvalError> {
        let mut slots = Vec::with_capacity(self.vars.len());
        for (k, name) in self.vars.iter().enumerate() {
            let jet = bindings.get(name).ok_or(EvalError::MissingBinding(k))?;
            slots.push(jet.clone());
        }
        self.eval_jet(&slots)
    }

    /// Substitutes each variable slot with the corresponding expression,
    /// producing an AST over `new_vars`. Replacement slots index `new_vars`.
    pub fn substitute(&self, replacements: &[Expr], new_vars: Vec<String>) -> ExprAst {
        assert_eq!(replacements.len(), self.vars.len());
        fn walk(e: &Expr, replacements: &[Expr]) -> Expr {
            match e {
                Expr::Num(v) => Expr::Num(*v),
                Expr::Var(k) => replacements[*k].clone(),
                Expr::Neg(x) => Expr::Neg(Box::new(walk(x, replacements))),
                Expr::Bin(op, a, b) => Expr::Bin(
                    *op,
                    Box::new(walk(a, replacements)),
                    Box::new(walk(b, replacements)),
                ),
                Expr::Pow(a, p) => Expr::Pow(Box::new(walk(a, replacements)), *p),
                Expr::Call(f, a) => Expr::Call(*f, Box::new(walk(a, replacements))),
            }
        }
        ExprAst {
            root: walk(&self.root, replacements),
            vars: new_vars,
        }
    }
}

fn eval_real_node(e: &Expr, slots: &[f64]) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Var(k) => *slots.get(*k).ok_or(EvalError::MissingBinding(*k))?,
        Expr::Neg(x) => -eval_real_node(x, slots)?,
        Expr::Bin(op, a, b) => {
            let (a, b) = (eval_real_node(a, slots)?, eval_real_node(b, slots)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    a / b
                }
            }
        }
        Expr::Pow(a, p) => {
            let base = eval_real_node(a, slots)?;
            if is_integral(*p) {
                base.powi(*p as i32)
            } else {
                if base <= 0.0 {
                    return Err(EvalError::Domain {
                        func: "pow",
                        value: base,
                    });
                }
                base.powf(*p)
            }
        }
        Expr::Call(f, a) => {
            let x = eval_real_node(a, slots)?;
            match f {
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(EvalError::Domain {
                            func: "log",
                            value: x,
                        });
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(EvalError::Domain {
                            func: "sqrt",
                            value: x,
                        });
                    }
                    x.sqrt()
                }
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tanh => x.tanh(),
                Func::Abs => x.abs(),
            }
        }
    })
}

fn is_integral(p: f64) -> bool {
    p.fract() == 0.0 && p.abs() <= i32::MAX as f64
}

fn eval_jet_node(e: &Expr, slots: &[Jet2]) -> Result<Jet2, EvalError> {
    Ok(match e {
        Expr::Num(v) => {
            let order = slots.first().map(|j| j.order()).unwrap_or(DEFAULT_EVAL_ORDER);
            Jet2::constant(*v, order)
        }
        Expr::Var(k) => slots.get(*k).ok_or(EvalError::MissingBinding(*k))?.clone(),
        Expr::Neg(x) => eval_jet_node(x, slots)?.neg(),
        Expr::Bin(op, a, b) => {
            let (a, b) = (eval_jet_node(a, slots)?, eval_jet_node(b, slots)?);
            match op {
                BinOp::Add => a.add(&b),
                BinOp::Sub => a.sub(&b),
                BinOp::Mul => a.mul(&b),
                BinOp::Div => a.checked_div(&b)?,
            }
        }
        Expr::Pow(a, p) => {
            let base = eval_jet_node(a, slots)?;
            if is_integral(*p) {
                base.powi(*p as i32)?
            } else {
                base.powf(*p)?
            }
        }
        Expr::Call(f, a) => {
            let x = eval_jet_node(a, slots)?;
            match f {
                Func::Exp => x.exp()?,
                Func::Log => x.ln()?,
                Func::Sqrt => x.sqrt()?,
                Func::Sin => x.sin()?,
                Func::Cos => x.cos()?,
                Func::Tanh => x.tanh()?,
                Func::Abs => x.abs()?,
            }
        }
    })
}

const DEFAULT_EVAL_ORDER: usize = crate::jets::DEFAULT_ORDER;

// ---------------------------------------------------------------------------
// Pretty-printing (round-trips through the parser)

impl ExprAst {
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        print_node(&self.root, &self.vars, 0, &mut s);
        s
    }
}

/// Precedence levels: 0 add, 1 mul, 2 unary, 3 power, 4 atom.
fn node_prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 0,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 1,
        Expr::Neg(_) => 2,
        Expr::Pow(..) => 3,
        Expr::Num(v) if *v < 0.0 => 2,
        _ => 4,
    }
}

fn print_node(e: &Expr, vars: &[String], min_prec: u8, out: &mut String) {
    let prec = node_prec(e);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match e {
        Expr::Num(v) => {
            if *v == v.trunc() && v.abs() < 1e15 {
                out.push_str(&format!("{v:.1}"));
            } else {
                out.push_str(&format!("{v:e}"));
            }
        }
        Expr::Var(k) => out.push_str(&vars[*k]),
        Expr::Neg(x) => {
            out.push('-');
            print_node(x, vars, 2, out);
        }
        Expr::Bin(op, a, b) => {
            let (sym, lvl) = match op {
                BinOp::Add => (" + ", 0),
                BinOp::Sub => (" - ", 0),
                BinOp::Mul => ("*", 1),
                BinOp::Div => ("/", 1),
            };
            print_node(a, vars, lvl, out);
            out.push_str(sym);
            // Left associativity: the right child needs one level more.
            print_node(b, vars, lvl + 1, out);
        }
        Expr::Pow(a, p) => {
            print_node(a, vars, 4, out);
            out.push('^');
            if *p < 0.0 || *p != p.trunc() {
                out.push('(');
                if *p == p.trunc() {
                    out.push_str(&format!("{p:.1}"));
                } else {
                    out.push_str(&format!("{p:e}"));
                }
                out.push(')');
            } else {
                out.push_str(&format!("{p:.1}"));
            }
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            print_node(a, vars, 0, out);
            out.push(')');
        }
    }
    if parens {
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stommel_rhs_at_origin() {
        let declared = names(&["p", "y", "m"]);
        let ast = parse("p - y*(1+m*(1-y)^2)", &declared).unwrap();
        let v = ast.eval_real(&[1.0, 0.0, 7.5]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn precedence_mul_before_add() {
        let ast = parse("1+2*3", &[]).unwrap();
        assert_eq!(ast.eval_real(&[]).unwrap(), 7.0);
    }

    #[test]
    fn undeclared_identifier_is_named() {
        let declared = names(&["x"]);
        match parse("x + q", &declared) {
            Err(ParseError::UndeclaredIdentifier { name, .. }) => assert_eq!(name, "q"),
            other => panic!("expected undeclared-identifier error, got {other:?}"),
        }
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let ast = parse("-2^2", &[]).unwrap();
        assert_eq!(ast.eval_real(&[]).unwrap(), -4.0);
    }

    #[test]
    fn non_constant_exponent_rejected() {
        let declared = names(&["x"]);
        assert!(matches!(
            parse("2^x", &declared),
            Err(ParseError::NonConstantExponent { .. })
        ));
        // Constant arithmetic folds fine.
        let ast = parse("x^(1+1)", &declared).unwrap();
        assert_eq!(ast.eval_real(&[3.0]).unwrap(), 9.0);
    }

    #[test]
    fn no_implicit_multiplication() {
        let declared = names(&["x"]);
        assert!(parse("2x", &declared).is_err());
    }

    #[test]
    fn left_associative_subtraction_and_division() {
        assert_eq!(parse("8-3-2", &[]).unwrap().eval_real(&[]).unwrap(), 3.0);
        assert_eq!(parse("8/4/2", &[]).unwrap().eval_real(&[]).unwrap(), 1.0);
    }

    #[test]
    fn jet_of_x_squared() {
        let declared = names(&["x"]);
        let ast = parse("x^2", &declared).unwrap();
        let jet = ast.eval_jet(&[Jet2::state_var(3.0, 2)]).unwrap();
        assert_eq!(jet.partial(0, 0).unwrap(), 9.0);
        assert_eq!(jet.partial(1, 0).unwrap(), 6.0);
        assert_eq!(jet.partial(2, 0).unwrap(), 2.0);
    }

    #[test]
    fn stommel_rhs_derivatives_at_y_equals_one() {
        let declared = names(&["y", "p", "m"]);
        let ast = parse("p - y*(1+m*(1-y)^2)", &declared).unwrap();
        let m = 7.5;
        let jet = ast
            .eval_jet(&[
                Jet2::state_var(1.0, 4),
                Jet2::param_var(0.9, 4),
                Jet2::constant(m, 4),
            ])
            .unwrap();
        // f_y = -1 and f_yy = 4m - 6m at y = 1.
        assert!((jet.partial(1, 0).unwrap() + 1.0).abs() < 1e-14);
        assert!((jet.partial(2, 0).unwrap() - (4.0 * m - 6.0 * m)).abs() < 1e-12);
        assert_eq!(jet.partial(2, 0).unwrap(), -15.0);
    }

    #[test]
    fn abs_rejected_near_zero_only_for_jets() {
        let declared = names(&["x"]);
        let ast = parse("abs(x)", &declared).unwrap();
        assert_eq!(ast.eval_real(&[0.0]).unwrap(), 0.0);
        assert!(ast.eval_jet(&[Jet2::state_var(0.0, 2)]).is_err());
        let jet = ast.eval_jet(&[Jet2::state_var(-3.0, 2)]).unwrap();
        assert_eq!(jet.value(), 3.0);
    }

    #[test]
    fn fractional_power_needs_positive_base() {
        let declared = names(&["x"]);
        let ast = parse("x^0.5", &declared).unwrap();
        assert!(ast.eval_real(&[-1.0]).is_err());
        assert!(ast.eval_jet(&[Jet2::state_var(-1.0, 2)]).is_err());
        assert!((ast.eval_real(&[4.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pretty_print_reparses_to_equal_ast() {
        let declared = names(&["x", "mu", "m"]);
        for text in [
            "mu - x^2 + 0.3*x^3",
            "-(x + mu)*exp(x/(1.0 + m))",
            "x - -mu",
            "(x + 1.0)^(-2.0) / tanh(m)",
            "1.0 - 2.0 - 3.0",
            "sqrt(1.0 + x^2)*sin(mu)",
        ] {
            let ast = parse(text, &declared).unwrap();
            let printed = ast.pretty();
            let reparsed = parse(&printed, &declared)
                .unwrap_or_else(|e| panic!("`{printed}` failed to reparse: {e}"));
            assert_eq!(ast, reparsed, "round-trip differs for `{text}` -> `{printed}`");
        }
    }

    #[test]
    fn jet_value_matches_real_eval_on_random_expressions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let declared = names(&["x", "mu"]);

        // Random expression builder over safe operations.
        fn random_expr(rng: &mut impl rand::Rng, depth: usize) -> String {
            if depth == 0 {
                return match rng.random_range(0..3) {
                    0 => "x".to_string(),
                    1 => "mu".to_string(),
                    _ => format!("{:.3}", rng.random_range(0.1..3.0f64)),
                };
            }
            let a = random_expr(rng, depth - 1);
            let b = random_expr(rng, depth - 1);
            match rng.random_range(0..7) {
                0 => format!("({a} + {b})"),
                1 => format!("({a} - {b})"),
                2 => format!("({a}*{b})"),
                3 => format!("sin({a})"),
                4 => format!("cos({a})"),
                5 => format!("exp(0.3*{a})"),
                _ => format!("({a}^2 + 1.0)"),
            }
        }

        let mut checked = 0;
        while checked < 1000 {
            let text = random_expr(&mut rng, 3);
            let ast = parse(&text, &declared).unwrap();
            let x: f64 = rng.random_range(-1.5..1.5);
            let mu: f64 = rng.random_range(-1.5..1.5);
            let real = match ast.eval_real(&[x, mu]) {
                Ok(v) if v.is_finite() => v,
                _ => continue,
            };
            let jet = match ast.eval_jet(&[Jet2::state_var(x, 3), Jet2::param_var(mu, 3)]) {
                Ok(j) => j,
                Err(_) => continue,
            };
            let diff = (jet.partial(0, 0).unwrap() - real).abs();
            assert!(
                diff <= 1e-14 * real.abs().max(1.0),
                "jet/real mismatch for `{text}`: {diff}"
            );
            checked += 1;
        }
    }
}
