//! Arithmetic formula language used by every adaptive numeric field.
//!
//! Grammar (EBNF, whitespace between tokens is insignificant):
//!
//! ```text
//! expr    = term , { ( "+" | "-" ) , term } ;
//! term    = unary , { ( "*" | "/" ) , unary } ;
//! unary   = "-" , unary | primary ;
//! primary = number | ident | "(" , expr , ")" ;
//! number  = digits , [ "." , [ digits ] ] , [ exponent ]
//!         | "." , digits , [ exponent ] ;
//! exponent = ( "e" | "E" ) , [ "+" | "-" ] , digits ;
//! ident   = ( letter | "_" ) , { letter | digit | "_" }
//!         | "`" , { any character except "`" } , "`" ;
//! ```
//!
//! Binary operators are left associative. Parameters that are absent from the
//! environment evaluate to `0`. A non-finite final result is replaced by `0`
//! and reported through [`Evaluated::sanitized`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Deepest parenthesis / unary nesting the parser accepts.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    #[inline]
    pub fn apply(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            BinOp::Add => lhs + rhs,
            BinOp::Sub => lhs - rhs,
            BinOp::Mul => lhs * rhs,
            BinOp::Div => lhs / rhs,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Parsed formula tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(String),
    Neg(Box<Expr>),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
}

/// Result of evaluating a formula. `value` is always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    /// Set when the raw result was NaN or infinite and was replaced by `0`.
    pub sanitized: bool,
}

impl Evaluated {
    #[inline]
    pub fn from_raw(raw: f64) -> Self {
        if raw.is_finite() {
            Evaluated { value: raw, sanitized: false }
        } else {
            Evaluated { value: 0.0, sanitized: true }
        }
    }
}

impl Expr {
    pub fn eval(&self, env: &ParamEnv) -> Evaluated {
        Evaluated::from_raw(self.eval_raw(env))
    }

    fn eval_raw(&self, env: &ParamEnv) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Param(name) => env.get(name),
            Expr::Neg(inner) => -inner.eval_raw(env),
            Expr::BinOp(op, lhs, rhs) => op.apply(lhs.eval_raw(env), rhs.eval_raw(env)),
        }
    }

    /// Exact set of parameter names referenced by the tree.
    pub fn referenced_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Param(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(inner) => inner.collect_params(out),
            Expr::BinOp(_, lhs, rhs) => {
                lhs.collect_params(out);
                rhs.collect_params(out);
            }
        }
    }

    /// Number of arithmetic operations (unary and binary) in the tree.
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Param(_) => 0,
            Expr::Neg(inner) => 1 + inner.op_count(),
            Expr::BinOp(_, lhs, rhs) => 1 + lhs.op_count() + rhs.op_count(),
        }
    }
}

/// True when `name` can be written without backtick quoting.
pub fn is_plain_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// True when `name` is usable as a parameter name (plain or backtick-quoted).
pub fn is_valid_param_name(name: &str) -> bool {
    !name.is_empty() && !name.contains('`')
}

/// External parameter values. Non-finite values are rejected on insertion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamEnv {
    values: HashMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parameter `{name}` has non-finite value {value}")]
pub struct NonFiniteParam {
    pub name: String,
    pub value: f64,
}

impl ParamEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), NonFiniteParam> {
        if !value.is_finite() {
            return Err(NonFiniteParam { name: name.to_owned(), value });
        }
        match self.values.get_mut(name) {
            Some(slot) => *slot = value,
            None => {
                self.values.insert(name.to_owned(), value);
            }
        }
        Ok(())
    }

    /// Value of `name`, or `0` when absent.
    #[inline]
    pub fn get(&self, name: &str) -> f64 {
        self.values.get(name).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for ParamEnv {
    /// Non-finite entries are dropped.
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut env = ParamEnv::new();
        for (name, value) in iter {
            let name = name.into();
            let _ = env.set(&name, value);
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Number,
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Token::Number => "number",
            Token::Ident => "identifier",
            Token::Plus => "`+`",
            Token::Minus => "`-`",
            Token::Star => "`*`",
            Token::Slash => "`/`",
            Token::LParen => "`(`",
            Token::RParen => "`)`",
            Token::End => "end of input",
        })
    }
}

/// Syntax error with the character offset where parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at position {position}: {message} (expected {})", format_expected(.expected))]
pub struct FormulaError {
    /// Zero-based character (not byte) index.
    pub position: usize,
    pub message: String,
    pub expected: Vec<Token>,
}

fn format_expected(expected: &[Token]) -> String {
    if expected.is_empty() {
        return "nothing".into();
    }
    expected.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn parse_formula(text: &str) -> Result<Expr, FormulaError> {
    let mut parser = Parser::new(text);
    let expr = parser.expr(0)?;
    parser.skip_ws();
    if parser.pos < parser.chars.len() {
        let c = parser.chars[parser.pos];
        let message = if c == ')' { "unmatched `)`".to_owned() } else { format!("unexpected character `{c}`") };
        return Err(parser.error(message, AFTER_OPERAND.to_vec()));
    }
    Ok(expr)
}

pub fn eval_formula(expr: &Expr, env: &ParamEnv) -> Evaluated {
    expr.eval(env)
}

pub fn referenced_params(expr: &Expr) -> BTreeSet<String> {
    expr.referenced_params()
}

const OPERAND_START: &[Token] = &[Token::Number, Token::Ident, Token::Minus, Token::LParen];
const AFTER_OPERAND: &[Token] = &[Token::Plus, Token::Minus, Token::Star, Token::Slash, Token::End];

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser { chars: text.chars().collect(), pos: 0 }
    }

    fn error(&self, message: impl Into<String>, expected: Vec<Token>) -> FormulaError {
        FormulaError { position: self.pos, message: message.into(), expected }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, FormulaError> {
        let mut lhs = self.term(depth)?;
        loop {
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term(depth)?;
            lhs = Expr::BinOp(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr, FormulaError> {
        let mut lhs = self.unary(depth)?;
        loop {
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary(depth)?;
            lhs = Expr::BinOp(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self, depth: usize) -> Result<Expr, FormulaError> {
        if depth >= MAX_DEPTH {
            return Err(self.error("expression nested too deeply", Vec::new()));
        }
        if self.peek() == Some('-') {
            self.pos += 1;
            let inner = self.unary(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary(depth)
    }

    fn primary(&mut self, depth: usize) -> Result<Expr, FormulaError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input", OPERAND_START.to_vec())),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr(depth + 1)?;
                if self.peek() == Some(')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    let mut expected = vec![Token::RParen];
                    expected.extend_from_slice(&AFTER_OPERAND[..4]);
                    let message = match self.peek() {
                        None => "unclosed `(`".to_owned(),
                        Some(c) => format!("unexpected character `{c}`"),
                    };
                    Err(self.error(message, expected))
                }
            }
            Some('`') => self.quoted_ident(),
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                Ok(Expr::Param(self.chars[start..self.pos].iter().collect()))
            }
            Some(c) => Err(self.error(format!("unexpected character `{c}`"), OPERAND_START.to_vec())),
        }
    }

    fn quoted_ident(&mut self) -> Result<Expr, FormulaError> {
        let open = self.pos;
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos] != '`' {
            self.pos += 1;
        }
        if self.pos == self.chars.len() {
            self.pos = open;
            return Err(self.error("unterminated quoted identifier", Vec::new()));
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if name.is_empty() {
            self.pos = open;
            return Err(self.error("empty quoted identifier", vec![Token::Ident]));
        }
        self.pos += 1;
        Ok(Expr::Param(name))
    }

    fn number(&mut self) -> Result<Expr, FormulaError> {
        let start = self.pos;
        let digits = |p: &mut Parser| {
            let s = p.pos;
            while p.pos < p.chars.len() && p.chars[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let int_digits = digits(self);
        let mut frac_digits = 0;
        if self.chars.get(self.pos) == Some(&'.') {
            self.pos += 1;
            frac_digits = digits(self);
        }
        if int_digits == 0 && frac_digits == 0 {
            self.pos = start;
            return Err(self.error("malformed number", vec![Token::Number]));
        }
        if matches!(self.chars.get(self.pos), Some('e') | Some('E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.chars.get(self.pos), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.error("malformed exponent", vec![Token::Number]));
            }
        }
        let literal: String = self.chars[start..self.pos].iter().collect();
        let value: f64 = literal.parse().map_err(|_| FormulaError {
            position: start,
            message: format!("malformed number `{literal}`"),
            expected: vec![Token::Number],
        })?;
        if !value.is_finite() {
            return Err(FormulaError {
                position: start,
                message: format!("number `{literal}` is out of range"),
                expected: vec![Token::Number],
            });
        }
        Ok(Expr::Const(value))
    }
}

/// A formula together with its verbatim source text.
///
/// Serializes as the source string; equality compares the source.
#[derive(Debug, Clone)]
pub struct Formula {
    source: String,
    expr: Expr,
}

impl Formula {
    pub fn parse(source: &str) -> Result<Self, FormulaError> {
        Ok(Formula { source: source.to_owned(), expr: parse_formula(source)? })
    }

    pub fn constant(value: f64) -> Self {
        let source = if value.is_finite() { format_number(value) } else { "0".to_owned() };
        Formula::parse(&source).expect("formatted constant parses")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, env: &ParamEnv) -> Evaluated {
        self.expr.eval(env)
    }
}

/// Shortest round-trip decimal rendering (`15`, `0.4`, `-2.5`).
pub fn format_number(value: f64) -> String {
    value.to_string()
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let source = String::deserialize(deserializer)?;
        Formula::parse(&source).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str) -> Box<Expr> {
        Box::new(Expr::Param(name.into()))
    }

    fn c(v: f64) -> Box<Expr> {
        Box::new(Expr::Const(v))
    }

    #[test]
    fn parses_button_radius_formula() {
        let e = parse_formula("activation * 15 + 15").unwrap();
        assert_eq!(e, Expr::BinOp(BinOp::Add, Box::new(Expr::BinOp(BinOp::Mul, p("activation"), c(15.0))), c(15.0)));
    }

    #[test]
    fn parses_ratio_of_params() {
        let e = parse_formula("taking_damage / health").unwrap();
        assert_eq!(e, Expr::BinOp(BinOp::Div, p("taking_damage"), p("health")));
    }

    #[test]
    fn undeclared_params_parse() {
        let e = parse_formula("1 - health").unwrap();
        assert_eq!(e, Expr::BinOp(BinOp::Sub, c(1.0), p("health")));
    }

    #[test]
    fn unbalanced_paren_reports_end_position() {
        let err = parse_formula("2 * (3").unwrap_err();
        assert_eq!(err.position, 6);
        assert!(err.expected.contains(&Token::RParen));
    }

    #[test]
    fn precedence_and_associativity() {
        let env = ParamEnv::new();
        let v = |s: &str| parse_formula(s).unwrap().eval(&env).value;
        assert_eq!(v("1 + 2 * 3"), 7.0);
        assert_eq!(v("(1 + 2) * 3"), 9.0);
        assert_eq!(v("8 - 4 - 2"), 2.0);
        assert_eq!(v("8 / 4 / 2"), 1.0);
        assert_eq!(v("-2 * 3"), -6.0);
        assert_eq!(v("2 * -3"), -6.0);
        assert_eq!(v("--4"), 4.0);
        assert_eq!(v("1.5e2 + .5"), 150.5);
    }

    #[test]
    fn backtick_identifiers() {
        let e = parse_formula("`hand speed (m/s)` * 2").unwrap();
        assert_eq!(e.referenced_params().into_iter().collect::<Vec<_>>(), vec!["hand speed (m/s)".to_owned()]);
        assert!(parse_formula("`open").is_err());
        assert!(parse_formula("``").is_err());
    }

    #[test]
    fn syntax_errors() {
        assert!(parse_formula("").is_err());
        assert!(parse_formula("1 +").is_err());
        assert!(parse_formula("1 2").is_err());
        assert!(parse_formula("(1))").is_err());
        assert!(parse_formula("1 % 2").is_err());
        assert!(parse_formula("1e999").is_err());
        assert!(parse_formula("1e").is_err());
        assert!(parse_formula(".").is_err());
        let deep = "(".repeat(MAX_DEPTH + 1) + "1" + &")".repeat(MAX_DEPTH + 1);
        assert!(parse_formula(&deep).is_err());
    }

    #[test]
    fn error_positions_count_characters() {
        let err = parse_formula("é + ").unwrap_err();
        assert_eq!(err.position, 0);
        let err = parse_formula("`é` + ").unwrap_err();
        assert_eq!(err.position, 6);
    }

    #[test]
    fn eval_goldens() {
        let radius = parse_formula("activation * 15 + 15").unwrap();
        let env: ParamEnv = [("activation", 0.0)].into_iter().collect();
        assert_eq!(radius.eval(&env), Evaluated { value: 15.0, sanitized: false });
        let env: ParamEnv = [("activation", 1.0)].into_iter().collect();
        assert_eq!(radius.eval(&env).value, 30.0);

        let am = parse_formula("taking_damage / health").unwrap();
        let env: ParamEnv = [("taking_damage", 1.0), ("health", 0.0)].into_iter().collect();
        assert_eq!(am.eval(&env), Evaluated { value: 0.0, sanitized: true });

        let missing = parse_formula("missing_param + 2").unwrap();
        assert_eq!(missing.eval(&ParamEnv::new()).value, 2.0);
    }

    #[test]
    fn intermediate_infinities_only_sanitized_at_the_end() {
        let env = ParamEnv::new();
        let e = parse_formula("1 / (1 / 0)").unwrap();
        assert_eq!(e.eval(&env), Evaluated { value: 0.0, sanitized: false });
        let e = parse_formula("1 / 0 - 1 / 0").unwrap();
        assert_eq!(e.eval(&env), Evaluated { value: 0.0, sanitized: true });
    }

    #[test]
    fn referenced_params_sets() {
        let names = |s: &str| parse_formula(s).unwrap().referenced_params().into_iter().collect::<Vec<_>>();
        assert_eq!(names("activation * 15 + 15"), vec!["activation"]);
        assert!(names("3 + 4").is_empty());
        assert_eq!(names("a + a*b"), vec!["a", "b"]);
    }

    #[test]
    fn env_rejects_non_finite() {
        let mut env = ParamEnv::new();
        assert!(env.set("progress", f64::NAN).is_err());
        assert!(env.set("progress", f64::INFINITY).is_err());
        env.set("progress", 50.0).unwrap();
        assert_eq!(env.get("progress"), 50.0);
    }

    #[test]
    fn formula_keeps_source_verbatim() {
        let f = Formula::parse("1   -  health").unwrap();
        assert_eq!(f.source(), "1   -  health");
        assert_eq!(serde_json::to_string(&f).unwrap(), "\"1   -  health\"");
    }

    #[test]
    fn identifier_predicates() {
        assert!(is_plain_identifier("taking_damage"));
        assert!(is_plain_identifier("_x1"));
        assert!(!is_plain_identifier("1x"));
        assert!(!is_plain_identifier("a b"));
        assert!(is_valid_param_name("a b"));
        assert!(!is_valid_param_name("a`b"));
        assert!(!is_valid_param_name(""));
    }
}
