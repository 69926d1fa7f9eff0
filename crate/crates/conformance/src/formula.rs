//! Reference formula interpreter.
//!
//! Works straight from source text: tokenize, convert to postfix with the
//! shunting-yard algorithm, then evaluate on a value stack. Shares no code with
//! the engine's recursive-descent parser.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(char),
    Neg,
    Open,
    Close,
}

fn tokenize(src: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Num(text.parse().ok()?));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Name(chars[start..i].iter().collect()));
        } else if c == '`' {
            let end = chars[i + 1..].iter().position(|&c| c == '`')? + i + 1;
            out.push(Tok::Name(chars[i + 1..end].iter().collect()));
            i = end + 1;
        } else if c == '(' {
            out.push(Tok::Open);
            i += 1;
        } else if c == ')' {
            out.push(Tok::Close);
            i += 1;
        } else if "+-*/".contains(c) {
            let prefix = matches!(out.last(), None | Some(Tok::Op(_)) | Some(Tok::Neg) | Some(Tok::Open));
            out.push(if c == '-' && prefix { Tok::Neg } else { Tok::Op(c) });
            i += 1;
        } else {
            return None;
        }
    }
    Some(out)
}

fn precedence(t: &Tok) -> u8 {
    match t {
        Tok::Op('+') | Tok::Op('-') => 1,
        Tok::Op(_) => 2,
        Tok::Neg => 3,
        _ => 0,
    }
}

fn to_postfix(tokens: Vec<Tok>) -> Option<Vec<Tok>> {
    let mut out = Vec::new();
    let mut stack: Vec<Tok> = Vec::new();
    for t in tokens {
        match t {
            Tok::Num(_) | Tok::Name(_) => out.push(t),
            Tok::Neg => stack.push(t),
            Tok::Op(_) => {
                // binary operators are left associative; prefix minus binds tighter
                while let Some(top) = stack.last() {
                    if *top != Tok::Open && precedence(top) >= precedence(&t) {
                        out.push(stack.pop()?);
                    } else {
                        break;
                    }
                }
                stack.push(t);
            }
            Tok::Open => stack.push(t),
            Tok::Close => loop {
                match stack.pop()? {
                    Tok::Open => break,
                    op => out.push(op),
                }
            },
        }
    }
    while let Some(t) = stack.pop() {
        if t == Tok::Open {
            return None;
        }
        out.push(t);
    }
    Some(out)
}

/// Raw value of `src` under `env` (absent names read as `0`), or `None` when
/// the text is not a well-formed formula. No sanitization is applied.
pub fn eval_raw(src: &str, env: &HashMap<String, f64>) -> Option<f64> {
    let mut stack: Vec<f64> = Vec::new();
    for t in to_postfix(tokenize(src)?)? {
        match t {
            Tok::Num(v) => stack.push(v),
            Tok::Name(n) => stack.push(env.get(&n).copied().unwrap_or(0.0)),
            Tok::Neg => {
                let v = stack.pop()?;
                stack.push(-v);
            }
            Tok::Op(op) => {
                let b = stack.pop()?;
                let a = stack.pop()?;
                stack.push(match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    _ => a / b,
                });
            }
            Tok::Open | Tok::Close => return None,
        }
    }
    match stack.as_slice() {
        [v] => Some(*v),
        _ => None,
    }
}

/// `(value, sanitized)`: a non-finite result becomes `0`.
pub fn eval(src: &str, env: &HashMap<String, f64>) -> (f64, bool) {
    let raw = eval_raw(src, env).expect("reference interpreter rejected a formula");
    if raw.is_finite() {
        (raw, false)
    } else {
        (0.0, true)
    }
}
