use thiserror::Error;

use super::{Assertion, Attr, Block, CmpOp, Literal, Scope};
use crate::game::ActorKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("column {column}: {message}")]
    Parse { column: usize, message: String },
    #[error("scope {scope} does not fit a trace of length {length}")]
    ScopeOutOfRange { scope: String, length: usize },
    #[error("trace has no actor of kind {0:?}")]
    UnknownActor(ActorKind),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |column: usize, message: String| DslError::Parse { column, message };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<i64>().map_err(|e| err(col, format!("unparsable value `{text}`: {e}")))?;
            out.push((col, Tok::Int(v)));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((col, Tok::Word(chars[start..i].iter().collect())));
        } else if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i == chars.len() {
                return Err(err(col, "unterminated string".into()));
            }
            out.push((col, Tok::Str(chars[start..i].iter().collect())));
            i += 1;
        } else if c == '=' && chars.get(i + 1) == Some(&'=') {
            out.push((col, Tok::Sym("==")));
            i += 2;
        } else {
            let sym = match c {
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '<' => "<",
                '>' => ">",
                _ => return Err(err(col, format!("unexpected character `{c}`"))),
            };
            out.push((col, Tok::Sym(sym)));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(c, _)| *c)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::Parse { column: self.column(), message: message.into() })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn word(&mut self) -> Result<String, DslError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Word(w))) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.fail("expected a block name"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Word(w))) if w == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail(format!("expected `{kw}`")),
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), DslError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Sym(x))) if *x == s => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail(format!("expected `{s}`")),
        }
    }

    fn step_index(&mut self) -> Result<usize, DslError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Int(v))) if *v >= 0 => {
                let v = *v as usize;
                self.pos += 1;
                Ok(v)
            }
            _ => self.fail("expected a non-negative step index"),
        }
    }

    fn actor(&mut self) -> Result<ActorKind, DslError> {
        let col = self.column();
        let w = self.word()?;
        ActorKind::from_block_name(&w).ok_or(DslError::Parse { column: col, message: format!("unknown actor block `{w}`") })
    }

    fn attr(&mut self) -> Result<Attr, DslError> {
        let col = self.column();
        let w = self.word()?;
        Attr::from_name(&w).ok_or(DslError::Parse { column: col, message: format!("unknown attribute block `{w}`") })
    }

    fn op(&mut self) -> Result<CmpOp, DslError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Sym(s))) if CmpOp::from_symbol(s).is_some() => {
                let op = CmpOp::from_symbol(s).unwrap();
                self.pos += 1;
                Ok(op)
            }
            _ => self.fail("expected an operator block (<, >, ==)"),
        }
    }

    fn value(&mut self) -> Result<Literal, DslError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(Literal::Int(v)),
            Some(Tok::Str(s)) => Ok(Literal::Str(s)),
            _ => {
                self.pos -= 1;
                self.fail("unparsable value: expected an integer or a quoted string")
            }
        }
    }

    fn checked_attr(&mut self, actor: ActorKind, col: usize) -> Result<Attr, DslError> {
        let attr = self.attr()?;
        if attr == Attr::Score && actor != ActorKind::Player {
            return Err(DslError::Parse { column: col, message: "only Player has a score".into() });
        }
        Ok(attr)
    }

    fn condition(&mut self) -> Result<Block, DslError> {
        let col = self.column();
        match self.word()?.as_str() {
            "Compare" => {
                self.sym("(")?;
                self.keyword("Attr")?;
                self.sym("(")?;
                let actor = self.actor()?;
                self.sym(",")?;
                let attr = self.checked_attr(actor, col)?;
                self.sym(")")?;
                self.sym(",")?;
                let op = self.op()?;
                self.sym(",")?;
                let value = self.value()?;
                self.close_call(3)?;
                Ok(Block::compare(actor, attr, op, value))
            }
            "Touching" => {
                self.sym("(")?;
                let a = self.actor()?;
                self.sym(",")?;
                let b = self.actor()?;
                self.close_call(2)?;
                Ok(Block::touching(a, b))
            }
            other => Err(DslError::Parse { column: col, message: format!("unknown condition block `{other}`") }),
        }
    }

    fn outcome(&mut self) -> Result<Block, DslError> {
        let col = self.column();
        match self.word()?.as_str() {
            "GameOver" => Ok(Block::game_over()),
            "ScoreIncreases" => Ok(Block::score_increases()),
            "AttributeIs" => {
                self.sym("(")?;
                let actor = self.actor()?;
                self.sym(",")?;
                let attr = self.checked_attr(actor, col)?;
                self.sym(",")?;
                let op = self.op()?;
                self.sym(",")?;
                let value = self.value()?;
                self.close_call(4)?;
                Ok(Block::attribute_is(actor, attr, op, value))
            }
            other => Err(DslError::Parse { column: col, message: format!("unknown outcome block `{other}`") }),
        }
    }

    /// Expects the closing parenthesis of a call with `arity` arguments.
    fn close_call(&mut self, arity: usize) -> Result<(), DslError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Sym(")"))) => {
                self.pos += 1;
                Ok(())
            }
            Some((_, Tok::Sym(","))) => self.fail(format!("arity mismatch: block takes {arity} arguments")),
            _ => self.fail("expected `)`"),
        }
    }

    fn scope(&mut self) -> Result<Scope, DslError> {
        let col = self.column();
        match self.word()?.as_str() {
            "GLOBAL" => Ok(Scope::Global),
            "AT" => Ok(Scope::AtStep(self.step_index()?)),
            "WINDOW" => {
                let a = self.step_index()?;
                let b = self.step_index()?;
                if a > b {
                    return Err(DslError::Parse { column: col, message: format!("window start {a} after end {b}") });
                }
                Ok(Scope::Window(a, b))
            }
            other => Err(DslError::Parse { column: col, message: format!("unknown scope `{other}`") }),
        }
    }
}

/// Parses one assertion in canonical (or loosely spaced) text form.
pub fn parse(text: &str) -> Result<Assertion, DslError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, end: text.chars().count() + 1 };
    let scope = p.scope()?;
    p.keyword("IF")?;
    let condition = p.condition()?;
    p.keyword("THEN")?;
    let outcome = p.outcome()?;
    if p.pos < p.toks.len() {
        return p.fail("trailing input after outcome");
    }
    Ok(Assertion::new(Block::if_then(condition, outcome), scope))
}

/// Normalizes spacing to the canonical form.
pub fn canonicalize(text: &str) -> Result<String, DslError> {
    parse(text).map(|a| a.to_text())
}
