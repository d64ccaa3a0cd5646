//! The rule-script language that defines the example game.
//!
//! A script is an ordered list of guarded statements, one per line in the
//! canonical text form:
//!
//! ```text
//! 3: IF y < 0 THEN game_over
//! 7: IF action == Right AND NOT solid(1, 0) THEN x = x + 1
//! ```
//!
//! Statements are evaluated top to bottom every tick. A statement whose guard
//! holds is "executed" and its effect is applied before the next guard is
//! evaluated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ScriptError;
use crate::game::{Action, ActorKind};

/// Index of a statement inside its script.
pub type StatementId = usize;

/// Readable player/world registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Jump,
    Score,
    Tick,
    Action,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::X, Var::Y, Var::Jump, Var::Score, Var::Tick, Var::Action];

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Jump => "jump",
            Var::Score => "score",
            Var::Tick => "tick",
            Var::Action => "action",
        }
    }

    /// Registers a statement effect may write.
    pub fn assignable(self) -> bool {
        matches!(self, Var::X | Var::Y | Var::Jump | Var::Score)
    }

    fn from_name(s: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelOp {
    Lt,
    Gt,
    Eq,
}

impl RelOp {
    pub const ALL: [RelOp; 3] = [RelOp::Lt, RelOp::Gt, RelOp::Eq];

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Gt => ">",
            RelOp::Eq => "==",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            RelOp::Lt => lhs < rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Eq => lhs == rhs,
        }
    }

    pub fn from_symbol(s: &str) -> Option<RelOp> {
        RelOp::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Rem,
}

impl ArithOp {
    pub const ALL: [ArithOp; 4] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Rem];

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Rem => "%",
        }
    }

    /// Wrapping arithmetic; remainder by zero yields zero.
    pub fn apply(self, lhs: i64, rhs: i64) -> i64 {
        match self {
            ArithOp::Add => lhs.wrapping_add(rhs),
            ArithOp::Sub => lhs.wrapping_sub(rhs),
            ArithOp::Mul => lhs.wrapping_mul(rhs),
            ArithOp::Rem => {
                if rhs == 0 {
                    0
                } else {
                    lhs.wrapping_rem(rhs)
                }
            }
        }
    }

    pub fn from_symbol(s: &str) -> Option<ArithOp> {
        ArithOp::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Lit(i64),
    Var(Var),
    /// An action name; evaluates to the action's ordinal.
    Action(Action),
    /// `rand(n)`: a draw in `[0, n)` from the world generator, `0` when `n <= 0`.
    Rand(i64),
}

/// At most one binary operator; the language has no precedence rules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arith {
    pub lhs: Operand,
    pub rhs: Option<(ArithOp, Operand)>,
}

impl Arith {
    pub fn operand(lhs: Operand) -> Self {
        Arith { lhs, rhs: None }
    }

    pub fn binary(lhs: Operand, op: ArithOp, rhs: Operand) -> Self {
        Arith { lhs, rhs: Some((op, rhs)) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Guard {
    True,
    Cmp(Arith, RelOp, Arith),
    /// Tile solidity at the player's position offset by `(dx, dy)`.
    Solid(i64, i64),
    /// The player shares a cell with a live actor of the kind.
    Touch(ActorKind),
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    GameOver,
    Assign(Var, Arith),
    /// Kill every live actor of the kind on the player's cell.
    Collect(ActorKind),
    /// Reverse the patrol direction of every live actor of the kind.
    Flip(ActorKind),
    /// Advance every live actor of the kind one cell along its patrol.
    Patrol(ActorKind),
    /// No effect. Statement deletion rewrites a statement's effect to this.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleStatement {
    pub id: StatementId,
    pub guard: Guard,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleScript {
    statements: Vec<RuleStatement>,
}

impl RuleScript {
    /// Builds a script, checking ids are `0..n` in order and every effect is
    /// well formed.
    pub fn new(statements: Vec<RuleStatement>) -> Result<Self, ScriptError> {
        for (index, stmt) in statements.iter().enumerate() {
            if stmt.id != index {
                return Err(ScriptError::NonContiguousId { expected: index, found: stmt.id });
            }
            validate_statement(stmt).map_err(|message| ScriptError::Invalid { line: index + 1, message })?;
        }
        Ok(RuleScript { statements })
    }

    pub fn statements(&self) -> &[RuleStatement] {
        &self.statements
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn statement(&self, id: StatementId) -> Option<&RuleStatement> {
        self.statements.get(id)
    }

    /// Returns a copy with statement `id` replaced.
    pub fn with_statement(&self, replacement: RuleStatement) -> Result<RuleScript, ScriptError> {
        let id = replacement.id;
        if id >= self.statements.len() {
            return Err(ScriptError::UnknownStatement(id));
        }
        let mut statements = self.statements.clone();
        statements[id] = replacement;
        RuleScript::new(statements)
    }

    /// Canonical text, one statement per line with a trailing newline.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        for stmt in &self.statements {
            out.push_str(&stmt.to_string());
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 prefix of the canonical text; identifies the script in
    /// trace and test files.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Parses the canonical text form. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut statements = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let stmt = parse_statement(line).map_err(|message| ScriptError::Invalid { line: lineno + 1, message })?;
            statements.push(stmt);
        }
        RuleScript::new(statements)
    }
}

impl FromStr for RuleScript {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleScript::parse(s)
    }
}

fn validate_statement(stmt: &RuleStatement) -> Result<(), String> {
    match &stmt.effect {
        Effect::Assign(var, _) if !var.assignable() => Err(format!("`{}` is read-only", var.name())),
        Effect::Collect(ActorKind::Player) | Effect::Flip(ActorKind::Player) | Effect::Patrol(ActorKind::Player) => {
            Err("effect target must be a non-player actor".into())
        }
        _ => Ok(()),
    }?;
    validate_guard(&stmt.guard)
}

fn validate_guard(guard: &Guard) -> Result<(), String> {
    match guard {
        Guard::Touch(ActorKind::Player) => Err("touch(player) is meaningless".into()),
        Guard::Not(inner) => validate_guard(inner),
        Guard::And(a, b) => {
            validate_guard(a)?;
            validate_guard(b)
        }
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Printing

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Lit(v) => write!(f, "{v}"),
            Operand::Var(v) => f.write_str(v.name()),
            Operand::Action(a) => f.write_str(a.name()),
            Operand::Rand(n) => write!(f, "rand({n})"),
        }
    }
}

impl fmt::Display for Arith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.lhs)?;
        if let Some((op, rhs)) = &self.rhs {
            write!(f, " {} {}", op.symbol(), rhs)?;
        }
        Ok(())
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => f.write_str("TRUE"),
            Guard::Cmp(lhs, op, rhs) => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Guard::Solid(dx, dy) => write!(f, "solid({dx}, {dy})"),
            Guard::Touch(kind) => write!(f, "touch({})", kind.script_name()),
            Guard::Not(inner) => match inner.as_ref() {
                Guard::And(..) => write!(f, "NOT ({inner})"),
                _ => write!(f, "NOT {inner}"),
            },
            Guard::And(a, b) => match b.as_ref() {
                Guard::And(..) => write!(f, "{a} AND ({b})"),
                _ => write!(f, "{a} AND {b}"),
            },
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::GameOver => f.write_str("game_over"),
            Effect::Assign(var, value) => write!(f, "{} = {value}", var.name()),
            Effect::Collect(kind) => write!(f, "collect({})", kind.script_name()),
            Effect::Flip(kind) => write!(f, "flip({})", kind.script_name()),
            Effect::Patrol(kind) => write!(f, "patrol({})", kind.script_name()),
            Effect::Skip => f.write_str("skip"),
        }
    }
}

impl fmt::Display for RuleStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: IF {} THEN {}", self.id, self.guard, self.effect)
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Int(i64),
    Sym(&'static str),
}

const SYMBOLS: [&str; 12] = ["==", "<", ">", "+", "-", "*", "%", "(", ")", ",", ":", "="];

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = src[start..i].parse::<i64>().map_err(|e| format!("bad integer at column {}: {e}", start + 1))?;
            toks.push(Tok::Int(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Tok::Word(src[start..i].to_string()));
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            toks.push(Tok::Sym(sym));
            i += sym.len();
        } else {
            return Err(format!("unexpected character `{c}` at column {}", i + 1));
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn expect_word(&mut self, w: &str) -> Result<(), String> {
        match self.next() {
            Some(Tok::Word(x)) if x == w => Ok(()),
            other => Err(format!("expected `{w}`, found {}", describe(other.as_ref()))),
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), String> {
        match self.next() {
            Some(Tok::Sym(x)) if x == s => Ok(()),
            other => Err(format!("expected `{s}`, found {}", describe(other.as_ref()))),
        }
    }

    fn int(&mut self) -> Result<i64, String> {
        let negative = if self.at_sym("-") {
            self.pos += 1;
            true
        } else {
            false
        };
        match self.next() {
            Some(Tok::Int(v)) => Ok(if negative { -v } else { v }),
            other => Err(format!("expected integer, found {}", describe(other.as_ref()))),
        }
    }

    fn kind(&mut self) -> Result<ActorKind, String> {
        match self.next() {
            Some(Tok::Word(w)) => ActorKind::from_script_name(&w).ok_or_else(|| format!("unknown actor kind `{w}`")),
            other => Err(format!("expected actor kind, found {}", describe(other.as_ref()))),
        }
    }

    fn kind_call(&mut self) -> Result<ActorKind, String> {
        self.expect_sym("(")?;
        let kind = self.kind()?;
        self.expect_sym(")")?;
        Ok(kind)
    }

    fn operand(&mut self) -> Result<Operand, String> {
        match self.peek().cloned() {
            Some(Tok::Int(_)) | Some(Tok::Sym("-")) => Ok(Operand::Lit(self.int()?)),
            Some(Tok::Word(w)) => {
                self.pos += 1;
                if w == "rand" {
                    self.expect_sym("(")?;
                    let n = self.int()?;
                    self.expect_sym(")")?;
                    Ok(Operand::Rand(n))
                } else if let Some(var) = Var::from_name(&w) {
                    Ok(Operand::Var(var))
                } else if let Some(action) = Action::from_name(&w) {
                    Ok(Operand::Action(action))
                } else {
                    Err(format!("unknown name `{w}`"))
                }
            }
            other => Err(format!("expected operand, found {}", describe(other.as_ref()))),
        }
    }

    fn arith(&mut self) -> Result<Arith, String> {
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Sym(s)) => ArithOp::from_symbol(s),
            _ => None,
        };
        match op {
            Some(op) => {
                self.pos += 1;
                let rhs = self.operand()?;
                Ok(Arith::binary(lhs, op, rhs))
            }
            None => Ok(Arith::operand(lhs)),
        }
    }

    fn guard(&mut self) -> Result<Guard, String> {
        let mut acc = self.unary()?;
        while self.at_word("AND") {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = Guard::And(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Guard, String> {
        if self.at_word("NOT") {
            self.pos += 1;
            return Ok(Guard::Not(Box::new(self.unary()?)));
        }
        if self.at_sym("(") {
            self.pos += 1;
            let inner = self.guard()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        if self.at_word("TRUE") {
            self.pos += 1;
            return Ok(Guard::True);
        }
        if self.at_word("solid") {
            self.pos += 1;
            self.expect_sym("(")?;
            let dx = self.int()?;
            self.expect_sym(",")?;
            let dy = self.int()?;
            self.expect_sym(")")?;
            return Ok(Guard::Solid(dx, dy));
        }
        if self.at_word("touch") {
            self.pos += 1;
            return Ok(Guard::Touch(self.kind_call()?));
        }
        let lhs = self.arith()?;
        let op = match self.next() {
            Some(Tok::Sym(s)) => RelOp::from_symbol(s).ok_or_else(|| format!("expected comparison, found `{s}`"))?,
            other => return Err(format!("expected comparison, found {}", describe(other.as_ref()))),
        };
        let rhs = self.arith()?;
        Ok(Guard::Cmp(lhs, op, rhs))
    }

    fn effect(&mut self) -> Result<Effect, String> {
        let word = match self.next() {
            Some(Tok::Word(w)) => w,
            other => return Err(format!("expected effect, found {}", describe(other.as_ref()))),
        };
        match word.as_str() {
            "game_over" => Ok(Effect::GameOver),
            "skip" => Ok(Effect::Skip),
            "collect" => Ok(Effect::Collect(self.kind_call()?)),
            "flip" => Ok(Effect::Flip(self.kind_call()?)),
            "patrol" => Ok(Effect::Patrol(self.kind_call()?)),
            name => {
                let var = Var::from_name(name).ok_or_else(|| format!("unknown effect `{name}`"))?;
                self.expect_sym("=")?;
                Ok(Effect::Assign(var, self.arith()?))
            }
        }
    }
}

fn describe(tok: Option<&Tok>) -> String {
    match tok {
        None => "end of line".into(),
        Some(Tok::Word(w)) => format!("`{w}`"),
        Some(Tok::Int(v)) => format!("`{v}`"),
        Some(Tok::Sym(s)) => format!("`{s}`"),
    }
}

/// Parses a single `id: IF guard THEN effect` line.
pub fn parse_statement(line: &str) -> Result<RuleStatement, String> {
    let mut p = Parser { toks: tokenize(line)?, pos: 0 };
    let id = match p.next() {
        Some(Tok::Int(v)) if v >= 0 => v as StatementId,
        other => return Err(format!("expected statement id, found {}", describe(other.as_ref()))),
    };
    p.expect_sym(":")?;
    p.expect_word("IF")?;
    let guard = p.guard()?;
    p.expect_word("THEN")?;
    let effect = p.effect()?;
    if let Some(extra) = p.peek() {
        return Err(format!("trailing input {}", describe(Some(extra))));
    }
    let stmt = RuleStatement { id, guard, effect };
    validate_statement(&stmt)?;
    Ok(stmt)
}
