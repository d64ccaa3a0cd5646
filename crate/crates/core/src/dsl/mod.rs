//! Block-based assertions.
//!
//! An assertion is a tree of coloured blocks rooted at an `IfThen` construct,
//! plus the time scope it applies to. The closed grammar is:
//!
//! ```text
//! assertion := scope IF condition THEN outcome
//! scope     := GLOBAL | AT <t> | WINDOW <t1> <t2>
//! condition := Compare(Attr(actor, attr), op, value) | Touching(actor, actor)
//! outcome   := GameOver | ScoreIncreases | AttributeIs(actor, attr, op, value)
//! actor     := Player | Coin | Bomb | Goal
//! attr      := x | y | score | alive
//! op        := < | > | ==
//! value     := integer | "quoted string"
//! ```
//!
//! Only the grey `IfThen` construct costs action points.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::game::ActorKind;

mod eval;
mod parse;

pub use eval::{evaluate, evaluate_extended, Verdict, VerdictStatus};
pub use parse::{canonicalize, parse, DslError};

/// Colour category of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Grey.
    Construct,
    /// Dark blue.
    Actor,
    /// Light blue.
    Attribute,
    /// Green.
    Operator,
    /// Purple.
    Value,
    /// Orange.
    Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Attr {
    X,
    Y,
    Score,
    Alive,
}

impl Attr {
    pub const ALL: [Attr; 4] = [Attr::X, Attr::Y, Attr::Score, Attr::Alive];

    pub fn name(self) -> &'static str {
        match self {
            Attr::X => "x",
            Attr::Y => "y",
            Attr::Score => "score",
            Attr::Alive => "alive",
        }
    }

    pub fn from_name(s: &str) -> Option<Attr> {
        Attr::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Less,
    Greater,
    Equal,
}

impl CmpOp {
    pub const ALL: [CmpOp; 3] = [CmpOp::Less, CmpOp::Greater, CmpOp::Equal];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Less => "<",
            CmpOp::Greater => ">",
            CmpOp::Equal => "==",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|o| o.symbol() == s)
    }
}

/// Block kind; each kind belongs to exactly one category and has a fixed
/// arity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    IfThen,
    Actor(ActorKind),
    Attribute(Attr),
    Compare(CmpOp),
    Touching,
    Number,
    Text,
    GameOver,
    ScoreIncreases,
    AttributeIs,
}

impl BlockKind {
    pub fn category(self) -> Category {
        match self {
            BlockKind::IfThen => Category::Construct,
            BlockKind::Actor(_) => Category::Actor,
            BlockKind::Attribute(_) => Category::Attribute,
            BlockKind::Compare(_) | BlockKind::Touching => Category::Operator,
            BlockKind::Number | BlockKind::Text => Category::Value,
            BlockKind::GameOver | BlockKind::ScoreIncreases | BlockKind::AttributeIs => Category::Outcome,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            BlockKind::IfThen | BlockKind::Compare(_) | BlockKind::Touching => 2,
            BlockKind::Attribute(_) | BlockKind::AttributeIs => 1,
            BlockKind::Actor(_)
            | BlockKind::Number
            | BlockKind::Text
            | BlockKind::GameOver
            | BlockKind::ScoreIncreases => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub children: Vec<Block>,
    pub payload: Option<Literal>,
}

impl Block {
    pub fn category(&self) -> Category {
        self.kind.category()
    }

    fn leaf(kind: BlockKind) -> Block {
        Block { kind, children: Vec::new(), payload: None }
    }

    pub fn actor(kind: ActorKind) -> Block {
        Block::leaf(BlockKind::Actor(kind))
    }

    pub fn attr(actor: ActorKind, attr: Attr) -> Block {
        Block { kind: BlockKind::Attribute(attr), children: vec![Block::actor(actor)], payload: None }
    }

    pub fn value(lit: Literal) -> Block {
        let kind = match lit {
            Literal::Int(_) => BlockKind::Number,
            Literal::Str(_) => BlockKind::Text,
        };
        Block { kind, children: Vec::new(), payload: Some(lit) }
    }

    pub fn compare(actor: ActorKind, attr: Attr, op: CmpOp, value: Literal) -> Block {
        Block {
            kind: BlockKind::Compare(op),
            children: vec![Block::attr(actor, attr), Block::value(value)],
            payload: None,
        }
    }

    pub fn touching(a: ActorKind, b: ActorKind) -> Block {
        Block { kind: BlockKind::Touching, children: vec![Block::actor(a), Block::actor(b)], payload: None }
    }

    pub fn game_over() -> Block {
        Block::leaf(BlockKind::GameOver)
    }

    pub fn score_increases() -> Block {
        Block::leaf(BlockKind::ScoreIncreases)
    }

    pub fn attribute_is(actor: ActorKind, attr: Attr, op: CmpOp, value: Literal) -> Block {
        Block { kind: BlockKind::AttributeIs, children: vec![Block::compare(actor, attr, op, value)], payload: None }
    }

    pub fn if_then(condition: Block, outcome: Block) -> Block {
        Block { kind: BlockKind::IfThen, children: vec![condition, outcome], payload: None }
    }

    /// Visits the tree depth-first, parents before children.
    pub fn walk<'a>(&'a self, out: &mut Vec<&'a Block>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }
}

/// When an assertion is checked. Step indices follow [`crate::game::Trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    AtStep(usize),
    Window(usize, usize),
    Global,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::AtStep(t) => write!(f, "AT {t}"),
            Scope::Window(a, b) => write!(f, "WINDOW {a} {b}"),
            Scope::Global => f.write_str("GLOBAL"),
        }
    }
}

pub type PlayerId = usize;
pub type TraceId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assertion {
    pub root: Block,
    pub scope: Scope,
    pub owner: PlayerId,
    pub source_trace: TraceId,
}

impl Assertion {
    pub fn new(root: Block, scope: Scope) -> Self {
        Assertion { root, scope, owner: 0, source_trace: 0 }
    }

    pub fn condition(&self) -> &Block {
        &self.root.children[0]
    }

    pub fn outcome(&self) -> &Block {
        &self.root.children[1]
    }

    /// Canonical one-line text. Owner and source trace are not part of it.
    pub fn to_text(&self) -> String {
        format!("{} IF {} THEN {}", self.scope, render_condition(self.condition()), render_outcome(self.outcome()))
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn render_attr(block: &Block) -> String {
    match (block.kind, block.children.first()) {
        (BlockKind::Attribute(attr), Some(Block { kind: BlockKind::Actor(actor), .. })) => {
            format!("Attr({}, {})", actor.block_name(), attr.name())
        }
        _ => "?".into(),
    }
}

fn render_payload(block: &Block) -> String {
    block.payload.as_ref().map_or_else(|| "?".into(), Literal::to_string)
}

fn render_condition(block: &Block) -> String {
    match block.kind {
        BlockKind::Compare(op) => {
            format!("Compare({}, {}, {})", render_attr(&block.children[0]), op.symbol(), render_payload(&block.children[1]))
        }
        BlockKind::Touching => match (block.children[0].kind, block.children[1].kind) {
            (BlockKind::Actor(a), BlockKind::Actor(b)) => format!("Touching({}, {})", a.block_name(), b.block_name()),
            _ => "?".into(),
        },
        _ => "?".into(),
    }
}

fn render_outcome(block: &Block) -> String {
    match block.kind {
        BlockKind::GameOver => "GameOver".into(),
        BlockKind::ScoreIncreases => "ScoreIncreases".into(),
        BlockKind::AttributeIs => {
            let cmp = &block.children[0];
            let (actor, attr) = match (cmp.children[0].kind, cmp.children[0].children.first().map(|c| c.kind)) {
                (BlockKind::Attribute(attr), Some(BlockKind::Actor(actor))) => (actor.block_name(), attr.name()),
                _ => ("?", "?"),
            };
            let op = match cmp.kind {
                BlockKind::Compare(op) => op.symbol(),
                _ => "?",
            };
            format!("AttributeIs({actor}, {attr}, {op}, {})", render_payload(&cmp.children[1]))
        }
        _ => "?".into(),
    }
}

/// Structural equality of block trees and scopes, compared block by block.
/// A single differing block makes two assertions distinct.
pub fn blocks_equal(a: &Assertion, b: &Assertion) -> bool {
    if a.scope != b.scope {
        return false;
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    a.root.walk(&mut left);
    b.root.walk(&mut right);
    left.len() == right.len()
        && left.iter().zip(&right).all(|(x, y)| {
            x.kind == y.kind && x.payload == y.payload && x.children.len() == y.children.len()
        })
}

/// Action-point price of a block kind. Only the grey construct is priced.
pub fn construct_cost(kind: BlockKind, if_then_price: u32) -> u32 {
    match kind.category() {
        Category::Construct => if_then_price,
        _ => 0,
    }
}

/// Default `IfThen` price used by [`construct_cost`] callers without a match
/// configuration.
pub const DEFAULT_IF_THEN_PRICE: u32 = 5;

/// The three assertions of the reference example: bomb contact ends the
/// game, falling below the grid ends the game, coins raise the score.
pub fn reference_assertions() -> Vec<Assertion> {
    [
        "GLOBAL IF Touching(Player, Bomb) THEN GameOver",
        "GLOBAL IF Compare(Attr(Player, y), <, 0) THEN GameOver",
        "GLOBAL IF Touching(Player, Coin) THEN ScoreIncreases",
    ]
    .iter()
    .map(|t| parse(t).expect("reference assertion parses"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_and_arity_are_fixed() {
        let a = parse("AT 2 IF Compare(Attr(Player, x), ==, 3) THEN AttributeIs(Coin, alive, ==, 0)").unwrap();
        let mut blocks = Vec::new();
        a.root.walk(&mut blocks);
        for b in blocks {
            assert_eq!(b.children.len(), b.kind.arity(), "{:?}", b.kind);
            assert_eq!(b.payload.is_some(), b.category() == Category::Value);
        }
        assert_eq!(a.root.category(), Category::Construct);
    }

    #[test]
    fn blocks_equal_cases() {
        let a = parse("GLOBAL IF Compare(Attr(Player, y), <, 0) THEN GameOver").unwrap();
        let b = parse("GLOBAL IF Compare(Attr(Player, y), <, 1) THEN GameOver").unwrap();
        assert!(blocks_equal(&a, &a));
        assert!(!blocks_equal(&a, &b));
        let mut windowed = a.clone();
        windowed.scope = Scope::Window(0, 40);
        assert!(!blocks_equal(&a, &windowed));
        let mut other_owner = a.clone();
        other_owner.owner = 1;
        other_owner.source_trace = 9;
        assert!(blocks_equal(&a, &other_owner));
    }

    #[test]
    fn only_constructs_cost() {
        assert_eq!(construct_cost(BlockKind::IfThen, DEFAULT_IF_THEN_PRICE), 5);
        for kind in [
            BlockKind::Actor(ActorKind::Player),
            BlockKind::Attribute(Attr::Y),
            BlockKind::Compare(CmpOp::Less),
            BlockKind::Touching,
            BlockKind::Number,
            BlockKind::GameOver,
        ] {
            assert_eq!(construct_cost(kind, DEFAULT_IF_THEN_PRICE), 0);
        }
        // No discount for a second purchase: the price is a pure table lookup.
        assert_eq!(construct_cost(BlockKind::IfThen, 5), construct_cost(BlockKind::IfThen, 5));
    }
}
