//! Expression trees for candidate densities.
//!
//! An [`Expression`] is an immutable operator tree over variables `x1..xd`
//! and real constants. There is no unary negation node: `-t` is represented
//! as `0 - t`, so a parsed negation costs two extra nodes. Negative numeric
//! literals are the exception and parse directly to a negative constant.

mod parse;
mod print;
mod random;
mod simplify;

use std::fmt;
use std::hash::{Hash, Hasher};

use ndarray::ArrayView2;
use thiserror::Error;

pub use parse::parse;
pub(crate) use random::random_constant;
pub use random::{random_expression, random_leaf};
pub use simplify::simplify;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("function `{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown symbol `{name}` at byte {offset}")]
    UnknownSymbol { name: String, offset: usize },
    #[error("dimension mismatch: expression has {expected} variable(s), point has {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Flat operator kind, used to describe enabled operator sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Log,
    Pow2,
    Pow3,
    Cos,
    Sin,
    Const,
    Var,
}

impl Operator {
    pub fn arity(self) -> usize {
        match self {
            Operator::Add | Operator::Sub | Operator::Mul | Operator::Div => 2,
            Operator::Exp
            | Operator::Log
            | Operator::Pow2
            | Operator::Pow3
            | Operator::Cos
            | Operator::Sin => 1,
            Operator::Const | Operator::Var => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Exp,
    Log,
    Pow2,
    Pow3,
    Cos,
    Sin,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 6] = [
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Pow2,
        UnaryOp::Pow3,
        UnaryOp::Cos,
        UnaryOp::Sin,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.ln(),
            UnaryOp::Pow2 => x * x,
            UnaryOp::Pow3 => x * x * x,
            UnaryOp::Cos => x.cos(),
            UnaryOp::Sin => x.sin(),
        }
    }

    /// Name used by the expression grammar.
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Pow2 => "square",
            UnaryOp::Pow3 => "cube",
            UnaryOp::Cos => "cos",
            UnaryOp::Sin => "sin",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn operator(self) -> Operator {
        match self {
            UnaryOp::Exp => Operator::Exp,
            UnaryOp::Log => Operator::Log,
            UnaryOp::Pow2 => Operator::Pow2,
            UnaryOp::Pow3 => Operator::Pow3,
            UnaryOp::Cos => Operator::Cos,
            UnaryOp::Sin => Operator::Sin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
        }
    }

    pub fn operator(self) -> Operator {
        match self {
            BinaryOp::Add => Operator::Add,
            BinaryOp::Sub => Operator::Sub,
            BinaryOp::Mul => Operator::Mul,
            BinaryOp::Div => Operator::Div,
        }
    }
}

/// The operator set a search is allowed to use. Leaves (constants and
/// variables) are always available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSet {
    pub binary: Vec<BinaryOp>,
    pub unary: Vec<UnaryOp>,
}

impl OperatorSet {
    /// Binary `+ - * /` with unary `exp log pow2 pow3`.
    pub fn standard() -> Self {
        OperatorSet {
            binary: BinaryOp::ALL.to_vec(),
            unary: vec![UnaryOp::Exp, UnaryOp::Log, UnaryOp::Pow2, UnaryOp::Pow3],
        }
    }

    /// Binary `+ - * /` with unary `exp log pow2 cos sin`.
    pub fn trigonometric() -> Self {
        OperatorSet {
            binary: BinaryOp::ALL.to_vec(),
            unary: vec![
                UnaryOp::Exp,
                UnaryOp::Log,
                UnaryOp::Pow2,
                UnaryOp::Cos,
                UnaryOp::Sin,
            ],
        }
    }

    /// Parses a comma-separated list such as `+,-,*,/,exp,pow2`.
    /// `pow2`/`square` and `pow3`/`cube` are accepted as synonyms.
    pub fn parse_list(text: &str) -> Result<Self, String> {
        let mut set = OperatorSet {
            binary: Vec::new(),
            unary: Vec::new(),
        };
        for raw in text.split(',') {
            let tok = raw.trim();
            if tok.is_empty() {
                continue;
            }
            match tok {
                "+" => set.binary.push(BinaryOp::Add),
                "-" => set.binary.push(BinaryOp::Sub),
                "*" => set.binary.push(BinaryOp::Mul),
                "/" => set.binary.push(BinaryOp::Div),
                "pow2" => set.unary.push(UnaryOp::Pow2),
                "pow3" => set.unary.push(UnaryOp::Pow3),
                other => match UnaryOp::from_name(other) {
                    Some(op) => set.unary.push(op),
                    None => return Err(format!("unknown operator `{other}`")),
                },
            }
        }
        set.binary.sort();
        set.binary.dedup();
        set.unary.sort();
        set.unary.dedup();
        Ok(set)
    }

    pub fn contains(&self, op: Operator) -> bool {
        match op {
            Operator::Const | Operator::Var => true,
            _ => {
                self.binary.iter().any(|b| b.operator() == op)
                    || self.unary.iter().any(|u| u.operator() == op)
            }
        }
    }
}

impl fmt::Display for OperatorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<String> = self.binary.iter().map(|b| b.symbol().to_string()).collect();
        names.extend(self.unary.iter().map(|u| match u {
            UnaryOp::Pow2 => "pow2".to_string(),
            UnaryOp::Pow3 => "pow3".to_string(),
            other => other.name().to_string(),
        }));
        write!(f, "{}", names.join(","))
    }
}

/// A node of an expression tree. Variable indices are zero-based
/// (`Var(0)` prints as `x1`).
#[derive(Debug, Clone)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

// Constants compare by bit pattern so that structural identity is exact.
impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Unary(o1, a), Node::Unary(o2, b)) => o1 == o2 && a == b,
            (Node::Binary(o1, a1, b1), Node::Binary(o2, a2, b2)) => {
                o1 == o2 && a1 == a2 && b1 == b2
            }
            _ => false,
        }
    }
}

impl Eq for Node {}

impl Hash for Node {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Node::Const(v) => {
                0u8.hash(state);
                v.to_bits().hash(state);
            }
            Node::Var(i) => {
                1u8.hash(state);
                i.hash(state);
            }
            Node::Unary(op, a) => {
                2u8.hash(state);
                op.hash(state);
                a.hash(state);
            }
            Node::Binary(op, a, b) => {
                3u8.hash(state);
                op.hash(state);
                a.hash(state);
                b.hash(state);
            }
        }
    }
}

impl Node {
    pub fn constant(v: f64) -> Node {
        Node::Const(v)
    }

    pub fn var(index: usize) -> Node {
        Node::Var(index)
    }

    pub fn unary(op: UnaryOp, child: Node) -> Node {
        Node::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn operator(&self) -> Operator {
        match self {
            Node::Const(_) => Operator::Const,
            Node::Var(_) => Operator::Var,
            Node::Unary(op, _) => op.operator(),
            Node::Binary(op, _, _) => op.operator(),
        }
    }

    /// Number of nodes in this subtree.
    pub fn size(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Unary(_, a) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Const(_) | Node::Var(_))
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Unary(_, a) => a.max_var(),
            Node::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    #[inline]
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Node::Const(v) => *v,
            Node::Var(i) => point[*i],
            Node::Unary(op, a) => op.apply(a.eval(point)),
            Node::Binary(op, a, b) => op.apply(a.eval(point), b.eval(point)),
        }
    }

    /// Column-wise evaluation: `columns[i]` holds variable `i` for every point.
    fn eval_columns(&self, columns: &[Vec<f64>], len: usize) -> Vec<f64> {
        match self {
            Node::Const(v) => vec![*v; len],
            Node::Var(i) => columns[*i].clone(),
            Node::Unary(op, a) => {
                let mut out = a.eval_columns(columns, len);
                let op = *op;
                for v in out.iter_mut() {
                    *v = op.apply(*v);
                }
                out
            }
            Node::Binary(op, a, b) => {
                let mut out = a.eval_columns(columns, len);
                let rhs = b.eval_columns(columns, len);
                let op = *op;
                for (l, r) in out.iter_mut().zip(rhs) {
                    *l = op.apply(*l, r);
                }
                out
            }
        }
    }

    /// Visits nodes in pre-order.
    pub fn preorder(&self) -> Vec<&Node> {
        let mut out = Vec::with_capacity(self.size());
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            match n {
                Node::Unary(_, a) => stack.push(a),
                Node::Binary(_, a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
                _ => {}
            }
        }
        out
    }

    /// Returns the subtree at pre-order position `index`.
    pub fn subtree(&self, index: usize) -> Option<&Node> {
        self.preorder().get(index).copied()
    }

    /// Returns a copy of this tree with the pre-order node `index` replaced.
    pub fn replace_subtree(&self, index: usize, replacement: Node) -> Node {
        fn go(
            node: &Node,
            index: usize,
            counter: &mut usize,
            replacement: &mut Option<Node>,
        ) -> Node {
            let here = *counter;
            *counter += 1;
            if here == index {
                // Skip the counter past this subtree; its nodes are not visited.
                *counter += node.size() - 1;
                return replacement.take().expect("replacement used once");
            }
            match node {
                Node::Const(_) | Node::Var(_) => node.clone(),
                Node::Unary(op, a) => {
                    Node::Unary(*op, Box::new(go(a, index, counter, replacement)))
                }
                Node::Binary(op, a, b) => {
                    let a = go(a, index, counter, replacement);
                    let b = go(b, index, counter, replacement);
                    Node::Binary(*op, Box::new(a), Box::new(b))
                }
            }
        }
        let mut counter = 0;
        let mut replacement = Some(replacement);
        go(self, index, &mut counter, &mut replacement)
    }

    /// Applies `f` to every variable index.
    pub fn map_vars(&self, f: &impl Fn(usize) -> usize) -> Node {
        match self {
            Node::Const(v) => Node::Const(*v),
            Node::Var(i) => Node::Var(f(*i)),
            Node::Unary(op, a) => Node::Unary(*op, Box::new(a.map_vars(f))),
            Node::Binary(op, a, b) => {
                Node::Binary(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f)))
            }
        }
    }
}

/// An immutable expression tree over `var_count` variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expression {
    root: Node,
    var_count: usize,
}

impl Expression {
    /// Wraps `root`, checking that every variable index is below `var_count`.
    pub fn new(root: Node, var_count: usize) -> Result<Self, ExprError> {
        if let Some(max) = root.max_var() {
            if max >= var_count {
                return Err(ExprError::UnknownSymbol {
                    name: format!("x{}", max + 1),
                    offset: 0,
                });
            }
        }
        Ok(Expression { root, var_count })
    }

    pub fn constant(value: f64, var_count: usize) -> Self {
        Expression {
            root: Node::Const(value),
            var_count,
        }
    }

    pub fn parse(text: &str, var_count: usize) -> Result<Self, ExprError> {
        parse(text, var_count)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    /// Total node count.
    pub fn complexity(&self) -> usize {
        self.root.size()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.var_count {
            return Err(ExprError::DimensionMismatch {
                expected: self.var_count,
                found: point.len(),
            });
        }
        Ok(self.root.eval(point))
    }

    /// Row-wise evaluation over an `n x d` matrix. Results are bit-identical
    /// to calling [`Expression::evaluate`] on each row.
    pub fn evaluate_batch(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>, ExprError> {
        if points.ncols() != self.var_count {
            return Err(ExprError::DimensionMismatch {
                expected: self.var_count,
                found: points.ncols(),
            });
        }
        let columns: Vec<Vec<f64>> = points.columns().into_iter().map(|c| c.to_vec()).collect();
        Ok(self.root.eval_columns(&columns, points.nrows()))
    }

    /// Evaluates over pre-split columns (`columns[i]` = values of variable `i`).
    /// All columns must have the same length.
    pub fn evaluate_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>, ExprError> {
        if columns.len() != self.var_count {
            return Err(ExprError::DimensionMismatch {
                expected: self.var_count,
                found: columns.len(),
            });
        }
        let len = columns.first().map_or(0, Vec::len);
        Ok(self.root.eval_columns(columns, len))
    }

    pub fn simplify(&self) -> Expression {
        simplify(self)
    }

    /// Constant leaves in preorder.
    pub fn constants(&self) -> Vec<f64> {
        self.root
            .preorder()
            .into_iter()
            .filter_map(|n| match n {
                Node::Const(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    /// Replaces the constant leaves, in preorder, by `values`.
    ///
    /// # Panics
    /// If `values` has a different length than [`Expression::constants`].
    pub fn with_constants(&self, values: &[f64]) -> Expression {
        fn go(node: &Node, values: &mut std::slice::Iter<'_, f64>) -> Node {
            match node {
                Node::Const(_) => Node::Const(*values.next().expect("one value per constant")),
                Node::Var(i) => Node::Var(*i),
                Node::Unary(op, a) => Node::Unary(*op, Box::new(go(a, values))),
                Node::Binary(op, a, b) => {
                    let a = go(a, values);
                    Node::Binary(*op, Box::new(a), Box::new(go(b, values)))
                }
            }
        }
        let mut it = values.iter();
        let root = go(&self.root, &mut it);
        assert!(it.next().is_none(), "one value per constant");
        Expression {
            root,
            var_count: self.var_count,
        }
    }

    /// Re-targets this expression to `var_count` variables, mapping each
    /// variable index through `mapping`.
    pub fn remap_vars(&self, mapping: &[usize], var_count: usize) -> Result<Expression, ExprError> {
        Expression::new(self.root.map_vars(&|i| mapping[i]), var_count)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::to_string(&self.root))
    }
}

/// Canonical string form, the inverse of [`parse`].
pub fn to_string(e: &Expression) -> String {
    print::to_string(e.root())
}

pub use print::format_constant;
