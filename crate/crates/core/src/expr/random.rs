use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Expression, Node, OperatorSet};

/// Draws a random leaf: a variable with probability 1/2 (uniform over the
/// `d` variables), otherwise a constant `±exp(N(0, 1.5²))`.
pub fn random_leaf<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Node {
    if d > 0 && rng.random_bool(0.5) {
        Node::Var(rng.random_range(0..d))
    } else {
        random_constant(rng)
    }
}

pub(crate) fn random_constant<R: Rng + ?Sized>(rng: &mut R) -> Node {
    let z: f64 = StandardNormal.sample(rng);
    let magnitude = (1.5 * z).exp();
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Node::Const(sign * magnitude)
}

/// Grow-style random tree with complexity at most `max_size`.
///
/// A target size is drawn uniformly from `1..=max_size` and the tree is
/// grown to exactly that size when the operator set allows it (a size of 2
/// needs a unary operator; otherwise the generator falls back to a
/// smaller tree).
pub fn random_expression<R: Rng + ?Sized>(
    d: usize,
    max_size: usize,
    ops: &OperatorSet,
    rng: &mut R,
) -> Expression {
    let max_size = max_size.max(1);
    let target = rng.random_range(1..=max_size);
    Expression {
        root: grow(d, target, ops, rng),
        var_count: d,
    }
}

fn grow<R: Rng + ?Sized>(d: usize, budget: usize, ops: &OperatorSet, rng: &mut R) -> Node {
    let can_unary = budget >= 2 && !ops.unary.is_empty();
    let can_binary = budget >= 3 && !ops.binary.is_empty();
    // Prefer binary nodes when the budget is large so trees use it up.
    let use_binary = match (can_unary, can_binary) {
        (false, false) => return random_leaf(d, rng),
        (true, false) => false,
        (false, true) => true,
        (true, true) => rng.random_bool(0.7),
    };
    if use_binary {
        let op = ops.binary[rng.random_range(0..ops.binary.len())];
        let rest = budget - 1;
        let left = rng.random_range(1..rest);
        Node::binary(op, grow(d, left, ops, rng), grow(d, rest - left, ops, rng))
    } else {
        let op = ops.unary[rng.random_range(0..ops.unary.len())];
        Node::unary(op, grow(d, budget - 1, ops, rng))
    }
}
