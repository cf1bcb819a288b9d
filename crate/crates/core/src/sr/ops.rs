use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SrConfig;
use crate::expr::{random_constant, random_expression, random_leaf, Node};
use crate::Expression;

/// Mutation kinds with their selection weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    ReplaceOperator,
    PerturbConstant,
    ReplaceSubtree,
    Hoist,
    Insert,
}

impl Mutation {
    const WEIGHTS: [(Mutation, f64); 5] = [
        (Mutation::ReplaceOperator, 0.2),
        (Mutation::PerturbConstant, 0.35),
        (Mutation::ReplaceSubtree, 0.15),
        (Mutation::Hoist, 0.1),
        (Mutation::Insert, 0.2),
    ];

    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Mutation {
        let total: f64 = Self::WEIGHTS.iter().map(|w| w.1).sum();
        let mut u = rng.random::<f64>() * total;
        for (m, w) in Self::WEIGHTS {
            if u < w {
                return m;
            }
            u -= w;
        }
        Mutation::Hoist
    }
}

/// Applies one randomly chosen mutation. Results larger than `maxsize`,
/// or mutations that do not apply to the tree, are retried up to 10 times
/// before `e` is returned unchanged.
pub fn mutate<R: Rng + ?Sized>(e: &Expression, c: &SrConfig, rng: &mut R) -> Expression {
    for _ in 0..10 {
        let kind = Mutation::draw(rng);
        if let Some(root) = apply(e, kind, c, rng) {
            if root.size() <= c.maxsize {
                return Expression::new(root, e.var_count()).expect("variables stay in range");
            }
        }
    }
    e.clone()
}

/// Applies a specific mutation, or returns `None` when it does not apply.
pub(crate) fn apply<R: Rng + ?Sized>(
    e: &Expression,
    kind: Mutation,
    c: &SrConfig,
    rng: &mut R,
) -> Option<Node> {
    let root = e.root();
    let d = e.var_count();
    let size = root.size();
    match kind {
        Mutation::ReplaceOperator => {
            let idx = rng.random_range(0..size);
            let node = root.subtree(idx)?;
            let ops = &c.operators;
            let replacement = match node {
                Node::Const(_) | Node::Var(_) => random_leaf(d, rng),
                Node::Unary(_, a) => {
                    if ops.unary.is_empty() {
                        return None;
                    }
                    let op = ops.unary[rng.random_range(0..ops.unary.len())];
                    Node::Unary(op, a.clone())
                }
                Node::Binary(_, a, b) => {
                    if ops.binary.is_empty() {
                        return None;
                    }
                    let op = ops.binary[rng.random_range(0..ops.binary.len())];
                    Node::Binary(op, a.clone(), b.clone())
                }
            };
            Some(root.replace_subtree(idx, replacement))
        }
        Mutation::PerturbConstant => {
            let consts: Vec<usize> = root
                .preorder()
                .iter()
                .enumerate()
                .filter(|(_, n)| matches!(n, Node::Const(_)))
                .map(|(i, _)| i)
                .collect();
            if consts.is_empty() {
                return None;
            }
            let idx = consts[rng.random_range(0..consts.len())];
            let Some(Node::Const(v)) = root.subtree(idx) else {
                unreachable!("index selected from constants")
            };
            Some(root.replace_subtree(idx, Node::Const(perturb_constant(*v, rng))))
        }
        Mutation::ReplaceSubtree => {
            let idx = rng.random_range(0..size);
            let old = root.subtree(idx)?.size();
            let room = c.maxsize.saturating_sub(size - old).clamp(1, 7);
            let fresh = random_expression(d, room, &c.operators, rng).into_root();
            Some(root.replace_subtree(idx, fresh))
        }
        Mutation::Hoist => {
            let internal: Vec<usize> = root
                .preorder()
                .iter()
                .enumerate()
                .filter(|(_, n)| !n.is_leaf())
                .map(|(i, _)| i)
                .collect();
            if internal.is_empty() {
                return None;
            }
            let idx = internal[rng.random_range(0..internal.len())];
            let child = match root.subtree(idx)? {
                Node::Unary(_, a) => (**a).clone(),
                Node::Binary(_, a, b) => {
                    if rng.random_bool(0.5) {
                        (**a).clone()
                    } else {
                        (**b).clone()
                    }
                }
                _ => unreachable!("index selected from internal nodes"),
            };
            Some(root.replace_subtree(idx, child))
        }
        Mutation::Insert => {
            let idx = rng.random_range(0..size);
            let node = root.subtree(idx)?.clone();
            let ops = &c.operators;
            let total = ops.binary.len() + ops.unary.len();
            if total == 0 {
                return None;
            }
            let pick = rng.random_range(0..total);
            let wrapped = if pick < ops.binary.len() {
                let leaf = random_leaf(d, rng);
                if rng.random_bool(0.5) {
                    Node::binary(ops.binary[pick], node, leaf)
                } else {
                    Node::binary(ops.binary[pick], leaf, node)
                }
            } else {
                Node::unary(ops.unary[pick - ops.binary.len()], node)
            };
            Some(root.replace_subtree(idx, wrapped))
        }
    }
}

/// Multiplies by `exp(s z)` with `z ~ N(0, 1)` and `s` log-uniform in
/// `[0.01, 1]`. A zero constant is redrawn from the leaf distribution.
fn perturb_constant<R: Rng + ?Sized>(v: f64, rng: &mut R) -> f64 {
    if v == 0.0 {
        if let Node::Const(fresh) = random_constant(rng) {
            return fresh;
        }
    }
    let s = 10f64.powf(rng.random_range(-2.0..=0.0));
    let z: f64 = StandardNormal.sample(rng);
    v * (s * z).exp()
}

/// Swaps uniformly chosen subtrees. An offspring larger than `maxsize` is
/// replaced by its own parent.
pub fn crossover<R: Rng + ?Sized>(
    a: &Expression,
    b: &Expression,
    maxsize: usize,
    rng: &mut R,
) -> (Expression, Expression) {
    let ia = rng.random_range(0..a.complexity());
    // Identical parents swap the same subtree and so reproduce themselves.
    let ib = if a == b {
        ia
    } else {
        rng.random_range(0..b.complexity())
    };
    let sa = a.root().subtree(ia).expect("index in range").clone();
    let sb = b.root().subtree(ib).expect("index in range").clone();
    let ca = a.root().replace_subtree(ia, sb);
    let cb = b.root().replace_subtree(ib, sa);
    let pick = |child: Node, parent: &Expression| {
        if child.size() <= maxsize {
            Expression::new(child, parent.var_count()).expect("variables stay in range")
        } else {
            parent.clone()
        }
    };
    (pick(ca, a), pick(cb, b))
}
