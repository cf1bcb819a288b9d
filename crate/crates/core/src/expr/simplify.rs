use super::{BinaryOp, Expression, Node, UnaryOp};

/// Shallow algebraic cleanup: constant folding, merging of constants in
/// nested scale (`*`, `/`) and offset (`+`, `-`) chains, plus `x*1`, `x+0`,
/// `x-0`, `x/1` and `exp(log(x))` elimination. Never increases node count.
///
/// Folds that would produce a non-finite constant are skipped, so every
/// constant in the result stays printable.
pub fn simplify(e: &Expression) -> Expression {
    Expression {
        root: simplify_node(e.root()),
        var_count: e.var_count(),
    }
}

fn is_const(node: &Node, value: f64) -> bool {
    matches!(node, Node::Const(v) if *v == value)
}

fn simplify_node(node: &Node) -> Node {
    match node {
        Node::Const(_) | Node::Var(_) => node.clone(),
        Node::Unary(op, a) => {
            let a = simplify_node(a);
            if let Node::Const(v) = a {
                let folded = op.apply(v);
                if folded.is_finite() {
                    return Node::Const(folded);
                }
            }
            if *op == UnaryOp::Exp {
                if let Node::Unary(UnaryOp::Log, inner) = a {
                    return *inner;
                }
            }
            Node::Unary(*op, Box::new(a))
        }
        Node::Binary(op, a, b) => {
            let a = simplify_node(a);
            let b = simplify_node(b);
            if let (Node::Const(x), Node::Const(y)) = (&a, &b) {
                let folded = op.apply(*x, *y);
                if folded.is_finite() {
                    return Node::Const(folded);
                }
            }
            if let Some(merged) = merge_chain(*op, &a, &b) {
                return merged;
            }
            match op {
                BinaryOp::Add if is_const(&b, 0.0) => a,
                BinaryOp::Add if is_const(&a, 0.0) => b,
                BinaryOp::Sub if is_const(&b, 0.0) => a,
                BinaryOp::Mul if is_const(&b, 1.0) => a,
                BinaryOp::Mul if is_const(&a, 1.0) => b,
                BinaryOp::Div if is_const(&b, 1.0) => a,
                _ => Node::Binary(*op, Box::new(a), Box::new(b)),
            }
        }
    }
}

/// `node = k * core` (or `k / core` when `inverted`).
fn scale_form(node: &Node) -> Option<(f64, &Node, bool)> {
    match node {
        Node::Binary(BinaryOp::Mul, a, b) => match (&**a, &**b) {
            (Node::Const(c), y) | (y, Node::Const(c)) => Some((*c, y, false)),
            _ => None,
        },
        Node::Binary(BinaryOp::Div, a, b) => match (&**a, &**b) {
            (y, Node::Const(c)) => Some((1.0 / c, y, false)),
            (Node::Const(c), y) => Some((*c, y, true)),
            _ => None,
        },
        _ => None,
    }
}

/// `node = k + core` (or `k - core` when `negated`).
fn offset_form(node: &Node) -> Option<(f64, &Node, bool)> {
    match node {
        Node::Binary(BinaryOp::Add, a, b) => match (&**a, &**b) {
            (Node::Const(c), y) | (y, Node::Const(c)) => Some((*c, y, false)),
            _ => None,
        },
        Node::Binary(BinaryOp::Sub, a, b) => match (&**a, &**b) {
            (y, Node::Const(c)) => Some((-c, y, false)),
            (Node::Const(c), y) => Some((*c, y, true)),
            _ => None,
        },
        _ => None,
    }
}

fn rebuild_scale(k: f64, core: &Node, inverted: bool) -> Option<Node> {
    if !k.is_finite() {
        return None;
    }
    let (k, core) = (Box::new(Node::Const(k)), Box::new(core.clone()));
    Some(if inverted {
        Node::Binary(BinaryOp::Div, k, core)
    } else {
        Node::Binary(BinaryOp::Mul, k, core)
    })
}

fn rebuild_offset(k: f64, core: &Node, negated: bool) -> Option<Node> {
    if !k.is_finite() {
        return None;
    }
    let (k, core) = (Box::new(Node::Const(k)), Box::new(core.clone()));
    Some(if negated {
        Node::Binary(BinaryOp::Sub, k, core)
    } else {
        Node::Binary(BinaryOp::Add, core, k)
    })
}

/// Merges a constant operand into a chain on the other side, e.g.
/// `2 * (x1 / 4)` into `0.5 * x1` and `1 - (x1 + 3)` into `-2 - x1`.
fn merge_chain(op: BinaryOp, a: &Node, b: &Node) -> Option<Node> {
    match (op, a, b) {
        (BinaryOp::Mul, Node::Const(c), x) | (BinaryOp::Mul, x, Node::Const(c)) => {
            let (k, y, inv) = scale_form(x)?;
            rebuild_scale(c * k, y, inv)
        }
        (BinaryOp::Div, x, Node::Const(c)) => {
            let (k, y, inv) = scale_form(x)?;
            rebuild_scale(k / c, y, inv)
        }
        (BinaryOp::Div, Node::Const(c), x) => {
            let (k, y, inv) = scale_form(x)?;
            rebuild_scale(c / k, y, !inv)
        }
        (BinaryOp::Add, Node::Const(c), x) | (BinaryOp::Add, x, Node::Const(c)) => {
            let (k, y, neg) = offset_form(x)?;
            rebuild_offset(c + k, y, neg)
        }
        (BinaryOp::Sub, x, Node::Const(c)) => {
            let (k, y, neg) = offset_form(x)?;
            rebuild_offset(k - c, y, neg)
        }
        (BinaryOp::Sub, Node::Const(c), x) => {
            let (k, y, neg) = offset_form(x)?;
            rebuild_offset(c - k, y, !neg)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn s(text: &str) -> String {
        simplify(&parse(text, 2).unwrap()).to_string()
    }

    #[test]
    fn identities() {
        assert_eq!(s("x1 * 1 + 0"), "x1");
        assert_eq!(s("2 + 3"), "5");
        assert_eq!(s("exp(0 - 0)"), "1");
        assert_eq!(s("1 * x2 / 1 - 0"), "x2");
        assert_eq!(s("exp(log(x1 + x2))"), "x1 + x2");
        assert_eq!(s("0 + square(x1)"), "square(x1)");
    }

    #[test]
    fn folds_nested_constants() {
        assert_eq!(s("x1 * (2 * 3 + cube(2))"), "x1 * 14");
        assert_eq!(s("-(2)"), "-2");
    }

    #[test]
    fn merges_constant_chains() {
        assert_eq!(s("2 * (x1 / 4)"), "0.5 * x1");
        assert_eq!(s("8 / (2 / (x1 * 2))"), "8 * x1");
        assert_eq!(s("3 / (x2 * 0.5)"), "6 / x2");
        assert_eq!(s("1 - (x1 + 3)"), "-2 - x1");
        assert_eq!(s("(x1 - 1) + 4"), "x1 + 3");
        assert_eq!(s("5 - (2 - x2)"), "x2 + 3");
    }

    #[test]
    fn leaves_non_finite_folds_alone() {
        assert_eq!(s("log(0 - 1) + x1"), "log(-1) + x1");
        assert_eq!(s("1 / 0"), "1 / 0");
    }

    #[test]
    fn keeps_subtraction_from_zero() {
        assert_eq!(s("0 - x1"), "0 - x1");
    }
}
