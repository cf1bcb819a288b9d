use super::Node;

/// Formats a constant with 17 significant digits, trailing zeros removed.
/// Plain decimal notation is used for exponents in `-4..=16`, scientific
/// notation otherwise; non-finite values print as `inf`, `-inf` and `NaN`.
/// The result parses back to the same bits.
pub fn format_constant(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return if value.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{value:.16e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if negative { "-" } else { "" };

    if (-4..=16).contains(&exponent) {
        let point = exponent + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
        } else {
            let (int, frac) = digits.split_at(point as usize);
            format!("{int}.{frac}")
        };
        format!("{sign}{body}")
    } else {
        let (lead, rest) = digits.split_at(1);
        if rest.is_empty() {
            format!("{sign}{lead}e{exponent}")
        } else {
            format!("{sign}{lead}.{rest}e{exponent}")
        }
    }
}

// Atoms, calls and literals bind tightest.
const ATOM: u8 = 3;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Binary(op, _, _) => op.precedence(),
        _ => ATOM,
    }
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Const(v) => out.push_str(&format_constant(*v)),
        Node::Var(i) => {
            out.push('x');
            out.push_str(&(i + 1).to_string());
        }
        Node::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_node(a, out);
            out.push(')');
        }
        Node::Binary(op, a, b) => {
            let p = op.precedence();
            // Left-associative grammar: the left child needs parentheses only
            // when it binds looser; the right child also when it ties.
            write_child(a, precedence(a) < p, out);
            out.push(' ');
            out.push(op.symbol());
            out.push(' ');
            write_child(b, precedence(b) <= p, out);
        }
    }
}

fn write_child(node: &Node, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        write_node(node, out);
        out.push(')');
    } else {
        write_node(node, out);
    }
}

pub(super) fn to_string(root: &Node) -> String {
    let mut out = String::new();
    write_node(root, &mut out);
    out
}
