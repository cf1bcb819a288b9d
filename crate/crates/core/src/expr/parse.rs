use super::{BinaryOp, ExprError, Expression, Node, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and the byte offset it starts at.
    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' => {
                self.pos += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ExprError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut pos = start;
        let mut count = digits(&mut pos);
        if pos < bytes.len() && bytes[pos] == b'.' {
            pos += 1;
            count += digits(&mut pos);
        }
        if count == 0 {
            return Err(ExprError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
            let mut p = pos + 1;
            if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                p += 1;
            }
            if digits(&mut p) == 0 {
                return Err(ExprError::Syntax {
                    offset: pos,
                    message: "malformed exponent".into(),
                });
            }
            pos = p;
        }
        let text = &self.src[start..pos];
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        if !value.is_finite() {
            return Err(ExprError::Syntax {
                offset: start,
                message: format!("literal `{text}` is out of range"),
            });
        }
        self.pos = pos;
        Ok(Tok::Num(value))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    var_count: usize,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ExprError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.at,
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.tok != Tok::Op('-') {
            return self.primary();
        }
        self.advance()?;
        if let Tok::Num(v) = self.tok {
            self.advance()?;
            return Ok(Node::Const(-v));
        }
        let operand = self.unary()?;
        Ok(Node::binary(BinaryOp::Sub, Node::Const(0.0), operand))
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return self.syntax("expected `)`");
                }
                self.advance()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.advance()?;
                if self.tok == Tok::LParen {
                    self.call(&name, at)
                } else {
                    self.variable(&name, at)
                }
            }
            Tok::End => self.syntax("unexpected end of input"),
            other => self.syntax(format!("unexpected token {other:?}")),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<Node, ExprError> {
        let index = name
            .strip_prefix('x')
            .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|digits| digits.parse::<usize>().ok())
            .filter(|&i| i >= 1 && i <= self.var_count);
        match index {
            Some(i) => Ok(Node::Var(i - 1)),
            None => Err(ExprError::UnknownSymbol {
                name: name.to_string(),
                offset: at,
            }),
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Node, ExprError> {
        let op = UnaryOp::from_name(name).ok_or_else(|| ExprError::UnknownSymbol {
            name: name.to_string(),
            offset: at,
        })?;
        // Current token is `(`.
        self.advance()?;
        let mut args = Vec::new();
        if self.tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                match self.tok {
                    Tok::Comma => self.advance()?,
                    Tok::RParen => break,
                    _ => return self.syntax("expected `,` or `)`"),
                }
            }
        }
        self.advance()?;
        if args.len() != 1 {
            return Err(ExprError::Arity {
                name: name.to_string(),
                offset: at,
                expected: 1,
                found: args.len(),
            });
        }
        Ok(Node::unary(op, args.pop().expect("one argument")))
    }
}

/// Parses `text` as an expression over `var_count` variables.
pub fn parse(text: &str, var_count: usize) -> Result<Expression, ExprError> {
    let mut parser = Parser {
        lexer: Lexer { src: text, pos: 0 },
        tok: Tok::End,
        at: 0,
        var_count,
    };
    parser.advance()?;
    let root = parser.expr()?;
    if parser.tok != Tok::End {
        return parser.syntax("trailing input");
    }
    Ok(Expression { root, var_count })
}
