//! Recursive-descent parser.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := primary ('^' factor)?
//! primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use super::ast::{BinaryOp, Expr, Feature, Reduction, RuleAst, Shape, UnaryOp};
use super::{DslError, DslErrorKind, MAX_DEPTH, MAX_NODES};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, DslError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), DslError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut exp = end + 1;
                if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                    exp += 1;
                }
                if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                    while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        exp += 1;
                    }
                    end = exp;
                }
            }
            let text = &self.src[start..end];
            let value: f64 = text
                .parse()
                .map_err(|_| DslError::new(start, DslErrorKind::Syntax(format!("malformed number `{text}`"))))?;
            self.pos = end;
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Sym(c as char), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(DslError::new(start, DslErrorKind::Syntax(format!("unexpected character `{ch}`"))))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    nesting: usize,
    nodes: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if t.0 != Tok::End {
            self.at += 1;
        }
        t
    }

    fn node(&mut self, at: usize, e: Expr) -> Result<Expr, DslError> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(DslError::new(at, DslErrorKind::TooManyNodes(MAX_NODES)));
        }
        Ok(e)
    }

    fn enter(&mut self) -> Result<(), DslError> {
        self.nesting += 1;
        // guards the recursion; the tree depth itself is checked after parsing
        if self.nesting > 4 * MAX_DEPTH {
            return Err(DslError::new(self.offset(), DslErrorKind::TooDeep(MAX_DEPTH)));
        }
        Ok(())
    }

    fn expect(&mut self, sym: char) -> Result<(), DslError> {
        match self.peek() {
            Tok::Sym(c) if *c == sym => {
                self.bump();
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{sym}`"))),
        }
    }

    fn unexpected(&self, wanted: &str) -> DslError {
        let found = match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        };
        DslError::new(self.offset(), DslErrorKind::Syntax(format!("expected {wanted}, found {found}")))
    }

    /// A binary or prefix operator at `at` must be followed by an operand.
    fn operand_after(&self, at: usize, op: char) -> Result<(), DslError> {
        if *self.peek() == Tok::End {
            return Err(DslError::new(at, DslErrorKind::Syntax(format!("operator `{op}` is missing its operand"))));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinaryOp::Add,
                Tok::Sym('-') => BinaryOp::Sub,
                _ => break,
            };
            let (tok, at) = self.bump();
            self.operand_after(at, if tok == Tok::Sym('+') { '+' } else { '-' })?;
            let rhs = self.term()?;
            lhs = self.node(at, Expr::Binary(op, Box::new(lhs), Box::new(rhs)))?;
        }
        self.nesting -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinaryOp::Mul,
                Tok::Sym('/') => BinaryOp::Div,
                _ => break,
            };
            let (tok, at) = self.bump();
            self.operand_after(at, if tok == Tok::Sym('*') { '*' } else { '/' })?;
            let rhs = self.factor()?;
            lhs = self.node(at, Expr::Binary(op, Box::new(lhs), Box::new(rhs)))?;
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, DslError> {
        if let Tok::Sym('-') = self.peek() {
            let (_, at) = self.bump();
            self.operand_after(at, '-')?;
            self.enter()?;
            let inner = self.factor()?;
            self.nesting -= 1;
            return self.node(at, Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if let Tok::Sym('^') = self.peek() {
            let (_, at) = self.bump();
            self.operand_after(at, '^')?;
            self.enter()?;
            let exp = self.factor()?;
            self.nesting -= 1;
            return self.node(at, Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => self.node(at, Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Tok::Sym('(') = self.peek() {
                    self.bump();
                    self.call(&name, at)
                } else if let Some(f) = Feature::from_name(&name) {
                    self.node(at, Expr::Feature(f))
                } else if is_function(&name) {
                    Err(DslError::new(at, DslErrorKind::Syntax(format!("`{name}` must be called with parentheses"))))
                } else {
                    Err(DslError::new(at, DslErrorKind::UnknownIdentifier(name)))
                }
            }
            _ => {
                self.at -= 1;
                Err(self.unexpected("a number, feature, function or `(`"))
            }
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expr, DslError> {
        if !is_function(name) {
            return Err(DslError::new(at, DslErrorKind::UnknownIdentifier(name.to_string())));
        }
        self.enter()?;
        let mut args = vec![self.expr()?];
        while let Tok::Sym(',') = self.peek() {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(')')?;
        self.nesting -= 1;
        let arity = |expected: &'static str| {
            DslError::new(at, DslErrorKind::Arity { name: name.to_string(), expected, got: args.len() })
        };
        let e = if let Some(op) = UnaryOp::from_name(name) {
            if args.len() != 1 {
                return Err(arity("1"));
            }
            Expr::Unary(op, Box::new(args.pop().unwrap()))
        } else {
            match (name, args.len()) {
                ("sum" | "mean" | "min" | "max", 1) => {
                    let red = match name {
                        "sum" => Reduction::Sum,
                        "mean" => Reduction::Mean,
                        "min" => Reduction::Min,
                        _ => Reduction::Max,
                    };
                    let arg = args.pop().unwrap();
                    if arg.shape() != Some(Shape::Vector) {
                        return Err(DslError::new(at, DslErrorKind::Shape(format!("`{name}` needs a per-project vector"))));
                    }
                    Expr::Reduce(red, Box::new(arg))
                }
                ("pow" | "min" | "max", 2) => {
                    let op = match name {
                        "pow" => BinaryOp::Pow,
                        "min" => BinaryOp::Min,
                        _ => BinaryOp::Max,
                    };
                    let b = args.pop().unwrap();
                    let a = args.pop().unwrap();
                    Expr::Binary(op, Box::new(a), Box::new(b))
                }
                ("pow", _) => return Err(arity("2")),
                ("min" | "max", _) => return Err(arity("1 or 2")),
                _ => return Err(arity("1")),
            }
        };
        self.node(at, e)
    }
}

fn is_function(name: &str) -> bool {
    UnaryOp::from_name(name).is_some() || matches!(name, "sum" | "mean" | "min" | "max" | "pow")
}

pub fn parse_rule(text: &str) -> Result<RuleAst, DslError> {
    let toks = Lexer::tokens(text)?;
    if toks.len() == 1 {
        return Err(DslError::new(0, DslErrorKind::Empty));
    }
    let mut p = Parser { toks, at: 0, nesting: 0, nodes: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    super::validate(root)
}
