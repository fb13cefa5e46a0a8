//! Normal form used to deduplicate rules: literal subtrees are folded and
//! the operands of commutative operators are ordered by their printed form.
//! Chains are not re-associated, so two trees with the same canonical
//! string compute exactly the same floating-point operations.

use super::ast::{BinaryOp, Expr, RuleAst, UnaryOp};

fn fold_const(e: &Expr) -> Option<f64> {
    let v = match e {
        Expr::Const(v) => *v,
        Expr::Feature(_) | Expr::Reduce(..) => return None,
        Expr::Unary(op, a) => {
            let x = fold_const(a)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Abs => x.abs(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Sqrt if x >= 0.0 => x.sqrt(),
                UnaryOp::Log if x > 0.0 => x.ln(),
                UnaryOp::Log1p if x > -1.0 => x.ln_1p(),
                _ => return None,
            }
        }
        Expr::Binary(op, a, b) => {
            let (x, y) = (fold_const(a)?, fold_const(b)?);
            match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div if y != 0.0 => x / y,
                BinaryOp::Div => return None,
                BinaryOp::Pow => x.powf(y),
                BinaryOp::Min => x.min(y),
                BinaryOp::Max => x.max(y),
            }
        }
    };
    // invalid literal math is left in place so evaluation still rejects it
    v.is_finite().then_some(v)
}

pub fn normalize(e: &Expr) -> Expr {
    if !e.has_feature() {
        if let Some(v) = fold_const(e) {
            return Expr::Const(v);
        }
    }
    match e {
        Expr::Const(_) | Expr::Feature(_) => e.clone(),
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(normalize(a))),
        Expr::Reduce(r, a) => Expr::Reduce(*r, Box::new(normalize(a))),
        Expr::Binary(op, a, b) => {
            let (mut a, mut b) = (normalize(a), normalize(b));
            if op.is_commutative() && print(&b) < print(&a) {
                std::mem::swap(&mut a, &mut b);
            }
            Expr::Binary(*op, Box::new(a), Box::new(b))
        }
    }
}

pub fn canonical_form(ast: &RuleAst) -> String {
    print(&normalize(ast.root()))
}

/// Binding strength for printing; higher binds tighter.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
        Expr::Unary(UnaryOp::Neg, _) => 3,
        Expr::Const(v) if v.is_sign_negative() => 3,
        Expr::Binary(BinaryOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn wrap(e: &Expr, parens: bool) -> String {
    if parens {
        format!("({})", print(e))
    } else {
        print(e)
    }
}

/// Compact infix printing that re-parses to the same tree.
pub fn print(e: &Expr) -> String {
    match e {
        Expr::Const(v) => format!("{v:?}").trim_end_matches(".0").to_string(),
        Expr::Feature(f) => f.name().to_string(),
        Expr::Unary(UnaryOp::Neg, a) => format!("-{}", wrap(a, precedence(a) < 3)),
        Expr::Unary(op, a) => format!("{}({})", op.name(), print(a)),
        Expr::Reduce(r, a) => format!("{}({})", r.name(), print(a)),
        Expr::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
            format!("{}({},{})", op.symbol(), print(a), print(b))
        }
        Expr::Binary(BinaryOp::Pow, a, b) => {
            format!("{}^{}", wrap(a, precedence(a) <= 4), wrap(b, precedence(b) < 3))
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            format!("{}{}{}", wrap(a, precedence(a) < p), op.symbol(), wrap(b, precedence(b) <= p))
        }
    }
}
