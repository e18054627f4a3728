use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
    Exp,
    Ln,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sqrt,
        Func::Abs,
        Func::Exp,
        Func::Ln,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Scalar expression tree. Names are resolved to coordinates or parameters
/// only when the expression is bound (see [`super::Compiled`]).
#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Num(f64),
    Var(String),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, Box<Expression>),
    Call(Func, Box<Expression>),
}

use Expression::*;

impl Expression {
    pub fn num(x: f64) -> Self {
        Num(x)
    }

    pub fn var(name: &str) -> Self {
        Var(name.to_string())
    }

    pub fn call(f: Func, arg: Expression) -> Self {
        Call(f, Box::new(arg))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    /// Sum with constant folding; used when building expressions symbolically.
    pub fn add(a: Expression, b: Expression) -> Self {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Num(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expression, b: Expression) -> Self {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Num(x - y),
            (Some(x), _) if x == 0.0 => Expression::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expression, b: Expression) -> Self {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Num(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Num(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expression::neg(b),
            (_, Some(y)) if y == -1.0 => Expression::neg(a),
            _ => Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expression, b: Expression) -> Self {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) if y != 0.0 => Num(x / y),
            (Some(x), _) if x == 0.0 => Num(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expression) -> Self {
        match a {
            Num(x) => Num(-x),
            Neg(inner) => *inner,
            other => Neg(Box::new(other)),
        }
    }

    pub fn sum(terms: impl IntoIterator<Item = Expression>) -> Self {
        terms.into_iter().fold(Num(0.0), Expression::add)
    }

    /// Copy with every literal rounded to `decimals` places and the tree
    /// re-folded, so that numerical noise drops out of printed results.
    pub fn rounded(&self, decimals: i32) -> Expression {
        let r = |e: &Expression| e.rounded(decimals);
        match self {
            Num(x) => {
                let s = 10f64.powi(decimals);
                let y = (x * s).round() / s;
                Num(if y == 0.0 { 0.0 } else { y })
            }
            Var(_) => self.clone(),
            Neg(a) => Expression::neg(r(a)),
            Add(a, b) => Expression::add(r(a), r(b)),
            Sub(a, b) => Expression::sub(r(a), r(b)),
            Mul(a, b) => Expression::mul(r(a), r(b)),
            Div(a, b) => Expression::div(r(a), r(b)),
            Pow(a, b) => Pow(Box::new(r(a)), Box::new(r(b))),
            Call(f, a) => Expression::call(*f, r(a)),
        }
    }

    /// Free names (coordinates and parameters alike), sorted.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Num(_) => {}
            Var(n) => {
                out.insert(n.clone());
            }
            Neg(a) | Call(_, a) => a.collect_names(out),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Add(..) | Sub(..) => 1,
            Mul(..) | Div(..) => 2,
            Neg(_) => 3,
            Num(x) if x.is_sign_negative() => 3,
            Pow(..) => 4,
            Num(_) | Var(_) | Call(..) => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(x) => write!(f, "{x}"),
            Var(n) => write!(f, "{n}"),
            Neg(a) => {
                write!(f, "-")?;
                // `-2` would re-parse as a folded literal
                if matches!(**a, Num(x) if !x.is_sign_negative()) {
                    write!(f, "({a})")
                } else {
                    a.write_child(f, 3)
                }
            }
            Add(a, b) | Sub(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " {} ", if matches!(self, Add(..)) { '+' } else { '-' })?;
                b.write_child(f, 2)
            }
            Mul(a, b) | Div(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "{}", if matches!(self, Mul(..)) { '*' } else { '/' })?;
                b.write_child(f, 3)
            }
            Pow(a, b) => {
                a.write_child(f, 5)?;
                write!(f, "^")?;
                b.write_child(f, 3)
            }
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        super::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smart_constructors_fold() {
        let x = Expression::var("x");
        assert_eq!(Expression::mul(Num(0.0), x.clone()), Num(0.0));
        assert_eq!(Expression::add(Num(0.0), x.clone()), x);
        assert_eq!(Expression::neg(Num(2.0)), Num(-2.0));
        assert_eq!(Expression::mul(Num(-1.0), x.clone()), Neg(Box::new(x)));
    }

    #[test]
    fn printing_parenthesizes_by_precedence() {
        let e = Sub(
            Box::new(Expression::var("a")),
            Box::new(Add(Box::new(Expression::var("b")), Box::new(Num(1.0)))),
        );
        assert_eq!(e.to_string(), "a - (b + 1)");
        let p = Pow(Box::new(Num(-2.0)), Box::new(Expression::var("x")));
        assert_eq!(p.to_string(), "(-2)^x");
    }

    #[test]
    fn rounding_drops_noise_terms() {
        let e = crate::expr::parse("1e-17*cos(phi) + -2.99999999999*sin(phi) - R*M").unwrap();
        assert_eq!(e.rounded(8).to_string(), "-3*sin(phi) - R*M");
        assert_eq!(Num(-1e-20).rounded(8), Num(0.0));
    }
}
