use std::collections::{BTreeMap, HashMap};

use super::ast::{Expression, Func};
use super::scalar::{Dual, Scalar};
use crate::error::{Error, Result};

/// Name bindings for evaluation. `pi` is predefined unless rebound.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalContext {
    pub coords: BTreeMap<String, f64>,
    pub params: BTreeMap<String, f64>,
}

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn coord(mut self, name: &str, value: f64) -> Self {
        self.coords.insert(name.to_string(), value);
        self
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

pub fn eval(e: &Expression, ctx: &EvalContext) -> Result<f64> {
    let names: Vec<String> = ctx.coords.keys().cloned().collect();
    let point: Vec<f64> = ctx.coords.values().copied().collect();
    Compiled::bind(e, &names, &ctx.params)?.eval(&point)
}

/// Value and exact directional derivative. Coordinates missing from
/// `direction` get a zero tangent component.
pub fn eval_dual(
    e: &Expression,
    ctx: &EvalContext,
    direction: &BTreeMap<String, f64>,
) -> Result<(f64, f64)> {
    if let Some(name) = direction.keys().find(|k| !ctx.coords.contains_key(*k)) {
        return Err(Error::UnboundName { name: name.clone() });
    }
    let names: Vec<String> = ctx.coords.keys().cloned().collect();
    let point: Vec<Dual<f64>> = ctx
        .coords
        .iter()
        .map(|(k, &x)| Dual::new(x, direction.get(k).copied().unwrap_or(0.0)))
        .collect();
    let y = Compiled::bind(e, &names, &ctx.params)?.eval(&point)?;
    Ok((y.re, y.eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Coord(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    PowI(Box<Node>, i32),
    PowF(Box<Node>, f64),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// An expression with names resolved against a fixed coordinate ordering and
/// parameters substituted. Constant subtrees are folded at bind time.
#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    root: Node,
}

impl Compiled {
    pub fn bind(
        e: &Expression,
        coords: &[String],
        params: &BTreeMap<String, f64>,
    ) -> Result<Compiled> {
        Ok(Compiled {
            root: compile(e, coords, params)?,
        })
    }

    pub fn constant(x: f64) -> Compiled {
        Compiled {
            root: Node::Const(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.root, Node::Const(_))
    }

    pub fn eval<T: Scalar>(&self, q: &[T]) -> Result<T> {
        eval_node(&self.root, q)
    }
}

fn compile(e: &Expression, coords: &[String], params: &BTreeMap<String, f64>) -> Result<Node> {
    use Expression as E;
    let node = match e {
        E::Num(x) => Node::Const(*x),
        E::Var(name) => {
            if let Some(i) = coords.iter().position(|c| c == name) {
                Node::Coord(i)
            } else if let Some(&p) = params.get(name) {
                Node::Const(p)
            } else if name == "pi" {
                Node::Const(std::f64::consts::PI)
            } else {
                return Err(Error::UnboundName { name: name.clone() });
            }
        }
        E::Neg(a) => Node::Neg(Box::new(compile(a, coords, params)?)),
        E::Add(a, b) | E::Sub(a, b) | E::Mul(a, b) | E::Div(a, b) => {
            let op = match e {
                E::Add(..) => BinOp::Add,
                E::Sub(..) => BinOp::Sub,
                E::Mul(..) => BinOp::Mul,
                _ => BinOp::Div,
            };
            Node::Bin(
                op,
                Box::new(compile(a, coords, params)?),
                Box::new(compile(b, coords, params)?),
            )
        }
        E::Pow(a, b) => {
            let base = Box::new(compile(a, coords, params)?);
            match compile(b, coords, params)? {
                Node::Const(p) if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 => {
                    Node::PowI(base, p as i32)
                }
                Node::Const(p) => Node::PowF(base, p),
                other => Node::Pow(base, Box::new(other)),
            }
        }
        E::Call(f, a) => Node::Call(*f, Box::new(compile(a, coords, params)?)),
    };
    fold(node)
}

fn fold(node: Node) -> Result<Node> {
    let constant = match &node {
        Node::Neg(a) | Node::PowI(a, _) | Node::PowF(a, _) | Node::Call(_, a) => {
            matches!(**a, Node::Const(_))
        }
        Node::Bin(_, a, b) | Node::Pow(a, b) => {
            matches!(**a, Node::Const(_)) && matches!(**b, Node::Const(_))
        }
        _ => false,
    };
    if constant {
        Ok(Node::Const(eval_node::<f64>(&node, &[])?))
    } else {
        Ok(node)
    }
}

fn finite<T: Scalar>(x: T, what: &str) -> Result<T> {
    if x.all_finite() {
        Ok(x)
    } else {
        Err(Error::domain(format!("non-finite result of {what}")))
    }
}

fn bin<T: Scalar>(op: BinOp, x: T, y: T) -> Result<T> {
    Ok(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y.re() == 0.0 {
                return Err(Error::domain("division by zero"));
            }
            finite(x / y, "division")?
        }
    })
}

fn powi<T: Scalar>(x: T, k: i32) -> Result<T> {
    if k < 0 && x.re() == 0.0 {
        return Err(Error::domain("zero raised to a negative power"));
    }
    finite(x.powi(k), "power")
}

fn powf<T: Scalar>(x: T, p: f64) -> Result<T> {
    if x.re() < 0.0 {
        return Err(Error::domain("negative base with non-integer exponent"));
    }
    finite(x.powf(p), "power")
}

fn pow<T: Scalar>(x: T, y: T) -> Result<T> {
    if x.re() <= 0.0 {
        return Err(Error::domain("non-positive base with variable exponent"));
    }
    finite((y * x.ln()).exp(), "power")
}

fn call<T: Scalar>(f: Func, x: T) -> Result<T> {
    let y = match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Sqrt => {
            if x.re() < 0.0 {
                return Err(Error::domain("sqrt of negative argument"));
            }
            x.sqrt()
        }
        Func::Abs => x.abs(),
        Func::Exp => x.exp(),
        Func::Ln => {
            if x.re() <= 0.0 {
                return Err(Error::domain("ln of non-positive argument"));
            }
            x.ln()
        }
    };
    finite(y, f.name())
}

fn eval_node<T: Scalar>(node: &Node, q: &[T]) -> Result<T> {
    match node {
        Node::Const(x) => Ok(T::cst(*x)),
        Node::Coord(i) => Ok(q[*i]),
        Node::Neg(a) => Ok(-eval_node(a, q)?),
        Node::Bin(op, a, b) => bin(*op, eval_node(a, q)?, eval_node(b, q)?),
        Node::PowI(a, k) => powi(eval_node(a, q)?, *k),
        Node::PowF(a, p) => powf(eval_node(a, q)?, *p),
        Node::Pow(a, b) => pow(eval_node(a, q)?, eval_node(b, q)?),
        Node::Call(f, a) => call(*f, eval_node(a, q)?),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Coord(usize),
    Neg(usize),
    Bin(BinOp, usize, usize),
    PowI(usize, i32),
    PowF(usize, u64),
    Pow(usize, usize),
    Call(Func, usize),
}

/// Several expressions bound together. Structurally equal subtrees are
/// stored once, so each is evaluated once per point; the adapted frames
/// produced by symbolic orthogonalization repeat the same determinant and
/// metric entries many times.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
}

impl Tape {
    pub fn bind<'a>(
        exprs: impl IntoIterator<Item = &'a Expression>,
        coords: &[String],
        params: &BTreeMap<String, f64>,
    ) -> Result<Tape> {
        let mut tape = Tape {
            ops: Vec::new(),
            outputs: Vec::new(),
        };
        let mut seen = HashMap::new();
        for e in exprs {
            let node = compile(e, coords, params)?;
            let out = tape.intern(&node, &mut seen);
            tape.outputs.push(out);
        }
        Ok(tape)
    }

    fn intern(&mut self, node: &Node, seen: &mut HashMap<Op, usize>) -> usize {
        let op = match node {
            Node::Const(x) => Op::Const(x.to_bits()),
            Node::Coord(i) => Op::Coord(*i),
            Node::Neg(a) => Op::Neg(self.intern(a, seen)),
            Node::Bin(o, a, b) => Op::Bin(*o, self.intern(a, seen), self.intern(b, seen)),
            Node::PowI(a, k) => Op::PowI(self.intern(a, seen), *k),
            Node::PowF(a, p) => Op::PowF(self.intern(a, seen), p.to_bits()),
            Node::Pow(a, b) => Op::Pow(self.intern(a, seen), self.intern(b, seen)),
            Node::Call(f, a) => Op::Call(*f, self.intern(a, seen)),
        };
        *seen.entry(op).or_insert_with(|| {
            self.ops.push(op);
            self.ops.len() - 1
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Number of distinct operations.
    pub fn size(&self) -> usize {
        self.ops.len()
    }

    pub fn eval<T: Scalar>(&self, q: &[T]) -> Result<Vec<T>> {
        let mut vals: Vec<T> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(x) => T::cst(f64::from_bits(x)),
                Op::Coord(i) => q[i],
                Op::Neg(a) => -vals[a],
                Op::Bin(o, a, b) => bin(o, vals[a], vals[b])?,
                Op::PowI(a, k) => powi(vals[a], k)?,
                Op::PowF(a, p) => powf(vals[a], f64::from_bits(p))?,
                Op::Pow(a, b) => pow(vals[a], vals[b])?,
                Op::Call(f, a) => call(f, vals[a])?,
            };
            vals.push(v);
        }
        Ok(self.outputs.iter().map(|&i| vals[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ev(text: &str, ctx: &EvalContext) -> Result<f64> {
        eval(&parse(text).unwrap(), ctx)
    }

    #[test]
    fn basic_values() {
        let ctx = EvalContext::new().param("R", 1.0).coord("phi", 0.0);
        assert_eq!(ev("R*cos(phi)", &ctx).unwrap(), 1.0);
        assert_eq!(ev("3/2", &ctx).unwrap(), 1.5);
        assert_eq!(ev("2^-1", &ctx).unwrap(), 0.5);
        assert!((ev("pi", &ctx).unwrap() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn dual_examples() {
        let ctx = EvalContext::new().coord("phi", std::f64::consts::FRAC_PI_2);
        let dir = BTreeMap::from([("phi".to_string(), 1.0)]);
        let (v, d) = eval_dual(&parse("cos(phi)").unwrap(), &ctx, &dir).unwrap();
        assert!(v.abs() < 1e-15 && (d + 1.0).abs() < 1e-15);

        let ctx = EvalContext::new().coord("y", 3.0);
        let dir = BTreeMap::from([("y".to_string(), 1.0)]);
        assert_eq!(
            eval_dual(&parse("y^2").unwrap(), &ctx, &dir).unwrap(),
            (9.0, 6.0)
        );
    }

    #[test]
    fn domain_and_binding_errors() {
        let ctx = EvalContext::new().coord("x", -1.0);
        for bad in [
            "sqrt(x)",
            "ln(x)",
            "1/(x+1)",
            "x^0.5",
            "2^(x*x)*0 + ln(0*x)",
        ] {
            assert_eq!(ev(bad, &ctx).unwrap_err().code(), "expr.domain", "{bad}");
        }
        assert_eq!(ev("y", &ctx), Err(Error::UnboundName { name: "y".into() }));
        assert_eq!(ev("x^3", &ctx).unwrap(), -1.0);
    }

    #[test]
    fn parameters_shadow_pi_and_fold() {
        let params = BTreeMap::from([("pi".to_string(), 3.0)]);
        let c = Compiled::bind(&parse("pi*2").unwrap(), &[], &params).unwrap();
        assert!(c.is_constant());
        assert_eq!(c.eval::<f64>(&[]).unwrap(), 6.0);
    }
}
