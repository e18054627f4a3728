use std::collections::BTreeMap;

use nhext_core::expr::{eval, eval_dual, parse, EvalContext, Expression, Func};
use nhext_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shunting-yard parser kept deliberately separate from the library's
/// recursive descent.
mod reference {
    use nhext_core::expr::{Expression, Func};

    #[derive(Clone, Debug, PartialEq)]
    enum Tok {
        Num(f64),
        Name(String),
        Op(char),
        Open,
        Close,
    }

    fn lex(s: &str) -> Vec<Tok> {
        let c: Vec<char> = s.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < c.len() {
            let ch = c[i];
            if ch.is_whitespace() {
                i += 1;
            } else if ch.is_ascii_digit() || ch == '.' {
                let st = i;
                while i < c.len() && (c[i].is_ascii_digit() || c[i] == '.') {
                    i += 1;
                }
                if i < c.len() && (c[i] == 'e' || c[i] == 'E') {
                    i += 1;
                    if c[i] == '-' || c[i] == '+' {
                        i += 1;
                    }
                    while i < c.len() && c[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                out.push(Tok::Num(
                    c[st..i].iter().collect::<String>().parse().unwrap(),
                ));
            } else if ch.is_alphabetic() || ch == '_' {
                let st = i;
                while i < c.len() && (c[i].is_alphanumeric() || c[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Name(c[st..i].iter().collect()));
            } else if ch == '(' {
                out.push(Tok::Open);
                i += 1;
            } else if ch == ')' {
                out.push(Tok::Close);
                i += 1;
            } else {
                out.push(Tok::Op(ch));
                i += 1;
            }
        }
        out
    }

    #[derive(Clone, Debug)]
    enum Stack {
        Bin(char),
        Neg,
        Open,
        Func(Func),
    }

    fn prec(s: &Stack) -> (u8, bool) {
        // (precedence, right associative)
        match s {
            Stack::Bin('+') | Stack::Bin('-') => (1, false),
            Stack::Bin('*') | Stack::Bin('/') => (2, false),
            Stack::Neg => (3, true),
            Stack::Bin('^') => (4, true),
            _ => (0, false),
        }
    }

    fn apply(out: &mut Vec<Expression>, s: Stack) {
        match s {
            Stack::Neg => {
                let a = out.pop().unwrap();
                out.push(Expression::Neg(Box::new(a)));
            }
            Stack::Bin(op) => {
                let b = Box::new(out.pop().unwrap());
                let a = Box::new(out.pop().unwrap());
                out.push(match op {
                    '+' => Expression::Add(a, b),
                    '-' => Expression::Sub(a, b),
                    '*' => Expression::Mul(a, b),
                    '/' => Expression::Div(a, b),
                    _ => Expression::Pow(a, b),
                });
            }
            Stack::Func(f) => {
                let a = out.pop().unwrap();
                out.push(Expression::Call(f, Box::new(a)));
            }
            Stack::Open => unreachable!(),
        }
    }

    pub fn parse(s: &str) -> Expression {
        let toks = lex(s);
        let mut out: Vec<Expression> = Vec::new();
        let mut ops: Vec<Stack> = Vec::new();
        let mut expect_operand = true;
        let mut i = 0;
        while i < toks.len() {
            match &toks[i] {
                Tok::Num(x) => {
                    out.push(Expression::Num(*x));
                    expect_operand = false;
                }
                Tok::Name(n) => {
                    if toks.get(i + 1) == Some(&Tok::Open) {
                        ops.push(Stack::Func(Func::from_name(n).unwrap()));
                    } else {
                        out.push(Expression::Var(n.clone()));
                        expect_operand = false;
                    }
                }
                Tok::Open => {
                    ops.push(Stack::Open);
                    expect_operand = true;
                }
                Tok::Close => {
                    while !matches!(ops.last(), Some(Stack::Open)) {
                        let s = ops.pop().unwrap();
                        apply(&mut out, s);
                    }
                    ops.pop();
                    if matches!(ops.last(), Some(Stack::Func(_))) {
                        let s = ops.pop().unwrap();
                        apply(&mut out, s);
                    }
                    expect_operand = false;
                }
                Tok::Op('-') if expect_operand => {
                    // a minus glued to a bare literal is the literal itself
                    if let Some(Tok::Num(x)) = toks.get(i + 1) {
                        if toks.get(i + 2) != Some(&Tok::Op('^')) {
                            out.push(Expression::Num(-x));
                            expect_operand = false;
                            i += 2;
                            continue;
                        }
                    }
                    ops.push(Stack::Neg);
                }
                Tok::Op(c) => {
                    let me = Stack::Bin(*c);
                    let (p, right) = prec(&me);
                    while let Some(top) = ops.last() {
                        let (tp, _) = prec(top);
                        if matches!(top, Stack::Open | Stack::Func(_)) {
                            break;
                        }
                        if tp > p || (tp == p && !right) {
                            let s = ops.pop().unwrap();
                            apply(&mut out, s);
                        } else {
                            break;
                        }
                    }
                    ops.push(me);
                    expect_operand = true;
                }
            }
            i += 1;
        }
        while let Some(s) = ops.pop() {
            apply(&mut out, s);
        }
        assert_eq!(out.len(), 1);
        out.pop().unwrap()
    }

    /// Direct tree walk, no binding or folding.
    pub fn eval(e: &Expression, vars: &[(&str, f64)]) -> Option<f64> {
        use Expression::*;
        let y = match e {
            Num(x) => *x,
            Var(n) => vars.iter().find(|(k, _)| k == n)?.1,
            Neg(a) => -eval(a, vars)?,
            Add(a, b) => eval(a, vars)? + eval(b, vars)?,
            Sub(a, b) => eval(a, vars)? - eval(b, vars)?,
            Mul(a, b) => eval(a, vars)? * eval(b, vars)?,
            Div(a, b) => {
                let d = eval(b, vars)?;
                if d == 0.0 {
                    return None;
                }
                eval(a, vars)? / d
            }
            Pow(a, b) => {
                let (x, p) = (eval(a, vars)?, eval(b, vars)?);
                if p.fract() == 0.0 {
                    if p < 0.0 && x == 0.0 {
                        return None;
                    }
                    x.powi(p as i32)
                } else {
                    if x < 0.0 {
                        return None;
                    }
                    x.powf(p)
                }
            }
            Call(f, a) => {
                let x = eval(a, vars)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Sqrt if x < 0.0 => return None,
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Exp => x.exp(),
                    Func::Ln if x <= 0.0 => return None,
                    Func::Ln => x.ln(),
                }
            }
        };
        y.is_finite().then_some(y)
    }
}

const VARS: [&str; 3] = ["x", "y", "R"];

/// Random expression text with irregular spacing and redundant parentheses.
fn random_text(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.25);
    let sp = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.3) { " " } else { "" };
    let s = if leaf {
        if rng.gen_bool(0.5) {
            VARS[rng.gen_range(0..3)].to_string()
        } else {
            format!("{}", rng.gen_range(1..20) as f64 / 4.0)
        }
    } else {
        match rng.gen_range(0..7) {
            0..=3 => {
                let op = ["+", "-", "*", "/"][rng.gen_range(0..4)];
                let a = random_text(rng, depth - 1);
                let b = random_text(rng, depth - 1);
                format!("{a}{}{op}{}{b}", sp(rng), sp(rng))
            }
            4 => {
                let a = random_text(rng, depth - 1);
                let p = ["2", "3", "-1", "0.5", "-2"][rng.gen_range(0..5)];
                format!("({a})^{p}")
            }
            5 => format!("-{}", random_text(rng, depth - 1)),
            _ => {
                let f = ["sin", "cos", "exp", "sqrt", "abs", "tan", "ln"][rng.gen_range(0..7)];
                format!("{f}({})", random_text(rng, depth - 1))
            }
        }
    };
    if rng.gen_bool(0.2) {
        format!("({s})")
    } else {
        s
    }
}

fn ctx(x: f64, y: f64, r: f64) -> EvalContext {
    EvalContext::new().coord("x", x).coord("y", y).param("R", r)
}

#[test]
fn grammar_cases() {
    use Expression::*;
    let v = |n: &str| Box::new(Var(n.into()));
    assert_eq!(
        parse("R*cos(phi)").unwrap(),
        Mul(v("R"), Box::new(Call(Func::Cos, v("phi"))))
    );
    assert_eq!(
        parse("1/(2*c)").unwrap(),
        Div(
            Box::new(Num(1.0)),
            Box::new(Mul(Box::new(Num(2.0)), v("c")))
        )
    );
    assert_eq!(
        parse("-x^2").unwrap(),
        Neg(Box::new(Pow(v("x"), Box::new(Num(2.0)))))
    );
    assert_eq!(parse("2^3^2").unwrap(), reference::parse("2^(3^2)"));
}

#[test]
fn parser_matches_reference_on_random_text() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let text = random_text(&mut rng, 4);
        assert_eq!(parse(&text).unwrap(), reference::parse(&text), "{text}");
    }
    // the quoted case, checked the same way
    let t = "-(R^2)/(2*c)*sin(theta)";
    assert_eq!(parse(t).unwrap(), reference::parse(t));
}

#[test]
fn evaluator_matches_tree_walk() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut compared = 0;
    for _ in 0..300 {
        let e = parse(&random_text(&mut rng, 4)).unwrap();
        let (x, y, r) = (
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.5..2.0),
        );
        let want = reference::eval(&e, &[("x", x), ("y", y), ("R", r)]);
        let got = eval(&e, &ctx(x, y, r));
        match (want, got) {
            (Some(a), Ok(b)) => {
                assert!(
                    (a - b).abs() <= 1e-15 * a.abs().max(1e-300),
                    "{e}: {a} vs {b}"
                );
                compared += 1;
            }
            (None, Err(Error::Domain { .. })) => {}
            (w, g) => panic!("{e}: reference {w:?}, library {g:?}"),
        }
    }
    assert!(compared > 150);
}

fn fd(e: &Expression, x: f64, y: f64, dx: f64, dy: f64) -> Option<f64> {
    let h = 1e-6;
    let p = eval(e, &ctx(x + h * dx, y + h * dy, 1.3)).ok()?;
    let m = eval(e, &ctx(x - h * dx, y - h * dy, 1.3)).ok()?;
    Some((p - m) / (2.0 * h))
}

fn dual(e: &Expression, x: f64, y: f64, dx: f64, dy: f64) -> nhext_core::Result<(f64, f64)> {
    let dir: BTreeMap<String, f64> = [("x".to_string(), dx), ("y".to_string(), dy)].into();
    eval_dual(e, &ctx(x, y, 1.3), &dir)
}

#[test]
fn dual_derivative_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 100 {
        let e = parse(&random_text(&mut rng, 3)).unwrap();
        let (x, y) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let (dx, dy) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let Ok((val, d)) = dual(&e, x, y, dx, dy) else {
            continue;
        };
        let Some(f) = fd(&e, x, y, dx, dy) else {
            continue;
        };
        // skip kinks and steep spots where a 1e-6 stencil is meaningless
        if e.to_string().contains("abs") || d.abs() > 1e3 || val.abs() > 1e3 {
            continue;
        }
        assert!((d - f).abs() < 1e-6, "{e} at ({x},{y}): dual {d}, fd {f}");
        checked += 1;
    }
}

#[test]
fn simple_derivatives() {
    let dir: BTreeMap<String, f64> = [("phi".to_string(), 1.0)].into();
    let c = EvalContext::new().coord("phi", std::f64::consts::FRAC_PI_2);
    let (v, d) = eval_dual(&parse("cos(phi)").unwrap(), &c, &dir).unwrap();
    assert!(v.abs() < 1e-16 && (d + 1.0).abs() < 1e-16);
    let dir: BTreeMap<String, f64> = [("y".to_string(), 1.0)].into();
    let c = EvalContext::new().coord("y", 3.0);
    assert_eq!(
        eval_dual(&parse("y^2").unwrap(), &c, &dir).unwrap(),
        (9.0, 6.0)
    );
}

#[test]
fn errors_are_reported() {
    match parse("1 + ") {
        Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 5)),
        other => panic!("{other:?}"),
    }
    match parse("x +\n  * 2") {
        Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
        other => panic!("{other:?}"),
    }
    assert_eq!(
        parse("foo(x)"),
        Err(Error::UnknownFunction { name: "foo".into() })
    );
    let c = EvalContext::new().coord("x", -1.0);
    assert!(matches!(
        eval(&parse("q + 1").unwrap(), &c),
        Err(Error::UnboundName { .. })
    ));
    assert!(matches!(
        eval(&parse("sqrt(x)").unwrap(), &c),
        Err(Error::Domain { .. })
    ));
    assert!(matches!(
        eval(&parse("ln(x)").unwrap(), &c),
        Err(Error::Domain { .. })
    ));
    assert!(matches!(
        eval(&parse("1/(x+1)").unwrap(), &c),
        Err(Error::Domain { .. })
    ));
}

fn arb_expr() -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        (-50i32..50).prop_map(|k| Expression::Num(k as f64 / 8.0)),
        prop::sample::select(vec!["x", "y", "R"]).prop_map(Expression::var),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Div(Box::new(a), Box::new(b))),
            (inner.clone(), 0u8..4).prop_map(|(a, p)| Expression::Pow(
                Box::new(a),
                Box::new(Expression::Num(p as f64))
            )),
            inner.clone().prop_map(|a| Expression::Neg(Box::new(a))),
            (inner, prop::sample::select(Func::ALL.to_vec()))
                .prop_map(|(a, f)| Expression::Call(f, Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(e in arb_expr()) {
        let text = e.to_string();
        prop_assert_eq!(parse(&text).unwrap(), e);
    }

    #[test]
    fn evaluation_is_bitwise_deterministic(e in arb_expr(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let c = ctx(x, y, 0.7);
        let a = eval(&e, &c).map(f64::to_bits);
        let b = eval(&e, &c).map(f64::to_bits);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dual_is_linear_in_direction(
        e in arb_expr(), x in -1.0..1.0f64, y in -1.0..1.0f64,
        d1 in (-1.0..1.0f64, -1.0..1.0f64), d2 in (-1.0..1.0f64, -1.0..1.0f64), s in -2.0..2.0f64,
    ) {
        if let (Ok((_, a)), Ok((_, b)), Ok((_, c))) = (
            dual(&e, x, y, d1.0, d1.1),
            dual(&e, x, y, d2.0, d2.1),
            dual(&e, x, y, d1.0 + s * d2.0, d1.1 + s * d2.1),
        ) {
            let want = a + s * b;
            prop_assume!(want.is_finite() && a.abs() < 1e8 && b.abs() < 1e8);
            prop_assert!((c - want).abs() <= 1e-12 * (1.0 + a.abs() + (s * b).abs()), "{} vs {}", c, want);
        }
    }

    #[test]
    fn dual_obeys_leibniz(a in arb_expr(), b in arb_expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let prod = Expression::Mul(Box::new(a.clone()), Box::new(b.clone()));
        if let (Ok((va, da)), Ok((vb, db)), Ok((_, dp))) =
            (dual(&a, x, y, 0.6, -0.8), dual(&b, x, y, 0.6, -0.8), dual(&prod, x, y, 0.6, -0.8))
        {
            let want = va * db + vb * da;
            prop_assume!(want.is_finite());
            prop_assert!((dp - want).abs() <= 1e-12 * (1.0 + (va * db).abs() + (vb * da).abs()));
        }
    }
}
