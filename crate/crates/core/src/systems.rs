//! Built-in example systems and the JSON/TOML loader.
//!
//! Built-ins are assembled from DSL strings so every consumer exercises the
//! parser as well.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{parse, Expression};
use crate::geometry::{
    orthogonalize, ChaplyginMarkup, MetricCheck, MetricSpec, System, SystemSpec,
};

pub const BUILTINS: [&str; 3] = ["disk", "carriage", "particle"];

fn exprs(items: &[&str]) -> Vec<Expression> {
    items
        .iter()
        .map(|s| parse(s).expect("builtin expression"))
        .collect()
}

fn matrix(rows: &[&[&str]]) -> Vec<Vec<Expression>> {
    rows.iter().map(|r| exprs(r)).collect()
}

fn merge_params(
    defaults: &[(&str, f64)],
    given: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> =
        defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in given {
        if !out.contains_key(k) {
            return Err(Error::BadParams(format!("unknown parameter `{k}`")));
        }
        if !v.is_finite() {
            return Err(Error::BadParams(format!("parameter `{k}` is not finite")));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

fn require_positive(p: &BTreeMap<String, f64>, names: &[&str]) -> Result<()> {
    for n in names {
        if !(p[*n] > 0.0) {
            return Err(Error::BadParams(format!("`{n}` must be positive")));
        }
    }
    Ok(())
}

fn labels(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn boxed(items: &[(&str, f64, f64)]) -> BTreeMap<String, [f64; 2]> {
    items
        .iter()
        .map(|(c, lo, hi)| (c.to_string(), [*lo, *hi]))
        .collect()
}

/// Vertically rolling disk. Coordinates `(x, y, theta, phi)`; frame
/// `{X_θ, X_φ, X_x, X_y}` with `I = MR²/2`, `J = MR²/4`.
pub fn disk(params: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    let p = merge_params(&[("M", 1.0), ("R", 1.0)], params)?;
    require_positive(&p, &["M", "R"])?;
    Ok(SystemSpec {
        name: "disk".into(),
        coordinates: ["x", "y", "theta", "phi"].map(String::from).to_vec(),
        parameters: p,
        constraint_rank: 2,
        frame: matrix(&[
            &["R*cos(phi)", "R*sin(phi)", "1", "0"],
            &["0", "0", "0", "1"],
            &["1", "0", "-2/R*cos(phi)", "0"],
            &["0", "1", "-2/R*sin(phi)", "0"],
        ]),
        metric: MetricSpec::Coordinate {
            entries: matrix(&[
                &["M", "0", "0", "0"],
                &["0", "M", "0", "0"],
                &["0", "0", "M*R^2/2", "0"],
                &["0", "0", "0", "M*R^2/4"],
            ]),
        },
        chaplygin: Some(ChaplyginMarkup {
            group: "R2".into(),
            generators: matrix(&[&["1", "0", "0", "0"], &["0", "1", "0", "0"]]),
        }),
        domain_box: boxed(&[
            ("x", -1.0, 1.0),
            ("y", -1.0, 1.0),
            ("theta", -PI, PI),
            ("phi", -PI, PI),
        ]),
        metric_check: MetricCheck::PositiveDefinite,
        frame_labels: labels(&["theta", "phi", "x", "y"]),
    })
}

/// Two-wheeled carriage. Coordinates `(x, y, theta, psi1, psi2)`; the
/// complement of `{X_ψ1, X_ψ2}` is the adapted version of the `SE(2)`
/// generators. With unit inertias the kinetic metric stops being
/// positive-definite once `m₀²ℓ² ≥ mJ`, so only the constrained block is
/// required to be positive-definite.
pub fn carriage(params: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    let p = merge_params(
        &[
            ("m", 1.0),
            ("m0", 1.0),
            ("J", 1.0),
            ("J2", 1.0),
            ("c", 1.0),
            ("R", 1.0),
            ("l", 0.5),
        ],
        params,
    )?;
    require_positive(&p, &["m", "m0", "J", "J2", "c", "R"])?;
    if !(p["l"] >= 0.0) {
        return Err(Error::BadParams("`l` must be non-negative".into()));
    }
    let generators = matrix(&[
        &["1", "0", "0", "0", "0"],
        &["0", "1", "0", "0", "0"],
        &["-y", "x", "1", "0", "0"],
    ]);
    let mut frame = matrix(&[
        &["-R/2*cos(theta)", "-R/2*sin(theta)", "-R/(2*c)", "1", "0"],
        &["-R/2*cos(theta)", "-R/2*sin(theta)", "R/(2*c)", "0", "1"],
    ]);
    frame.extend(generators.iter().cloned());
    let naive = SystemSpec {
        name: "carriage".into(),
        coordinates: ["x", "y", "theta", "psi1", "psi2"]
            .map(String::from)
            .to_vec(),
        parameters: p,
        constraint_rank: 2,
        frame,
        metric: MetricSpec::Coordinate {
            entries: matrix(&[
                &["m", "0", "-m0*l*sin(theta)", "0", "0"],
                &["0", "m", "m0*l*cos(theta)", "0", "0"],
                &["-m0*l*sin(theta)", "m0*l*cos(theta)", "J", "0", "0"],
                &["0", "0", "0", "J2", "0"],
                &["0", "0", "0", "0", "J2"],
            ]),
        },
        chaplygin: Some(ChaplyginMarkup {
            group: "SE2".into(),
            generators,
        }),
        domain_box: boxed(&[
            ("x", -1.0, 1.0),
            ("y", -1.0, 1.0),
            ("theta", -PI, PI),
            ("psi1", -PI, PI),
            ("psi2", -PI, PI),
        ]),
        metric_check: MetricCheck::ConstrainedBlock,
        frame_labels: labels(&["psi1", "psi2", "x", "y", "theta"]),
    };
    orthogonalize(&naive)
}

/// Nonzero offset `ℓ` at which the carriage admits a geodesic extension:
/// `sqrt((R²m + 2J₂)(JR² + 2J₂c²)) / (m₀R²)`.
pub fn carriage_l_star(params: &BTreeMap<String, f64>) -> Result<f64> {
    let spec = carriage(params)?;
    let p = |k: &str| spec.parameters[k];
    let (m, m0, j, j2, c, r) = (p("m"), p("m0"), p("J"), p("J2"), p("c"), p("R"));
    Ok(((r * r * m + 2.0 * j2) * (j * r * r + 2.0 * j2 * c * c)).sqrt() / (m0 * r * r))
}

/// Nonholonomic particle `L = ½(ẋ²+ẏ²+ż²) + αẏż`, constraint `ż = yẋ`.
pub fn particle(params: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    let p = merge_params(&[("alpha", 0.0)], params)?;
    if !(p["alpha"].abs() < 1.0) {
        return Err(Error::BadParams("need |alpha| < 1".into()));
    }
    Ok(SystemSpec {
        name: "particle".into(),
        coordinates: ["x", "y", "z"].map(String::from).to_vec(),
        parameters: p,
        constraint_rank: 2,
        frame: matrix(&[
            &["1", "0", "y"],
            &["0", "1", "0"],
            &["y*(alpha^2 - 1)", "-alpha", "1"],
        ]),
        metric: MetricSpec::Coordinate {
            entries: matrix(&[&["1", "0", "0"], &["0", "1", "alpha"], &["0", "alpha", "1"]]),
        },
        chaplygin: None,
        domain_box: boxed(&[("x", -1.0, 1.0), ("y", -0.9, 0.9), ("z", -1.0, 1.0)]),
        metric_check: MetricCheck::PositiveDefinite,
        frame_labels: labels(&["x", "y", "1"]),
    })
}

pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    match name {
        "disk" => disk(params),
        "carriage" => carriage(params),
        "particle" => particle(params),
        other => Err(Error::BadParams(format!(
            "unknown built-in system `{other}` (known: {})",
            BUILTINS.join(", ")
        ))),
    }
}

/// Random analytic system of dimension 3 or 4: near-identity frame and a
/// diagonally dominant metric, then adapted. Even seeds use a coordinate
/// metric, odd seeds a frame metric.
pub fn random_system(seed: u64) -> Result<SystemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=4usize);
    let m = rng.gen_range(1..n);
    let coords: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let mut coef = |s: f64| (rng.gen_range(-s..s) * 1e4).round() / 1e4;
    let term = |coef: &mut dyn FnMut(f64) -> f64, s: f64| {
        let (a, b) = (coef(s), coef(s));
        let j = ((a.abs() * 1e4) as usize) % n;
        let k = ((b.abs() * 1e4) as usize + 1) % n;
        format!("{a}*sin(q{j}) + {b}*q{k}")
    };
    let mut frame = Vec::with_capacity(n);
    for beta in 0..n {
        let mut col = Vec::with_capacity(n);
        for alpha in 0..n {
            if alpha == beta {
                col.push(parse("1").unwrap());
            } else {
                col.push(parse(&term(&mut coef, 0.15)).unwrap());
            }
        }
        frame.push(col);
    }
    let mut entries = vec![vec![Expression::num(0.0); n]; n];
    for i in 0..n {
        let d = format!("2 + {}*cos(q{})", coef(0.5), i);
        entries[i][i] = parse(&d).unwrap();
        for j in 0..i {
            let e = parse(&format!(
                "{}*cos(q{} - {})",
                coef(0.2),
                (i + j) % n,
                coef(1.0)
            ))
            .unwrap();
            entries[i][j] = e.clone();
            entries[j][i] = e;
        }
    }
    let metric = if seed.is_multiple_of(2) {
        MetricSpec::Coordinate { entries }
    } else {
        MetricSpec::Frame { entries }
    };
    let spec = SystemSpec {
        name: format!("random{seed}"),
        coordinates: coords.clone(),
        parameters: BTreeMap::new(),
        constraint_rank: m,
        frame,
        metric,
        chaplygin: None,
        domain_box: coords.iter().map(|c| (c.clone(), [-1.0, 1.0])).collect(),
        metric_check: MetricCheck::PositiveDefinite,
        frame_labels: Vec::new(),
    };
    orthogonalize(&spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Format::Toml,
            _ => Format::Json,
        }
    }
}

pub fn to_string(spec: &SystemSpec, format: Format) -> Result<String> {
    match format {
        Format::Json => serde_json::to_string_pretty(spec).map_err(|e| Error::Parse(e.to_string())),
        Format::Toml => toml::to_string(spec).map_err(|e| Error::Parse(e.to_string())),
    }
}

pub fn from_str(text: &str, format: Format) -> Result<SystemSpec> {
    match format {
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string())),
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string())),
    }
}

pub fn save(spec: &SystemSpec, path: &Path) -> Result<()> {
    let text = to_string(spec, Format::from_path(path))?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads and validates a system file.
pub fn load(path: &Path) -> Result<System> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let spec = from_str(&text, Format::from_path(path))?;
    System::new(spec).map_err(as_validation)
}

/// Re-labels geometric failures as validation errors naming the invariant.
pub fn as_validation(e: Error) -> Error {
    match e {
        Error::SingularFrame { .. } => Error::validation("SingularFrame", e.to_string()),
        Error::NotPositiveDefinite { .. } => {
            Error::validation("NotPositiveDefinite", e.to_string())
        }
        Error::NotChaplygin { .. } => Error::validation("NotChaplygin", e.to_string()),
        other => other,
    }
}
