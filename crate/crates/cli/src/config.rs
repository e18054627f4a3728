use std::collections::BTreeMap;

use nhext_core::systems::{self, builtin, Format};
use nhext_core::{QuasiState, SprayKind, System, SystemSpec};
use serde::Serialize;

use crate::{CliError, CliResult, Common};

pub const DEFAULT_SAMPLES: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub feas: f64,
    pub force: f64,
    pub trajectory: f64,
    pub gauss_a: f64,
    pub gauss_b: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: nhext_core::extension::TOL_FEAS,
            force: 1e-8,
            trajectory: 1e-6,
            gauss_a: 1e-5,
            gauss_b: 1e-7,
        }
    }
}

fn split_pair<'a>(s: &'a str, what: &str) -> CliResult<(&'a str, &'a str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| CliError::args(format!("{what} `{s}` is not key=value")))
}

fn number(s: &str, what: &str) -> CliResult<f64> {
    s.parse()
        .map_err(|_| CliError::args(format!("{what}: `{s}` is not a number")))
}

pub fn tolerances(c: &Common) -> CliResult<Tolerances> {
    let mut t = Tolerances::default();
    for item in &c.tols {
        let (k, v) = split_pair(item, "--tol")?;
        let v = number(v, "--tol")?;
        let slot = match k {
            "feas" => &mut t.feas,
            "force" => &mut t.force,
            "trajectory" => &mut t.trajectory,
            "gauss_a" => &mut t.gauss_a,
            "gauss_b" => &mut t.gauss_b,
            other => return Err(CliError::args(format!("unknown tolerance `{other}`"))),
        };
        *slot = v;
    }
    Ok(t)
}

pub fn params(c: &Common) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in &c.params {
        let (k, v) = split_pair(item, "--param")?;
        out.insert(k.to_string(), number(v, "--param")?);
    }
    Ok(out)
}

/// Where the system came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "name")]
pub enum Source {
    Builtin(String),
    File(String),
}

pub fn load_spec(c: &Common) -> CliResult<(SystemSpec, Source)> {
    let p = params(c)?;
    let (mut spec, source) = match (&c.system, &c.system_file) {
        (Some(name), None) => (builtin(name, &p)?, Source::Builtin(name.clone())),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            let mut spec = systems::from_str(&text, Format::from_path(path))?;
            for (k, v) in p {
                if !spec.parameters.contains_key(&k) {
                    return Err(nhext_core::Error::BadParams(format!("unknown parameter `{k}`")).into());
                }
                spec.parameters.insert(k, v);
            }
            if spec.name.is_empty() {
                spec.name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("system")
                    .to_string();
            }
            (spec, Source::File(path.display().to_string()))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::args("give either --system or --system-file"));
        }
        (None, None) => return Err(CliError::args("no system given (--system or --system-file)")),
    };
    for item in &c.boxes {
        let (k, v) = split_pair(item, "--box")?;
        let (lo, hi) = v
            .split_once(':')
            .ok_or_else(|| CliError::args(format!("--box `{item}` is not coord=lo:hi")))?;
        if !spec.coordinates.iter().any(|x| x == k) {
            return Err(CliError::args(format!("--box: unknown coordinate `{k}`")));
        }
        spec.domain_box
            .insert(k.to_string(), [number(lo, "--box")?, number(hi, "--box")?]);
    }
    Ok((spec, source))
}

pub fn load_system(c: &Common) -> CliResult<(System, Source)> {
    let (spec, source) = load_spec(c)?;
    let sys = System::new(spec).map_err(systems::as_validation)?;
    Ok((sys, source))
}

/// The metric file, which must describe the same coordinates.
pub fn load_metric(c: &Common, sys: &System) -> CliResult<Option<System>> {
    let Some(path) = &c.metric_file else {
        return Ok(None);
    };
    if !path.exists() {
        return Err(CliError::io(format!("{}: no such file", path.display())));
    }
    let ghat = systems::load(path)?;
    if ghat.spec.coordinates != sys.spec.coordinates || ghat.m() != sys.m() {
        return Err(CliError::args(format!(
            "{} does not match the system's coordinates and constraint rank",
            path.display()
        )));
    }
    Ok(Some(ghat))
}

/// Initial state from `--q`/`--v`: defaults are the box center and
/// `v^a = 1`.
pub fn initial_state(c: &Common, sys: &System) -> CliResult<QuasiState> {
    let (n, m) = (sys.n(), sys.m());
    let q = if c.q.is_empty() {
        sys.ranges().iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    } else if c.q.len() == n {
        c.q.clone()
    } else {
        return Err(CliError::args(format!("--q needs {n} values")));
    };
    let v = match c.v.len() {
        0 => QuasiState::on_constraint(q.clone(), &vec![1.0; m], n).v,
        l if l == m => QuasiState::on_constraint(q.clone(), &c.v, n).v,
        l if l == n => c.v.clone(),
        _ => return Err(CliError::args(format!("--v needs {m} or {n} values"))),
    };
    Ok(QuasiState::new(q, v))
}

pub fn spray_kind(s: &str) -> CliResult<SprayKind> {
    SprayKind::from_name(s).ok_or_else(|| CliError::args(format!("unknown spray kind `{s}`")))
}

/// Coordinate indices of a projection `a,b`.
pub fn projection(sys: &System, spec: Option<&str>) -> CliResult<Option<(usize, usize)>> {
    let Some(spec) = spec else {
        return Ok(None);
    };
    let names: Vec<&str> = spec.split(',').map(str::trim).collect();
    let find = |n: &str| {
        sys.spec
            .coordinates
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| CliError::args(format!("--plot: unknown coordinate `{n}`")))
    };
    match names.as_slice() {
        [a, b] => Ok(Some((find(a)?, find(b)?))),
        _ => Err(CliError::args("--plot needs two coordinates a,b")),
    }
}
