//! Feasibility along a one-parameter family of systems, with bisection of
//! the boundary on a signed (B) probe.

use serde::Serialize;

use super::conditions::{condition_b_residual, Mode, ThetaCandidate};
use super::fit::{bisect, fit_ansatz, sample_states, Ansatz, DEFAULT_DEPTH, TOL_FEAS};
use crate::error::Result;
use crate::geometry::{System, SystemSpec};

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub samples: usize,
    pub seed: u64,
    pub depth: usize,
    pub tol: f64,
    /// State at which the signed probe is read.
    pub probe_q: Vec<f64>,
    pub probe_v: Vec<f64>,
    /// Component `i` of the (B) residual used as the probe.
    pub probe_component: usize,
    pub bisect_tol: f64,
}

impl ScanOptions {
    pub fn new(probe_q: Vec<f64>, probe_v: Vec<f64>) -> ScanOptions {
        ScanOptions {
            samples: 32,
            seed: 0,
            depth: DEFAULT_DEPTH,
            tol: TOL_FEAS,
            probe_q,
            probe_v,
            probe_component: 0,
            bisect_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub value: f64,
    pub feasible: bool,
    /// Max |(B)| of the fit over the sample.
    pub b_max_abs: f64,
    /// Signed (B) component of the algebraic candidate at the probe state.
    pub probe: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterScan {
    pub parameter: String,
    pub points: Vec<ScanPoint>,
    pub bracket: Option<(f64, f64)>,
    pub boundary: Option<f64>,
}

/// Fits the ansatz at parameter value `x` and reads the probe.
pub fn scan_point(
    make: &dyn Fn(f64) -> Result<SystemSpec>,
    ansatz: Option<&Ansatz>,
    x: f64,
    opts: &ScanOptions,
) -> Result<ScanPoint> {
    let spec = make(x)?;
    let sys = System::new(spec)?;
    let ansatz = ansatz
        .cloned()
        .unwrap_or_else(|| Ansatz::default_for(&sys.spec));
    let states = sample_states(&sys, opts.samples, opts.seed);
    let fit = fit_ansatz(&sys, Mode::Standard, &ansatz, &states, opts.depth, opts.tol)?;
    let cand = ThetaCandidate::field(&sys, &fit.candidate_block())?;
    let probe = condition_b_residual(&sys, &cand, &opts.probe_q, &opts.probe_v)?;
    Ok(ScanPoint {
        value: x,
        feasible: fit.report.feasible,
        b_max_abs: fit.report.condition("B").map_or(0.0, |c| c.max_abs),
        probe: probe[opts.probe_component],
    })
}

/// Evaluates `values` and, when `bracket` is given, bisects the probe's
/// sign change inside it.
pub fn scan_parameter(
    parameter: &str,
    make: &dyn Fn(f64) -> Result<SystemSpec>,
    ansatz: Option<&Ansatz>,
    values: &[f64],
    bracket: Option<(f64, f64)>,
    opts: &ScanOptions,
) -> Result<ParameterScan> {
    let points = values
        .iter()
        .map(|&x| scan_point(make, ansatz, x, opts))
        .collect::<Result<Vec<_>>>()?;
    let boundary = match bracket {
        Some((lo, hi)) => Some(bisect(
            |x| scan_point(make, ansatz, x, opts).map(|p| p.probe),
            lo,
            hi,
            opts.bisect_tol,
        )?),
        None => None,
    };
    Ok(ParameterScan {
        parameter: parameter.into(),
        points,
        bracket,
        boundary,
    })
}
