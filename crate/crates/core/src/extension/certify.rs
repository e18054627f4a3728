//! Checks that a completed metric is a geodesic extension.

use serde::Serialize;

use crate::dynamics::{forces, SprayKind};
use crate::error::Result;
use crate::geometry::{QuasiState, System};
use crate::integrate::{compare, gauss_check_a, gauss_check_b};

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Number of sample states integrated for the trajectory and Gauss checks.
    pub trajectories: usize,
    pub force_tol: f64,
    pub trajectory_tol: f64,
    pub gauss_a_tol: f64,
    pub gauss_b_tol: f64,
    /// `|v|` used for the exploratory Gauss-A check.
    pub gauss_a_speed: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            t_end: 1.0,
            dt: 1e-3,
            trajectories: 2,
            force_tol: 1e-8,
            trajectory_tol: 1e-6,
            gauss_a_tol: 1e-5,
            gauss_b_tol: 1e-7,
            gauss_a_speed: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub witness: Option<QuasiState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificationReport {
    /// Geodesic spray of `ĝ` on `𝒞` against the nonholonomic field.
    pub on_constraint_forces: Check,
    pub trajectories: Check,
    pub gauss_b: Check,
    /// Radial-isometry hypothesis; informative only ("holds"/"violated").
    pub gauss_a: Check,
    pub gauss_a_label: String,
    pub pass: bool,
}

fn check(name: &str, worst: (f64, Option<QuasiState>), tol: f64) -> Check {
    let pass = worst.0 < tol;
    Check {
        name: name.into(),
        value: worst.0,
        tolerance: tol,
        pass,
        witness: if pass { None } else { worst.1 },
    }
}

fn track(worst: &mut (f64, Option<QuasiState>), v: f64, st: &QuasiState) {
    if v > worst.0 || worst.1.is_none() {
        worst.0 = worst.0.max(v);
        worst.1 = Some(st.clone());
    }
}

pub fn certify(
    sys: &System,
    ghat: &System,
    states: &[QuasiState],
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    let (n, m) = (sys.n(), sys.m());
    let mut fw = (0.0, None);
    for st in states {
        let q = st.q.as_slice();
        let f_nh = forces(sys, SprayKind::Nonholonomic, q, st.v.as_slice())?;
        let f_g = forces(ghat, SprayKind::GeodesicOfExtension, q, st.v.as_slice())?;
        let scale = 1.0 + f_nh.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let d = (0..n).fold(0.0_f64, |a, i| a.max((f_nh[i] - f_g[i]).abs())) / scale;
        track(&mut fw, d, st);
    }
    let mut tw = (0.0, None);
    let mut bw = (0.0, None);
    let mut aw = (0.0, None);
    for st in states.iter().take(opts.trajectories) {
        let q = st.q.as_slice();
        let c = compare(sys, ghat, q, &st.v, opts.t_end, opts.dt)?;
        track(&mut tw, c.max_configuration_deviation, st);
        let va = &st.v[..m];
        let w: Vec<f64> = (0..n - m).map(|i| 1.0 / (1.0 + i as f64)).collect();
        track(
            &mut bw,
            gauss_check_b(sys, ghat, q, va, &w, opts.t_end, opts.dt)?,
            st,
        );
        let norm = va
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let vs: Vec<f64> = va.iter().map(|x| x * opts.gauss_a_speed / norm).collect();
        let mut us = vec![0.0; m];
        us[0] = 1.0;
        track(
            &mut aw,
            gauss_check_a(sys, ghat, q, &vs, &us, opts.dt)?.abs(),
            st,
        );
    }
    let on_constraint_forces = check("on_constraint_forces", fw, opts.force_tol);
    let trajectories = check("trajectory_deviation", tw, opts.trajectory_tol);
    let gauss_b = check("gauss_b_drift", bw, opts.gauss_b_tol);
    let gauss_a = check("gauss_a_residual", aw, opts.gauss_a_tol);
    let pass = on_constraint_forces.pass && trajectories.pass && gauss_b.pass;
    Ok(CertificationReport {
        gauss_a_label: if gauss_a.pass { "holds" } else { "violated" }.into(),
        on_constraint_forces,
        trajectories,
        gauss_b,
        gauss_a,
        pass,
    })
}
