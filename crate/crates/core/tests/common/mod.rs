#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use nhext_core::expr::Compiled;
use nhext_core::geometry::{halton_points, random_vectors};
use nhext_core::systems::{builtin, random_system};
use nhext_core::{MetricSpec, QuasiState, System, SystemSpec};

pub const RANDOM_SEEDS: [u64; 3] = [11, 12, 13];

pub fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn sys(name: &str) -> System {
    System::new(builtin(name, &BTreeMap::new()).unwrap()).unwrap()
}

pub fn sys_with(name: &str, pairs: &[(&str, f64)]) -> System {
    System::new(builtin(name, &params(pairs)).unwrap()).unwrap()
}

/// The three built-ins plus three random systems.
pub fn all_systems() -> &'static [System] {
    static ALL: OnceLock<Vec<System>> = OnceLock::new();
    ALL.get_or_init(|| {
        let mut out: Vec<System> = ["disk", "carriage", "particle"]
            .iter()
            .map(|n| sys(n))
            .collect();
        for s in RANDOM_SEEDS {
            out.push(System::new(random_system(s).unwrap()).unwrap());
        }
        out
    })
}

/// Sampled on-constraint states (`v^i = 0`).
pub fn states_on_c(sys: &System, count: usize, seed: u64) -> Vec<QuasiState> {
    let pts = halton_points(sys.ranges(), count, seed);
    let vs = random_vectors(sys.m(), count, seed + 100);
    pts.into_iter()
        .zip(vs)
        .map(|(q, va)| QuasiState::on_constraint(q, &va, sys.n()))
        .collect()
}

/// Sampled states with all quasi-velocities free.
pub fn states_full(sys: &System, count: usize, seed: u64) -> Vec<QuasiState> {
    let pts = halton_points(sys.ranges(), count, seed);
    let vs = random_vectors(sys.n(), count, seed + 200);
    pts.into_iter()
        .zip(vs)
        .map(|(q, v)| QuasiState::new(q, v))
        .collect()
}

pub fn coord_metric(spec: &SystemSpec, q: &[f64]) -> DMatrix<f64> {
    let n = spec.n();
    let MetricSpec::Coordinate { entries } = &spec.metric else {
        panic!("coordinate metric expected")
    };
    DMatrix::from_fn(n, n, |i, j| {
        Compiled::bind(&entries[i][j], &spec.coordinates, &spec.parameters)
            .unwrap()
            .eval(q)
            .unwrap()
    })
}

pub fn frame(sys: &System, q: &[f64]) -> DMatrix<f64> {
    sys.frame_matrix(q).unwrap().to_na()
}

fn shifted(q: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    q.iter().zip(dir).map(|(x, d)| x + h * d).collect()
}

/// Coordinate Christoffels `Γ^λ_{μν}` by central differences of `G`.
pub fn coord_christoffel(spec: &SystemSpec, q: &[f64]) -> Vec<DMatrix<f64>> {
    let n = spec.n();
    let h = 1e-6;
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            (coord_metric(spec, &shifted(q, &e, h)) - coord_metric(spec, &shifted(q, &e, -h)))
                / (2.0 * h)
        })
        .collect();
    let ginv = coord_metric(spec, q).try_inverse().unwrap();
    (0..n)
        .map(|l| {
            DMatrix::from_fn(n, n, |mu, nu| {
                (0..n)
                    .map(|s| {
                        0.5 * ginv[(l, s)] * (dg[mu][(s, nu)] + dg[nu][(s, mu)] - dg[s][(mu, nu)])
                    })
                    .sum()
            })
        })
        .collect()
}

/// Lagrange–d'Alembert accelerations in coordinates: solve
/// `G q̈ + c = Ωᵀμ`, `Ω q̈ + Ω̇ q̇ = 0` with `Ω` the last rows of `A⁻¹`,
/// then map back to `v̇^a`.
pub fn kkt_vdot(sys: &System, q: &[f64], va: &[f64]) -> Vec<f64> {
    let (n, m) = (sys.n(), sys.m());
    let k = n - m;
    let h = 1e-6;
    let a = frame(sys, q);
    let mut v = DVector::zeros(n);
    for i in 0..m {
        v[i] = va[i];
    }
    let qd = &a * &v;
    let dir: Vec<f64> = qd.iter().copied().collect();
    let christ = coord_christoffel(&sys.spec, q);
    let g = coord_metric(&sys.spec, q);
    // G Γ q̇ q̇ in lowered form
    let acc = DVector::from_fn(n, |l, _| {
        (0..n)
            .map(|mu| {
                (0..n)
                    .map(|nu| christ[l][(mu, nu)] * qd[mu] * qd[nu])
                    .sum::<f64>()
            })
            .sum()
    });
    let c = &g * acc;
    let ainv = a.clone().try_inverse().unwrap();
    let omega = ainv.rows(m, k).into_owned();
    let fp = frame(sys, &shifted(q, &dir, h));
    let fm = frame(sys, &shifted(q, &dir, -h));
    let omdot = (fp.clone().try_inverse().unwrap().rows(m, k).into_owned()
        - fm.clone().try_inverse().unwrap().rows(m, k).into_owned())
        / (2.0 * h);
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&g);
    kkt.view_mut((0, n), (n, k)).copy_from(&omega.transpose());
    kkt.view_mut((n, 0), (k, n)).copy_from(&omega);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&c));
    rhs.rows_mut(n, k).copy_from(&(-(&omdot * &qd)));
    let sol = kkt.lu().solve(&rhs).unwrap();
    let qdd = sol.rows(0, n).into_owned();
    let adot = (fp - fm) / (2.0 * h);
    let vdot = &ainv * (&qdd - &adot * &v);
    vdot.iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
