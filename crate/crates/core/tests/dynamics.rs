mod common;

use common::*;
use nhext_core::dynamics::{forces, multipliers, nonholonomic_forces, on_constraint};
use nhext_core::expr::parse;
use nhext_core::geometry::halton_points;
use nhext_core::systems::{from_str, Format};
use nhext_core::{IjPolicy, MetricSpec, QuasiState, SprayKind, System};
use proptest::prelude::*;

const ALL_KINDS: [SprayKind; 6] = [
    SprayKind::Geodesic,
    SprayKind::Nonholonomic,
    SprayKind::ExtProjection,
    SprayKind::ExtNhConnection,
    SprayKind::ExtBarred,
    SprayKind::GeodesicOfExtension,
];

fn euclid() -> System {
    let text = r#"{"coordinates": ["a", "b", "c"], "constraint_rank": 2,
        "frame": [["1","0","0"],["0","1","0"],["0","0","1"]],
        "metric": {"kind": "coordinate", "entries": [["1","0","0"],["0","1","0"],["0","0","1"]]}}"#;
    System::new(from_str(text, Format::Json).unwrap()).unwrap()
}

fn ext_metric(base: &System, off: &[&[&str]], alpha: f64) -> System {
    let off = off
        .iter()
        .map(|r| r.iter().map(|s| parse(s).unwrap()).collect())
        .collect();
    let spec = base.spec.with_metric(MetricSpec::Extension {
        base: Box::new(base.spec.metric.clone()),
        off,
        ij: IjPolicy::Alpha(alpha),
    });
    System::new(spec).unwrap()
}

#[test]
fn euclidean_forces_vanish_for_every_kind() {
    let s = euclid();
    for k in ALL_KINDS {
        let f = forces(&s, k, &[0.1, 0.2, 0.3][..], &[0.5, -1.0, 0.7][..]).unwrap();
        assert!(f.iter().all(|x| *x == 0.0), "{k:?}");
    }
    assert_eq!(multipliers(&s, &[0.0; 3], &[1.0, 2.0]).unwrap(), vec![0.0]);
}

#[test]
fn disk_geodesic_spray_is_not_an_extension() {
    let d = sys("disk");
    let mut seen: f64 = 0.0;
    for st in states_on_c(&d, 32, 1) {
        let f = forces(&d, SprayKind::Geodesic, st.q.as_slice(), st.v.as_slice()).unwrap();
        assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
        seen = seen.max(f[2].abs()).max(f[3].abs());
        let nh = nonholonomic_forces(&d, &st.q, &st.v[..2]).unwrap();
        assert!(nh.forces.iter().all(|x| x.abs() < 1e-12));
    }
    assert!(seen > 0.1);
}

#[test]
fn nonholonomic_forces_match_lagrange_dalembert() {
    let mut systems: Vec<System> = all_systems()
        .iter()
        .filter(|s| matches!(s.spec.metric, MetricSpec::Coordinate { .. }))
        .cloned()
        .collect();
    systems.push(sys_with("carriage", &[("l", 0.1)]));
    systems.push(sys_with("carriage", &[("l", 3.0)]));
    systems.push(sys_with("particle", &[("alpha", 0.4)]));
    systems.push(sys_with("disk", &[("M", 1.7), ("R", 0.6)]));
    for s in &systems {
        for st in states_on_c(s, 12, 4) {
            let m = s.m();
            let ours = on_constraint(s, st.q.as_slice(), &st.v[..m]).unwrap();
            let oracle = kkt_vdot(s, &st.q, &st.v[..m]);
            let scale = 1.0 + oracle.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            assert!(
                max_abs_diff(&ours.f, &oracle[..m]) < 1e-7 * scale,
                "{}: {:?} vs {:?}",
                s.name(),
                ours.f,
                oracle
            );
            assert!(oracle[m..].iter().all(|x| x.abs() < 1e-7 * scale));
        }
    }
}

fn carriage_constants(c: &System) -> (f64, f64, f64) {
    let p = &c.spec.parameters;
    let (m, m0, j, j2, cc, r, l) = (p["m"], p["m0"], p["J"], p["J2"], p["c"], p["R"], p["l"]);
    let pp = j2 + r * r * m / 4.0 + r * r * j / (4.0 * cc * cc);
    let qq = -(r * r * m / 4.0 - r * r * j / (4.0 * cc * cc));
    let k = m0 * l * r.powi(3) / (4.0 * cc * cc);
    (pp, qq, k)
}

#[test]
fn carriage_forces_closed_form() {
    let c = sys_with(
        "carriage",
        &[
            ("m", 1.2),
            ("m0", 0.8),
            ("J", 0.9),
            ("J2", 0.3),
            ("c", 1.5),
            ("R", 0.7),
            ("l", 0.4),
        ],
    );
    let (p, q, k) = carriage_constants(&c);
    for st in states_on_c(&c, 20, 2) {
        let (v1, v2) = (st.v[0], st.v[1]);
        let f = nonholonomic_forces(&c, &st.q, &st.v[..2]).unwrap().forces;
        // printed form with K → −K
        let f1 = -k / (p * p - q * q) * (v1 - v2) * (q * v1 - p * v2);
        let f2 = -k / (p * p - q * q) * (v1 - v2) * (p * v1 - q * v2);
        assert!(
            (f[0] - f1).abs() < 1e-12 && (f[1] - f2).abs() < 1e-12,
            "{f:?} vs {f1} {f2}"
        );
    }
    let f = nonholonomic_forces(&c, &[0.3, 0.1, 0.7, 0.0, 0.0], &[0.8, 0.8])
        .unwrap()
        .forces;
    assert!(f.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn multiplier_routes_agree() {
    for s in all_systems() {
        for st in states_on_c(s, 20, 5) {
            let oc = on_constraint(s, st.q.as_slice(), &st.v[..s.m()]).unwrap();
            let scale = 1.0 + oc.lambda.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            assert!(
                max_abs_diff(&oc.lambda, &oc.lambda_christoffel) < 1e-12 * scale,
                "{}",
                s.name()
            );
            // λ_i = −g_{ki} F^k of the geodesic spray on 𝒞
            let geo = forces(s, SprayKind::Geodesic, st.q.as_slice(), st.v.as_slice()).unwrap();
            let g = s.frame_metric(st.q.as_slice()).unwrap();
            for i in s.m()..s.n() {
                let want: f64 = -(s.m()..s.n()).map(|k| g[(k, i)] * geo[k]).sum::<f64>();
                assert!((oc.lambda[i - s.m()] - want).abs() < 1e-12 * scale);
            }
        }
    }
    let d = sys("disk");
    let oc = on_constraint(&d, &[0.1, 0.2, 0.3, 0.4][..], &[1.0, 1.0][..]).unwrap();
    assert!(max_abs_diff(&oc.lambda, &oc.lambda_christoffel) < 1e-12);
}

#[test]
fn carriage_multipliers_in_chaplygin_form() {
    // λ_i = Γ_(L,𝒟)(G_ai v^a), the derivative taken by central differences
    // along the nonholonomic flow
    let c = sys_with("carriage", &[("l", 0.7)]);
    let h = 1e-5;
    for st in states_on_c(&c, 50, 6) {
        let va = &st.v[..2];
        let lam = multipliers(&c, &st.q, va).unwrap();
        let f = nonholonomic_forces(&c, &st.q, va).unwrap().forces;
        let qd = c.quasi_to_coord(&st).unwrap();
        let mu = |s: f64| -> Vec<f64> {
            let q: Vec<f64> = st.q.iter().zip(&qd).map(|(x, d)| x + s * d).collect();
            let v: Vec<f64> = (0..2).map(|a| va[a] + s * f[a]).collect();
            let g = c.chaplygin_g(q.as_slice()).unwrap();
            (0..3)
                .map(|i| (0..2).map(|a| g[(a, i)] * v[a]).sum())
                .collect()
        };
        let (p, m) = (mu(h), mu(-h));
        for i in 0..3 {
            let d = (p[i] - m[i]) / (2.0 * h);
            assert!((d - lam[i]).abs() < 1e-8, "{d} vs {}", lam[i]);
        }
    }
}

#[test]
fn extensions_agree_on_constraint() {
    for s in all_systems() {
        for st in states_on_c(s, 100, 7) {
            let nh = forces(s, SprayKind::Nonholonomic, st.q.as_slice(), st.v.as_slice()).unwrap();
            for k in SprayKind::EXTENSIONS {
                let f = forces(s, k, st.q.as_slice(), st.v.as_slice()).unwrap();
                assert!(
                    max_abs_diff(&f, &nh) < 1e-10,
                    "{} {k:?}: {f:?} vs {nh:?}",
                    s.name()
                );
            }
        }
    }
}

#[test]
fn projection_extension_is_vertical_in_d_only() {
    let d = sys("disk");
    let mut nh_conn_off: f64 = 0.0;
    for st in states_full(&d, 20, 8) {
        let f1 = forces(
            &d,
            SprayKind::ExtProjection,
            st.q.as_slice(),
            st.v.as_slice(),
        )
        .unwrap();
        assert!(f1[2] == 0.0 && f1[3] == 0.0);
        let f2 = forces(
            &d,
            SprayKind::ExtNhConnection,
            st.q.as_slice(),
            st.v.as_slice(),
        )
        .unwrap();
        nh_conn_off = nh_conn_off.max(f2[2].abs()).max(f2[3].abs());
    }
    assert!(nh_conn_off > 1e-3);
}

#[test]
fn geodesic_of_own_metric_is_the_geodesic_spray() {
    for s in all_systems() {
        for st in states_full(s, 10, 9) {
            let a = forces(s, SprayKind::Geodesic, st.q.as_slice(), st.v.as_slice()).unwrap();
            let b = forces(
                s,
                SprayKind::GeodesicOfExtension,
                st.q.as_slice(),
                st.v.as_slice(),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn condition_a_alone_gives_projected_extension() {
    // ĝ_θx = cos φ, ĝ_θy = sin φ satisfies (A) but not (B)
    let d = sys("disk");
    let ghat = ext_metric(&d, &[&["cos(phi)", "sin(phi)"], &["0", "0"]], 42.0);
    let certified = ext_metric(&d, &[&["-3*cos(phi)", "-3*sin(phi)"], &["0", "0"]], 42.0);
    let mut geodesic_gap: f64 = 0.0;
    for st in states_on_c(&d, 40, 10) {
        let (q, v) = (st.q.as_slice(), st.v.as_slice());
        let nh = forces(&d, SprayKind::Nonholonomic, q, v).unwrap();
        let p1 = forces(&ghat, SprayKind::ExtProjection, q, v).unwrap();
        assert!(max_abs_diff(&p1, &nh) < 1e-12);
        let g = forces(&ghat, SprayKind::GeodesicOfExtension, q, v).unwrap();
        geodesic_gap = geodesic_gap.max(max_abs_diff(&g, &nh));
        // with (A) and (B) all three coincide on 𝒞
        let full = forces(&certified, SprayKind::GeodesicOfExtension, q, v).unwrap();
        let c1 = forces(&certified, SprayKind::ExtProjection, q, v).unwrap();
        let c2 = forces(&certified, SprayKind::ExtNhConnection, q, v).unwrap();
        assert!(max_abs_diff(&full, &c1) < 1e-12 && max_abs_diff(&full, &c2) < 1e-12);
        assert!(max_abs_diff(&full, &nh) < 1e-12);
    }
    assert!(geodesic_gap > 1e-3);
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sprays_are_quadratic(which in 0usize..6, seed in 0u64..10_000, s in -3.0..3.0f64, kind in 0usize..6) {
        let sys = &all_systems()[which];
        let st: QuasiState = states_full(sys, 1, seed).remove(0);
        let k = ALL_KINDS[kind];
        let f = forces(sys, k, st.q.as_slice(), st.v.as_slice()).unwrap();
        let fs = forces(sys, k, st.q.as_slice(), scaled(&st.v, s).as_slice()).unwrap();
        for (a, b) in f.iter().zip(&fs) {
            prop_assert!((b - s * s * a).abs() <= 1e-12 * (1.0 + (s * s * a).abs()));
        }
    }

    #[test]
    fn builtins_validate_anywhere_in_the_box(which in 0usize..6, seed in 0u64..10_000) {
        let sys = &all_systems()[which];
        let q = halton_points(sys.ranges(), 1, seed).remove(0);
        prop_assert!(sys.geometry(q.as_slice()).is_ok());
    }
}
