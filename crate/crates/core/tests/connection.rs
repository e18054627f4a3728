#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use nalgebra::DMatrix;
use nhext_core::connection::{
    barred_connection, compatibility_residual, levi_civita, nonholonomic_connection,
    torsion_residual, transport_covector, transport_vector,
};
use nhext_core::geometry::halton_points;
use nhext_core::systems::from_str;
use nhext_core::{ConnectionKind, MetricSpec, System};
use proptest::prelude::*;

fn euclid() -> System {
    let text = r#"{"coordinates": ["a", "b", "c"], "constraint_rank": 2,
        "frame": [["1","0","0"],["0","1","0"],["0","0","1"]],
        "metric": {"kind": "coordinate", "entries": [["1","0","0"],["0","1","0"],["0","0","1"]]}}"#;
    System::new(from_str(text, nhext_core::systems::Format::Json).unwrap()).unwrap()
}

#[test]
fn euclidean_tables_vanish() {
    let s = euclid();
    let q = [0.3, -0.1, 0.8];
    assert_eq!(levi_civita(&s, &q[..]).unwrap().gamma.max_abs(), 0.0);
    assert_eq!(
        nonholonomic_connection(&s, &q[..]).unwrap().gamma.max_abs(),
        0.0
    );
    assert_eq!(barred_connection(&s, &q[..]).unwrap().gamma.max_abs(), 0.0);
}

#[test]
fn disk_constrained_christoffels_vanish() {
    let d = sys("disk");
    let mut worst: f64 = 0.0;
    for q in halton_points(d.ranges(), 64, 0) {
        let lc = levi_civita(&d, q.as_slice()).unwrap();
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    worst = worst.max(lc.get(c, a, b).abs());
                }
            }
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

/// `Γ^γ_{αβ} = (A⁻¹)^γ_λ (X_α(A^λ_β) + Γ^λ_{μν} A^μ_α A^ν_β)` from the
/// coordinate Christoffels.
fn frame_christoffel_oracle(s: &System, q: &[f64]) -> Vec<DMatrix<f64>> {
    let n = s.n();
    let h = 1e-6;
    let a = frame(s, q);
    let ainv = a.clone().try_inverse().unwrap();
    let cg = coord_christoffel(&s.spec, q);
    let da: Vec<DMatrix<f64>> = (0..n)
        .map(|al| {
            let p: Vec<f64> = (0..n).map(|i| q[i] + h * a[(i, al)]).collect();
            let m: Vec<f64> = (0..n).map(|i| q[i] - h * a[(i, al)]).collect();
            (frame(s, &p) - frame(s, &m)) / (2.0 * h)
        })
        .collect();
    (0..n)
        .map(|g| {
            DMatrix::from_fn(n, n, |al, be| {
                let mut s = 0.0;
                for l in 0..n {
                    let mut inner = da[al][(l, be)];
                    for mu in 0..n {
                        for nu in 0..n {
                            inner += cg[l][(mu, nu)] * a[(mu, al)] * a[(nu, be)];
                        }
                    }
                    s += ainv[(g, l)] * inner;
                }
                s
            })
        })
        .collect()
}

#[test]
fn levi_civita_matches_coordinate_oracle() {
    let mut systems: Vec<&System> = all_systems()
        .iter()
        .filter(|s| matches!(s.spec.metric, MetricSpec::Coordinate { .. }))
        .collect();
    let carriage = sys_with("carriage", &[("l", 0.3)]);
    systems.push(&carriage);
    assert!(systems.len() >= 4);
    for s in systems {
        for q in halton_points(s.ranges(), 5, 8) {
            let lc = levi_civita(s, q.as_slice()).unwrap();
            let or = frame_christoffel_oracle(s, &q);
            for g in 0..s.n() {
                for a in 0..s.n() {
                    for b in 0..s.n() {
                        let d = (lc.get(g, a, b) - or[g][(a, b)]).abs();
                        assert!(
                            d < 1e-7,
                            "{} Γ^{g}_{a}{b}: {} vs {}",
                            s.name(),
                            lc.get(g, a, b),
                            or[g][(a, b)]
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn particle_symmetrized_christoffel() {
    let p = sys("particle");
    // ∇_{X_y}X_x = ∂z = (y X_x + X_1)/(1+y²) and ∇_{X_x}X_y = 0, so the
    // symmetrized coefficient is 1/(2(1+y²))
    for y in [0.0, 0.3, -0.5, 0.8] {
        let lc = levi_civita(&p, &[0.1, y, -0.2][..]).unwrap();
        let sym = 0.5 * (lc.get(2, 0, 1) + lc.get(2, 1, 0));
        let want = 1.0 / (2.0 * (1.0 + y * y));
        assert!((sym - want).abs() < 1e-12, "y = {y}: {sym} vs {want}");
    }
    // (1−y)/(2(1+y²)(1+y)) at y = 0
    let lc = levi_civita(&p, &[0.0, 0.0, 0.0][..]).unwrap();
    assert!((0.5 * (lc.get(2, 0, 1) + lc.get(2, 1, 0)) - 0.5).abs() < 1e-10);
    assert!((lc.get(2, 0, 1) - 0.0).abs() < 1e-14 && (lc.get(2, 1, 0) - 1.0).abs() < 1e-14);
}

/// `∇^{nh}_X Y = P(∇_X Y) + ∇_X(Q Y)` column by column.
#[test]
fn nonholonomic_connection_matches_projector_definition() {
    for s in all_systems() {
        let (n, m) = (s.n(), s.m());
        for q in halton_points(s.ranges(), 4, 2) {
            let lc = levi_civita(s, q.as_slice()).unwrap();
            let nh = nonholonomic_connection(s, q.as_slice()).unwrap();
            for a in 0..n {
                for b in 0..n {
                    for g in 0..n {
                        let p_part = if g < m { lc.get(g, a, b) } else { 0.0 };
                        let q_part = if b >= m { lc.get(g, a, b) } else { 0.0 };
                        assert!((nh.get(g, a, b) - (p_part + q_part)).abs() < 1e-12);
                    }
                }
            }
            // the (a,b)→c block agrees with Levi-Civita
            let bar = barred_connection(s, q.as_slice()).unwrap();
            for c in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        assert!((nh.get(c, a, b) - lc.get(c, a, b)).abs() < 1e-12);
                        assert!((bar.get(c, a, b) - lc.get(c, a, b)).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn disk_barred_mixed_entries_are_brackets() {
    let d = sys("disk");
    let q = [0.2, 0.1, -0.4, 0.9];
    let bar = barred_connection(&d, &q[..]).unwrap();
    let r = d.bracket_coeffs(&q).unwrap();
    // ∇̄_{X_x} X_φ along X_θ is R^θ_{xφ}; ∇̄_{X_φ} X_x along X_y is R^y_{φx}
    assert!((bar.get(0, 2, 1) - r.get(0, 2, 1)).abs() < 1e-15);
    assert!((bar.get(3, 1, 2) - r.get(3, 1, 2)).abs() < 1e-15);
    assert!(r.get(0, 2, 1).abs() > 0.1);
}

#[test]
fn vector_transport_keeps_complement() {
    let d = sys("disk");
    let ts = transport_vector(
        &d,
        ConnectionKind::Barred,
        &[0.0; 4],
        &[1.0, 1.0],
        &[0.0, 0.0, 1.0, -0.5],
        1.0,
        1e-3,
    )
    .unwrap();
    let worst =
        ts.w.iter()
            .fold(0.0_f64, |m, w| m.max(w[0].abs()).max(w[1].abs()));
    assert!(worst < 1e-9);
}

#[test]
fn zero_covector_without_source_stays_zero() {
    let s = euclid();
    let ts = transport_covector(&s, &[0.0; 3], &[0.4, -0.2], &[0.0; 3], 1.0, 1e-2).unwrap();
    assert!(ts.h.iter().all(|h| h.iter().all(|x| *x == 0.0)));
    // on the disk the multipliers feed h_i but h_b stays zero
    let d = sys("disk");
    let ts = transport_covector(&d, &[0.0; 4], &[1.0, 1.0], &[0.0; 4], 1.0, 1e-3).unwrap();
    assert!(ts
        .h
        .iter()
        .all(|h| h[0].abs() < 1e-12 && h[1].abs() < 1e-12));
    assert!(ts.h.iter().any(|h| h[2].abs() > 1e-3));
}

#[test]
fn levi_civita_transport_preserves_norm() {
    for s in all_systems().iter().filter(|s| s.name() != "carriage") {
        let n = s.n();
        let q0 = halton_points(s.ranges(), 1, 3).remove(0);
        let va: Vec<f64> = (0..s.m()).map(|i| 0.5 - 0.3 * i as f64).collect();
        let w0: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let ts = transport_vector(s, ConnectionKind::LeviCivita, &q0, &va, &w0, 0.5, 1e-3).unwrap();
        let norm = |st: &nhext_core::QuasiState, w: &[f64]| {
            let g = s.frame_metric(st.q.as_slice()).unwrap();
            (0..n)
                .map(|i| (0..n).map(|j| g[(i, j)] * w[i] * w[j]).sum::<f64>())
                .sum::<f64>()
        };
        let n0 = norm(&ts.states[0], &ts.w[0]);
        for (st, w) in ts.states.iter().zip(&ts.w) {
            assert!((norm(st, w) - n0).abs() < 1e-9, "{}", s.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn levi_civita_is_torsion_free_and_compatible(which in 0usize..6, seed in 0u64..10_000) {
        let s = &all_systems()[which];
        let q = &halton_points(s.ranges(), 1, seed)[0];
        let geo = s.geometry(q.as_slice()).unwrap();
        let lc = levi_civita(s, q.as_slice()).unwrap();
        prop_assert!(torsion_residual(&geo, &lc.gamma) < 1e-9);
        prop_assert!(compatibility_residual(&geo, &lc.gamma) < 1e-9);
    }
}
