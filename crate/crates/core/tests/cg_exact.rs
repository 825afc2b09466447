//! Clebsch-Gordan coefficients against exact rational arithmetic.

mod common;

use common::{exact, ratio};
use num_traits::ToPrimitive;
use orbit_core::harmonics::{cg_table, clebsch_gordan};

#[test]
fn agrees_with_exact_racah_values_through_band_four() {
    let mut checked = 0;
    for j1 in 0..=4i64 {
        for j2 in 0..=4i64 {
            for j in (j1 - j2).abs()..=(j1 + j2).min(4) {
                for m1 in -j1..=j1 {
                    for m2 in -j2..=j2 {
                        let m = m1 + m2;
                        if m.abs() > j {
                            continue;
                        }
                        let (sq, sign) = exact(j1, m1, j2, m2, j, m);
                        let v = clebsch_gordan(j1, m1, j2, m2, j, m);
                        if sign == 0 {
                            assert!(v.abs() < 1e-15, "<{j1} {m1} {j2} {m2}|{j} {m}> = {v}, exactly 0");
                        } else {
                            let want = sign as f64 * sq.to_f64().unwrap().sqrt();
                            assert!(
                                (v - want).abs() <= 1e-14 * want.abs(),
                                "<{j1} {m1} {j2} {m2}|{j} {m}> = {v}, exact {want}"
                            );
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn frozen_exact_values() {
    // <1 0 1 0|2 0>^2 = 2/3 and <1 1 1 -1|0 0> = 1/sqrt 3
    assert_eq!(exact(1, 0, 1, 0, 2, 0), (ratio(2.into(), 3.into()), 1));
    assert_eq!(exact(1, 1, 1, -1, 0, 0), (ratio(1.into(), 3.into()), 1));
    assert_eq!(exact(1, 0, 1, 0, 1, 0).1, 0);
    // <2 1 1 -1|2 0> = 1/sqrt 2, <2 -1 1 1|2 0> = -1/sqrt 2
    assert_eq!(exact(2, 1, 1, -1, 2, 0), (ratio(1.into(), 2.into()), 1));
    assert_eq!(exact(2, -1, 1, 1, 2, 0), (ratio(1.into(), 2.into()), -1));
}

#[test]
fn orthogonality_through_band_six() {
    let table = cg_table(6);
    for j1 in 0..=6i64 {
        for j2 in 0..=6i64 {
            // sum over (m1, m2) of <j1 m1 j2 m2|J M><j1 m1 j2 m2|J' M> = delta_{J J'}
            for jj in (j1 - j2).abs()..=(j1 + j2).min(6) {
                for jp in (j1 - j2).abs()..=(j1 + j2).min(6) {
                    for m in -jj.min(jp)..=jj.min(jp) {
                        let mut s = 0.0;
                        for m1 in -j1..=j1 {
                            let m2 = m - m1;
                            if m2.abs() <= j2 {
                                s += table.get(j1, m1, j2, m2, jj, m) * table.get(j1, m1, j2, m2, jp, m);
                            }
                        }
                        let want = if jj == jp { 1.0 } else { 0.0 };
                        assert!((s - want).abs() < 1e-12, "({j1},{j2}) J={jj} J'={jp} M={m}: {s}");
                    }
                }
            }
            // and the completeness relation over (J, M)
            for m1 in -j1..=j1 {
                for m2 in -j2..=j2 {
                    for n1 in -j1..=j1 {
                        let n2 = m1 + m2 - n1;
                        if n2.abs() > j2 || j1 + j2 > 6 {
                            continue;
                        }
                        let s: f64 = ((j1 - j2).abs()..=j1 + j2)
                            .map(|jj| table.get(j1, m1, j2, m2, jj, m1 + m2) * table.get(j1, n1, j2, n2, jj, m1 + m2))
                            .sum();
                        let want = if n1 == m1 { 1.0 } else { 0.0 };
                        assert!((s - want).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
