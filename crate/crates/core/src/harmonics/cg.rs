use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

const LN_FACT_LEN: usize = 512;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_LEN);
        // direct product while it stays finite, so small arguments are exact to rounding
        let mut f = 1.0f64;
        t.push(0.0);
        for n in 1..LN_FACT_LEN {
            if n <= 170 {
                f *= n as f64;
                t.push(f.ln());
            } else {
                let prev = t[n - 1];
                t.push(prev + (n as f64).ln());
            }
        }
        t
    })
}

fn fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![1.0f64];
        for n in 1..=170 {
            let prev = t[n - 1];
            t.push(prev * n as f64);
        }
        t
    })
}

/// n! as a float; exact through 22!, correctly rounded products beyond.
pub(crate) fn factorial(n: i64) -> f64 {
    fact_table()[n as usize]
}

/// Largest factorial-argument sum for which products of factorials are formed directly.
/// Beyond it every magnitude goes through log-factorials.
pub(crate) const DIRECT_LIMIT: i64 = 120;

pub(crate) fn ln_factorial(n: i64) -> f64 {
    assert!(n >= 0, "factorial of negative number");
    let t = ln_fact_table();
    let n = n as usize;
    assert!(n < t.len(), "factorial argument {n} beyond table");
    t[n]
}

/// Clebsch-Gordan coefficient <l1 m1 l2 m2 | l m>, Condon-Shortley phase.
///
/// Returns exactly 0 outside the selection and triangle rules.
pub fn clebsch_gordan(l1: i64, m1: i64, l2: i64, m2: i64, l: i64, m: i64) -> f64 {
    if l1 < 0 || l2 < 0 || l < 0 {
        return 0.0;
    }
    if m1.abs() > l1 || m2.abs() > l2 || m.abs() > l {
        return 0.0;
    }
    if m1 + m2 != m || l < (l1 - l2).abs() || l > l1 + l2 {
        return 0.0;
    }
    let k_min = 0.max(l2 - l - m1).max(l1 + m2 - l);
    let k_max = (l1 + l2 - l).min(l1 - m1).min(l2 + m2);
    let dens = |k: i64| [k, l1 + l2 - l - k, l1 - m1 - k, l2 + m2 - k, l - l2 + m1 + k, l - l1 - m2 + k];
    let mut sum = 0.0;
    if l1 + l2 + l + 1 <= DIRECT_LIMIT {
        let f = factorial;
        let pre = ((2 * l + 1) as f64 * f(l + l1 - l2) * f(l - l1 + l2) * f(l1 + l2 - l) / f(l1 + l2 + l + 1)).sqrt()
            * (f(l + m) * f(l - m)).sqrt()
            * (f(l1 - m1) * f(l1 + m1)).sqrt()
            * (f(l2 - m2) * f(l2 + m2)).sqrt();
        for k in k_min..=k_max {
            let den: f64 = dens(k).iter().map(|&a| f(a)).product();
            let mag = pre / den;
            if k % 2 == 0 {
                sum += mag;
            } else {
                sum -= mag;
            }
        }
        return sum;
    }
    let lf = ln_factorial;
    let ln_pre = 0.5
        * (((2 * l + 1) as f64).ln() + lf(l + l1 - l2) + lf(l - l1 + l2) + lf(l1 + l2 - l) - lf(l1 + l2 + l + 1)
            + lf(l + m)
            + lf(l - m)
            + lf(l1 - m1)
            + lf(l1 + m1)
            + lf(l2 - m2)
            + lf(l2 + m2));
    for k in k_min..=k_max {
        let ln_den: f64 = dens(k).iter().map(|&a| lf(a)).sum();
        let mag = (ln_pre - ln_den).exp();
        if k % 2 == 0 {
            sum += mag;
        } else {
            sum -= mag;
        }
    }
    sum
}

#[inline]
fn block_len(l1: usize, l2: usize) -> usize {
    (2 * l1 + 1) * (2 * l2 + 1)
}

/// All Clebsch-Gordan coefficients with l1, l2, l <= l_max, stored as one dense block per
/// admissible triple (l1, l2, l). Block entry [(m1+l1)(2 l2+1) + (m2+l2)] holds
/// <l1 m1 l2 m2 | l, m1+m2>.
#[derive(Debug, Clone)]
pub struct CgTable {
    l_max: usize,
    offsets: Vec<Option<usize>>,
    values: Vec<f64>,
}

impl CgTable {
    pub fn new(l_max: usize) -> Self {
        let n = l_max + 1;
        let mut offsets = vec![None; n * n * n];
        let mut values = Vec::new();
        for l1 in 0..n {
            for l2 in 0..n {
                for l in l1.abs_diff(l2)..=(l1 + l2).min(l_max) {
                    offsets[(l1 * n + l2) * n + l] = Some(values.len());
                    let (i1, i2, il) = (l1 as i64, l2 as i64, l as i64);
                    for m1 in -i1..=i1 {
                        for m2 in -i2..=i2 {
                            values.push(clebsch_gordan(i1, m1, i2, m2, il, m1 + m2));
                        }
                    }
                }
            }
        }
        CgTable {
            l_max,
            offsets,
            values,
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// The dense block for (l1, l2) coupled to l, or None if the triangle rule fails.
    pub fn block(&self, l1: usize, l2: usize, l: usize) -> Option<&[f64]> {
        if l1 > self.l_max || l2 > self.l_max || l > self.l_max {
            return None;
        }
        let n = self.l_max + 1;
        self.offsets[(l1 * n + l2) * n + l].map(|o| &self.values[o..o + block_len(l1, l2)])
    }

    /// Cached coefficient lookup; falls back to direct evaluation beyond the table.
    pub fn get(&self, l1: i64, m1: i64, l2: i64, m2: i64, l: i64, m: i64) -> f64 {
        if m1 + m2 != m || l1 < 0 || l2 < 0 || l < 0 || m1.abs() > l1 || m2.abs() > l2 || m.abs() > l {
            return 0.0;
        }
        match self.block(l1 as usize, l2 as usize, l as usize) {
            Some(b) => b[((m1 + l1) * (2 * l2 + 1) + (m2 + l2)) as usize],
            None if l1.max(l2).max(l) as usize > self.l_max => clebsch_gordan(l1, m1, l2, m2, l, m),
            None => 0.0,
        }
    }

    /// Projection of a (x) b onto H_l1: out[k1] = sum_{k2+k3=k1} <l2 k2 l3 k3 | l1 k1> a[k2] b[k3].
    ///
    /// Writes into `out` (length 2 l1 + 1). The caller guarantees the triangle rule.
    pub fn project_into(&self, a: &[Complex64], b: &[Complex64], l1: usize, out: &mut [Complex64]) {
        let l2 = (a.len() - 1) / 2;
        let l3 = (b.len() - 1) / 2;
        let blk = self.block(l2, l3, l1).expect("triangle rule violated");
        let (i1, i2, i3) = (l1 as i64, l2 as i64, l3 as i64);
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        let w3 = 2 * l3 + 1;
        for (j2, &ak) in a.iter().enumerate() {
            let k2 = j2 as i64 - i2;
            let lo = (-i3).max(-i1 - k2);
            let hi = i3.min(i1 - k2);
            for k3 in lo..=hi {
                let j3 = (k3 + i3) as usize;
                let c = blk[j2 * w3 + j3];
                out[(k2 + k3 + i1) as usize] += ak * b[j3] * c;
            }
        }
    }

    pub fn project(&self, a: &[Complex64], b: &[Complex64], l1: usize) -> Result<Vec<Complex64>> {
        check_odd(a.len(), "a")?;
        check_odd(b.len(), "b")?;
        let l2 = (a.len() - 1) / 2;
        let l3 = (b.len() - 1) / 2;
        if l1 < l2.abs_diff(l3) || l1 > l2 + l3 {
            return Err(Error::InvalidArgument(format!(
                "cg_project: band {l1} is not in the product of bands {l2} and {l3}"
            )));
        }
        if l1.max(l2).max(l3) > self.l_max {
            return cg_table(l1.max(l2).max(l3)).project(a, b, l1);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * l1 + 1];
        self.project_into(a, b, l1, &mut out);
        Ok(out)
    }
}

fn check_odd(n: usize, name: &str) -> Result<()> {
    if n % 2 == 1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("cg_project: {name} has even length {n}")))
    }
}

/// Shared immutable table covering at least `l_max`. Grows on demand.
pub fn cg_table(l_max: usize) -> Arc<CgTable> {
    static CACHE: OnceLock<RwLock<Option<Arc<CgTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(None));
    if let Some(t) = cache.read().unwrap().as_ref() {
        if t.l_max >= l_max {
            return Arc::clone(t);
        }
    }
    let mut w = cache.write().unwrap();
    if let Some(t) = w.as_ref() {
        if t.l_max >= l_max {
            return Arc::clone(t);
        }
    }
    let t = Arc::new(CgTable::new(l_max));
    *w = Some(Arc::clone(&t));
    t
}

/// Component of a (x) b in H_l1, with bands inferred from the vector lengths.
pub fn cg_project(a: &[Complex64], b: &[Complex64], l1: usize) -> Result<Vec<Complex64>> {
    check_odd(a.len(), "a")?;
    check_odd(b.len(), "b")?;
    let need = l1.max((a.len() - 1) / 2).max((b.len() - 1) / 2);
    cg_table(need).project(a, b, l1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_coupling_is_one() {
        for l in 0..6 {
            for m in -l..=l {
                assert!((clebsch_gordan(0, 0, l, m, l, m) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn selection_rules_give_exact_zero() {
        assert_eq!(clebsch_gordan(1, 1, 1, 0, 2, 0), 0.0);
        assert_eq!(clebsch_gordan(1, 0, 1, 0, 3, 0), 0.0);
        assert_eq!(clebsch_gordan(2, 0, 0, 0, 1, 0), 0.0);
        assert_eq!(clebsch_gordan(1, 2, 1, -2, 2, 0), 0.0);
    }

    #[test]
    fn known_values() {
        assert!((clebsch_gordan(1, 1, 1, -1, 2, 0) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!(clebsch_gordan(1, 0, 1, 0, 1, 0).abs() < 1e-15);
        assert!((clebsch_gordan(1, 1, 1, -1, 0, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((clebsch_gordan(1, 0, 1, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn high_band_values_are_finite_and_normalized() {
        let (l1, l2, l) = (20i64, 20i64, 20i64);
        let mut s = 0.0;
        for m1 in -l1..=l1 {
            let m2 = 3 - m1;
            if m2.abs() <= l2 {
                let c = clebsch_gordan(l1, m1, l2, m2, l, 3);
                assert!(c.is_finite());
                s += c * c;
            }
        }
        assert!((s - 1.0).abs() < 1e-10, "{s}");
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let t = CgTable::new(4);
        for l1 in 0..=4i64 {
            for l2 in 0..=4i64 {
                for l in 0..=4i64 {
                    for m1 in -l1..=l1 {
                        for m2 in -l2..=l2 {
                            let m = m1 + m2;
                            assert_eq!(t.get(l1, m1, l2, m2, l, m), clebsch_gordan(l1, m1, l2, m2, l, m));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn project_rejects_triangle_violation() {
        let a = vec![Complex64::new(1.0, 0.0); 3];
        let b = vec![Complex64::new(1.0, 0.0); 3];
        assert!(cg_project(&a, &b, 3).is_err());
        assert!(cg_project(&a, &b[..2], 1).is_err());
    }

    #[test]
    fn projecting_with_the_trivial_band_is_identity() {
        let one = vec![Complex64::new(1.0, 0.0)];
        let b: Vec<Complex64> = (0..7).map(|k| Complex64::new(k as f64, -0.5 * k as f64)).collect();
        let out = cg_project(&one, &b, 3).unwrap();
        for (o, x) in out.iter().zip(&b) {
            assert!((o - x).norm() < 1e-14 * (1.0 + x.norm()));
        }
    }
}
