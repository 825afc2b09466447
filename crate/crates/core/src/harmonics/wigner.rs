use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::cg::{factorial, ln_factorial, DIRECT_LIMIT};
use super::rotation::Rotation;

#[derive(Debug, Clone, Copy)]
struct Term {
    coef: f64,
    cos_pow: u32,
    sin_pow: u32,
}

/// Precomputed factorial-sum terms of d^l_{a,b}(beta) for every l <= l_max.
///
/// d^l_{a,b}(beta) = sum_k coef_k cos(beta/2)^p_k sin(beta/2)^q_k.
#[derive(Debug, Clone)]
pub struct WignerTable {
    l_max: usize,
    // per band, per (a, b) row-major entry: range into `terms`
    ranges: Vec<Vec<(u32, u32)>>,
    terms: Vec<Term>,
}

impl WignerTable {
    pub fn new(l_max: usize) -> Self {
        let mut ranges = Vec::with_capacity(l_max + 1);
        let mut terms = Vec::new();
        for l in 0..=l_max {
            let j = l as i64;
            let mut band = Vec::with_capacity((2 * l + 1) * (2 * l + 1));
            for a in -j..=j {
                for b in -j..=j {
                    let start = terms.len() as u32;
                    // p q stays finite for 2j <= 80; sqrt(p p) == p keeps d(0) exactly the identity
                    let direct = 2 * j <= DIRECT_LIMIT.min(80);
                    let pre = if direct {
                        let p = factorial(j + a) * factorial(j - a);
                        let q = factorial(j + b) * factorial(j - b);
                        (p * q).sqrt()
                    } else {
                        0.0
                    };
                    let ln_pre = 0.5 * (ln_factorial(j + a) + ln_factorial(j - a) + ln_factorial(j + b) + ln_factorial(j - b));
                    let k_min = 0.max(b - a);
                    let k_max = (j + b).min(j - a);
                    for k in k_min..=k_max {
                        let args = [j + b - k, k, a - b + k, j - a - k];
                        let mag = if direct {
                            pre / args.iter().map(|&n| factorial(n)).product::<f64>()
                        } else {
                            (ln_pre - args.iter().map(|&n| ln_factorial(n)).sum::<f64>()).exp()
                        };
                        let sign = if (a - b + k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                        terms.push(Term {
                            coef: sign * mag,
                            cos_pow: (2 * j + b - a - 2 * k) as u32,
                            sin_pow: (a - b + 2 * k) as u32,
                        });
                    }
                    band.push((start, terms.len() as u32));
                }
            }
            ranges.push(band);
        }
        WignerTable { l_max, ranges, terms }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    fn powers(&self, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let (s, c) = (0.5 * beta).sin_cos();
        let n = 2 * self.l_max + 1;
        let mut cp = vec![1.0; n];
        let mut sp = vec![1.0; n];
        for i in 1..n {
            cp[i] = cp[i - 1] * c;
            sp[i] = sp[i - 1] * s;
        }
        (cp, sp)
    }

    fn entry(&self, l: usize, idx: usize, cp: &[f64], sp: &[f64]) -> f64 {
        let (s, e) = self.ranges[l][idx];
        self.terms[s as usize..e as usize]
            .iter()
            .map(|t| t.coef * cp[t.cos_pow as usize] * sp[t.sin_pow as usize])
            .sum()
    }

    pub fn small_d(&self, l: usize, beta: f64) -> DMatrix<f64> {
        assert!(l <= self.l_max);
        let (cp, sp) = self.powers(beta);
        let w = 2 * l + 1;
        DMatrix::from_fn(w, w, |r, c| self.entry(l, r * w + c, &cp, &sp))
    }

    /// Small-d matrices for all bands 0..=l.
    pub fn small_d_all(&self, l: usize, beta: f64) -> Vec<DMatrix<f64>> {
        assert!(l <= self.l_max);
        let (cp, sp) = self.powers(beta);
        (0..=l)
            .map(|b| {
                let w = 2 * b + 1;
                DMatrix::from_fn(w, w, |r, c| self.entry(b, r * w + c, &cp, &sp))
            })
            .collect()
    }

    pub fn big_d(&self, l: usize, g: &Rotation) -> DMatrix<Complex64> {
        let d = self.small_d(l, g.beta());
        dress(&d, l, g.alpha(), g.gamma())
    }

    /// D^b(g) for all bands 0..=l.
    pub fn big_d_all(&self, l: usize, g: &Rotation) -> Vec<DMatrix<Complex64>> {
        self.small_d_all(l, g.beta())
            .iter()
            .enumerate()
            .map(|(b, d)| dress(d, b, g.alpha(), g.gamma()))
            .collect()
    }
}

/// e^{-i m alpha} d_{m,m'} e^{-i m' gamma}.
fn dress(d: &DMatrix<f64>, l: usize, alpha: f64, gamma: f64) -> DMatrix<Complex64> {
    let j = l as i64;
    let ea: Vec<Complex64> = (-j..=j).map(|m| Complex64::from_polar(1.0, -(m as f64) * alpha)).collect();
    let eg: Vec<Complex64> = (-j..=j).map(|m| Complex64::from_polar(1.0, -(m as f64) * gamma)).collect();
    DMatrix::from_fn(d.nrows(), d.ncols(), |r, c| ea[r] * d[(r, c)] * eg[c])
}

pub fn wigner_table(l_max: usize) -> Arc<WignerTable> {
    static CACHE: OnceLock<RwLock<Option<Arc<WignerTable>>>> = OnceLock::new();
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
    let t = Arc::new(WignerTable::new(l_max));
    *w = Some(Arc::clone(&t));
    t
}

/// d^l(beta), rows and columns indexed m = -l..l.
pub fn wigner_small_d(l: usize, beta: f64) -> DMatrix<f64> {
    wigner_table(l).small_d(l, beta)
}

/// D^l(g)_{m,m'} = e^{-i m alpha} d^l_{m,m'}(beta) e^{-i m' gamma}.
pub fn wigner_d(l: usize, g: &Rotation) -> DMatrix<Complex64> {
    wigner_table(l).big_d(l, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_at_zero_angle() {
        for l in 0..8 {
            let d = wigner_small_d(l, 0.0);
            assert_eq!(d, DMatrix::identity(2 * l + 1, 2 * l + 1));
        }
    }

    #[test]
    fn band_one_closed_forms() {
        let s2 = 2f64.sqrt();
        for &b in &[0.0, 0.3, 1.2, PI / 2.0, 2.5, PI] {
            let d = wigner_small_d(1, b);
            let (sb, cb) = b.sin_cos();
            // rows and columns run m = -1, 0, 1
            let want = [
                [(1.0 + cb) / 2.0, sb / s2, (1.0 - cb) / 2.0],
                [-sb / s2, cb, sb / s2],
                [(1.0 - cb) / 2.0, -sb / s2, (1.0 + cb) / 2.0],
            ];
            for r in 0..3 {
                for c in 0..3 {
                    assert!((d[(r, c)] - want[r][c]).abs() < 1e-14, "beta {b} entry {r},{c}");
                }
            }
        }
        assert!(wigner_small_d(1, PI)[(2, 2)].abs() < 1e-15);
    }

    #[test]
    fn band_zero_is_one() {
        let g = Rotation::new(1.0, 2.0, 3.0);
        let d = wigner_d(0, &g);
        assert_eq!(d[(0, 0)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn small_d_is_orthogonal() {
        for l in [2usize, 7, 15] {
            let d = wigner_small_d(l, 1.1);
            let e = (&d * d.transpose() - DMatrix::identity(2 * l + 1, 2 * l + 1)).abs().max();
            assert!(e < 1e-12, "l={l} err={e}");
        }
    }
}
