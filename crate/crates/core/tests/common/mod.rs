#![allow(dead_code)]

//! Exact Clebsch-Gordan values from Racah's sum in rational arithmetic.
//!
//! The coefficient is sqrt(P) * S with P and S rational, so the square and the sign are known
//! exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

fn fact(n: i64) -> BigInt {
    (1..=n).fold(BigInt::one(), |a, k| a * BigInt::from(k))
}

pub fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// (CG^2, sign) exactly; sign 0 when the coefficient vanishes.
pub fn exact(j1: i64, m1: i64, j2: i64, m2: i64, j: i64, m: i64) -> (BigRational, i32) {
    let zero = (BigRational::zero(), 0);
    if m1 + m2 != m || j < (j1 - j2).abs() || j > j1 + j2 || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return zero;
    }
    let p = ratio(
        BigInt::from(2 * j + 1) * fact(j + j1 - j2) * fact(j - j1 + j2) * fact(j1 + j2 - j),
        fact(j1 + j2 + j + 1),
    ) * ratio(
        fact(j + m) * fact(j - m) * fact(j1 - m1) * fact(j1 + m1) * fact(j2 - m2) * fact(j2 + m2),
        BigInt::one(),
    );
    let mut s = BigRational::zero();
    for k in 0..=(j1 + j2 - j) {
        let args = [k, j1 + j2 - j - k, j1 - m1 - k, j2 + m2 - k, j - j2 + m1 + k, j - j1 - m2 + k];
        if args.iter().any(|&a| a < 0) {
            continue;
        }
        let den = args.iter().fold(BigInt::one(), |a, &x| a * fact(x));
        let term = ratio(BigInt::one(), den);
        if k % 2 == 0 {
            s += term;
        } else {
            s -= term;
        }
    }
    if s.is_zero() {
        return zero;
    }
    let sign = if s.is_positive() { 1 } else { -1 };
    (p * s.clone() * s, sign)
}
