//! Independent brute-force oracles used by the test and acceptance suites.
//!
//! Everything here is deliberately written against raw machine integers,
//! separate from the exact-arithmetic path it cross-checks.

use crate::ring::{FieldTag, QuadInt};

fn isqrt(n: i128) -> i128 {
    if n < 0 {
        return -1;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x > 0 && x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Smallest unit greater than one of `Z[w]`, by ascending search over the
/// `w`-coefficient `b`: for each `b` solve `|a^2 + t a b + n b^2| = 1` for
/// integer `a` via the quadratic formula and keep solutions exceeding one.
/// Distinct units greater than one have distinct `b`, so the first hit is
/// the fundamental unit. Returns `None` when no unit has `b <= cap`.
pub fn fundamental_unit_brute(k: i64, cap: u64) -> Option<QuadInt> {
    let k0: i128 = if k % 4 == 1 { 2 } else { 1 };
    let t: i128 = 2 / k0;
    let n: i128 = (1 - k as i128) / (k0 * k0);
    let tag = FieldTag { k, k0: k0 as i64 };
    for b in 1..=(cap as i128) {
        let mut best: Option<i128> = None;
        for s in [1i128, -1] {
            // a^2 + t b a + (n b^2 - s) = 0
            let disc = (t * t - 4 * n) * b * b + 4 * s;
            if disc < 0 {
                continue;
            }
            let r = isqrt(disc);
            if r * r != disc {
                continue;
            }
            for root in [r, -r] {
                let num = -t * b + root;
                if num % 2 != 0 {
                    continue;
                }
                let a = num / 2;
                if exceeds_one(a, b, k as i128, k0) {
                    best = Some(match best {
                        Some(prev) => prev.min(a),
                        None => a,
                    });
                }
            }
        }
        if let Some(a) = best {
            return Some(QuadInt::from_i64(a as i64, b as i64, tag));
        }
    }
    None
}

/// Exact test for `a + b w > 1` with `b >= 1`, i.e. `b sqrt k > k0(1 - a) - b`.
fn exceeds_one(a: i128, b: i128, k: i128, k0: i128) -> bool {
    let rhs = k0 * (1 - a) - b;
    if rhs < 0 {
        return true;
    }
    k * b * b > rhs * rhs
}
