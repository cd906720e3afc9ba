//! Rational reconstruction of floating-point travel times.

use num_integer::Integer;
use num_rational::Ratio;

pub type Rational = Ratio<i64>;

/// Integrality tolerance on `q·x - p`.
pub const RATIONAL_TOL: f64 = 1e-9;
pub const MAX_DENOMINATOR: i64 = 1_000_000;

/// Smallest-denominator fraction `p/q` (with `q <= max_den`) such that
/// `|q·x - p| <= tol`, found among the continued-fraction convergents of `x`.
///
/// The test is on `q·x - p` rather than `x - p/q`: with `q` up to `10^6` an
/// absolute test on `x - p/q` at `10^-9` would accept almost every real.
pub fn reconstruct(x: f64, tol: f64, max_den: i64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let sign = if x < 0.0 { -1 } else { 1 };
    let ax = x.abs();
    if ax * max_den as f64 > i64::MAX as f64 / 4.0 {
        return None;
    }
    let (mut h_prev, mut h) = (1i64, ax.floor() as i64);
    let (mut k_prev, mut k) = (0i64, 1i64);
    let mut rem = ax - ax.floor();
    for _ in 0..64 {
        if (k as f64 * ax - h as f64).abs() <= tol {
            return Some(Rational::new(sign * h, k));
        }
        if rem == 0.0 {
            break;
        }
        let inv = 1.0 / rem;
        let a = inv.floor();
        rem = inv - a;
        if a > (max_den as f64) * 4.0 {
            break;
        }
        let a = a as i64;
        let h_next = a.checked_mul(h)?.checked_add(h_prev)?;
        let k_next = a.checked_mul(k)?.checked_add(k_prev)?;
        if k_next > max_den {
            break;
        }
        (h_prev, h, k_prev, k) = (h, h_next, k, k_next);
    }
    None
}

pub fn reconstruct_default(x: f64) -> Option<Rational> {
    reconstruct(x, RATIONAL_TOL, MAX_DENOMINATOR)
}

/// Greatest common divisor of two nonnegative rationals (`gcd(0, b) = b`).
pub fn gcd(a: Rational, b: Rational) -> Rational {
    let (a, b) = (abs(a), abs(b));
    if *a.numer() == 0 {
        return b;
    }
    if *b.numer() == 0 {
        return a;
    }
    Rational::new(a.numer().gcd(b.numer()), a.denom().lcm(b.denom()))
}

/// Least common multiple of two positive rationals.
pub fn lcm(a: Rational, b: Rational) -> Rational {
    let (a, b) = (abs(a), abs(b));
    Rational::new(a.numer().lcm(b.numer()), a.denom().gcd(b.denom()))
}

fn abs(a: Rational) -> Rational {
    if *a.numer() < 0 {
        -a
    } else {
        a
    }
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
