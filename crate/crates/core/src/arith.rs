//! Small number-theoretic helpers shared across the crate.
//!
//! Everything here is exact: `BigInt`/`BigRational` only, no floating point.

use num::bigint::Sign;
use num::{BigInt, BigRational, Integer, Signed, Zero};

/// Deterministic primality test by trial division. Inputs at desk scale
/// (p ≤ a few thousand), so this is plenty.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Legendre symbol (a | p) for an odd prime p, via Euler's criterion.
pub fn legendre(a: i64, p: u64) -> i32 {
    debug_assert!(p > 2 && is_prime(p));
    let a = a.rem_euclid(p as i64) as u64;
    if a == 0 {
        return 0;
    }
    let e = pow_mod(a, (p - 1) / 2, p);
    if e == 1 {
        1
    } else {
        debug_assert_eq!(e, p - 1);
        -1
    }
}

/// a^e mod m with u128 intermediates.
pub fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    acc
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    (((a as u128 + m as u128) - (b % m) as u128) % m as u128) as u64
}

/// Inverse of a mod m when gcd(a, m) = 1; None otherwise.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (m as i128, (a % m) as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    if r != 1 {
        return None;
    }
    Some(t.rem_euclid(m as i128) as u64)
}

/// ℓ-adic valuation of a nonzero integer.
pub fn valuation(n: &BigInt, l: u64) -> u32 {
    assert!(!n.is_zero(), "valuation of zero");
    let l = BigInt::from(l);
    let mut n = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&l);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

/// ℓ-adic valuation of a nonzero rational (may be negative).
pub fn valuation_rat(q: &BigRational, l: u64) -> i64 {
    assert!(!q.is_zero());
    valuation(q.numer(), l) as i64 - valuation(q.denom(), l) as i64
}

/// Exact integer square root: Some(s) iff n = s² with s ≥ 0.
pub fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let s = n.sqrt();
    if &s * &s == *n {
        Some(s)
    } else {
        None
    }
}

/// Exact rational square root.
pub fn exact_sqrt_rat(q: &BigRational) -> Option<BigRational> {
    let n = exact_sqrt(q.numer())?;
    let d = exact_sqrt(q.denom())?;
    Some(BigRational::new(n, d))
}

/// Largest n ≥ 0 with n² ≤ q, for q ≥ 0.
pub fn floor_sqrt_rat(q: &BigRational) -> BigInt {
    assert!(!q.is_negative());
    let mut s = q.to_integer().sqrt();
    // to_integer truncates; fix up both directions to be safe
    while &(&s + 1u32) * &(&s + 1u32) <= q.to_integer() {
        s += 1u32;
    }
    let sq = BigRational::from(&s * &s);
    if sq > *q {
        while BigRational::from(&s * &s) > *q {
            s -= 1u32;
        }
    }
    s
}

pub fn big(n: i64) -> BigInt {
    BigInt::from(n)
}

pub fn rat(n: i64) -> BigRational {
    BigRational::from(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Reduce a rational with denominator coprime to m into Z/m.
pub fn rat_mod(q: &BigRational, m: u64) -> Option<u64> {
    let mb = BigInt::from(m);
    let n = q.numer().mod_floor(&mb).to_u64_digits().1;
    let d = q.denom().mod_floor(&mb).to_u64_digits().1;
    let n = n.first().copied().unwrap_or(0);
    let d = d.first().copied().unwrap_or(0);
    let dinv = inv_mod(d, m)?;
    Some(mul_mod(n, dinv, m))
}

/// BigInt mod m as u64 (m fits in u64).
pub fn int_mod(n: &BigInt, m: u64) -> u64 {
    let mb = BigInt::from(m);
    let r = n.mod_floor(&mb);
    match r.to_u64_digits() {
        (Sign::NoSign, _) => 0,
        (_, digits) => digits[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality_and_legendre() {
        assert!(is_prime(2) && is_prime(11) && is_prime(97));
        assert!(!is_prime(1) && !is_prime(91));
        assert_eq!(legendre(3, 17), -1);
        assert_eq!(legendre(-1, 11), -1);
        assert_eq!(legendre(2, 7), 1);
    }

    #[test]
    fn valuations() {
        assert_eq!(valuation(&big(48), 2), 4);
        assert_eq!(valuation_rat(&ratio(3, 8), 2), -3);
        assert_eq!(exact_sqrt(&big(144)), Some(big(12)));
        assert_eq!(exact_sqrt(&big(2)), None);
        assert_eq!(floor_sqrt_rat(&ratio(17, 4)), big(2));
    }

    #[test]
    fn modular() {
        assert_eq!(inv_mod(3, 11), Some(4));
        assert_eq!(inv_mod(2, 4), None);
        assert_eq!(rat_mod(&ratio(1, 2), 11), Some(6));
        assert_eq!(int_mod(&big(-1), 7), 6);
    }
}
