//! Truncated splittings O ⊗ Z_ℓ ≅ M₂(Z_ℓ), realized as trace-free matrices
//! A, B over Z/ℓ^{n_ℓ} with A² = −ε, B² = −p, AB = −BA, subject to the
//! congruence conditions that make every order basis element land in
//! M₂(Z/ℓ^{n_ℓ}).
//!
//! Seeds are found by deterministic finite searches (companion-matrix
//! families, with a bit-lifting DFS fallback at ℓ = 2) and then lifted one
//! power of ℓ at a time: a linear solve over F_ℓ for odd ℓ, and a verified
//! multivariate Newton step for ℓ = 2.

use crate::arith::{self, add_mod, big, inv_mod, mul_mod, sub_mod, valuation};
use crate::lattice::ClassSet;
use crate::quat::{AlgebraParams, OrderBasis, Quat};
use num::{BigInt, BigRational, Integer, One, Zero};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("ℓ0 = {0} must be a prime not dividing p·N = {1}·{2}")]
    BadHeckePrime(u64, u64, u64),
    #[error("level N = {0} must be positive and coprime to p = {1}")]
    BadLevel(u64, u64),
    #[error("no splitting seed found at ℓ = {0} (internal error)")]
    SeedExhausted(u64),
    #[error("lift step at ℓ = {l} failed: {reason}")]
    LiftFailed { l: u64, reason: String },
    #[error("splitting invariant failed at ℓ = {l}: {reason}")]
    InvariantFailed { l: u64, reason: String },
}

/// A 2×2 matrix over Z/m, row major: [a, b, c, d] = (a b; c d).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Mat2 {
    pub m: u64,
    pub e: [u64; 4],
}

impl Mat2 {
    pub fn new(m: u64, e: [u64; 4]) -> Self {
        Mat2 { m, e: e.map(|x| x % m) }
    }

    pub fn from_i64(m: u64, e: [i64; 4]) -> Self {
        Mat2 { m, e: e.map(|x| x.rem_euclid(m as i64) as u64) }
    }

    pub fn identity(m: u64) -> Self {
        Mat2 { m, e: [1 % m, 0, 0, 1 % m] }
    }

    pub fn zero(m: u64) -> Self {
        Mat2 { m, e: [0; 4] }
    }

    pub fn scalar(m: u64, s: u64) -> Self {
        Mat2 { m, e: [s % m, 0, 0, s % m] }
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        debug_assert_eq!(self.m, o.m);
        Mat2 { m: self.m, e: std::array::from_fn(|k| add_mod(self.e[k], o.e[k], self.m)) }
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        debug_assert_eq!(self.m, o.m);
        Mat2 { m: self.m, e: std::array::from_fn(|k| sub_mod(self.e[k], o.e[k], self.m)) }
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        debug_assert_eq!(self.m, o.m);
        let m = self.m;
        let [a, b, c, d] = self.e;
        let [e, f, g, h] = o.e;
        Mat2 {
            m,
            e: [
                add_mod(mul_mod(a, e, m), mul_mod(b, g, m), m),
                add_mod(mul_mod(a, f, m), mul_mod(b, h, m), m),
                add_mod(mul_mod(c, e, m), mul_mod(d, g, m), m),
                add_mod(mul_mod(c, f, m), mul_mod(d, h, m), m),
            ],
        }
    }

    pub fn scale(&self, s: u64) -> Mat2 {
        Mat2 { m: self.m, e: self.e.map(|x| mul_mod(x, s % self.m, self.m)) }
    }

    pub fn det(&self) -> u64 {
        sub_mod(
            mul_mod(self.e[0], self.e[3], self.m),
            mul_mod(self.e[1], self.e[2], self.m),
            self.m,
        )
    }

    pub fn trace(&self) -> u64 {
        add_mod(self.e[0], self.e[3], self.m)
    }

    /// Adjugate (d −b; −c a); M·adj(M) = det(M)·I.
    pub fn adj(&self) -> Mat2 {
        let m = self.m;
        Mat2 { m, e: [self.e[3], sub_mod(0, self.e[1], m), sub_mod(0, self.e[2], m), self.e[0]] }
    }

    /// Inverse when det is a unit mod m.
    pub fn inv(&self) -> Option<Mat2> {
        let dinv = inv_mod(self.det(), self.m)?;
        Some(self.adj().scale(dinv))
    }

    pub fn reduce(&self, m2: u64) -> Mat2 {
        debug_assert!(self.m % m2 == 0);
        Mat2 { m: m2, e: self.e.map(|x| x % m2) }
    }

    pub fn is_zero(&self) -> bool {
        self.e.iter().all(|&x| x == 0)
    }

    pub fn divisible_by(&self, d: u64) -> bool {
        self.e.iter().all(|&x| x % d == 0)
    }

    /// Divide every entry by d, reducing the modulus (d | m, d | entries).
    pub fn exact_div(&self, d: u64) -> Mat2 {
        debug_assert!(self.m % d == 0);
        Mat2 { m: self.m / d, e: self.e.map(|x| (x / d) % (self.m / d)) }
    }
}

/// Per-prime truncation exponents: m_ℓ, n_ℓ and v_ℓ(N). Basis and class
/// generator images are carried modulo ℓ^{2m_ℓ + v_ℓ(N) + 2}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Precision {
    pub m: u32,
    pub n: u32,
    pub vn: u32,
}

impl Precision {
    pub fn working_exp(&self) -> u32 {
        2 * self.m + self.vn + 2
    }
}

#[derive(Clone, Debug)]
pub struct PrecisionPlan {
    pub level: u64,
    /// ℓ ↦ precision, for every ℓ ∈ V.
    pub primes: BTreeMap<u64, Precision>,
}

pub fn prime_factors(n: u64) -> Vec<u64> {
    let mut n = n;
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Determine V = {ℓ ≠ p : ℓ | nrd(I_j) for some j} ∪ {ℓ0 list} ∪ {ℓ | N} and
/// the per-prime exponents: m_ℓ = max_j v_ℓ(nrd w_ℓ^j), n_ℓ = 2m_ℓ+v_ℓ(N)+4
/// for odd ℓ, n₂ = max(7, 2m₂+v₂(N)+4).
pub fn precision_plan(
    classes: &ClassSet,
    level: u64,
    ell0s: &[u64],
) -> Result<PrecisionPlan, SplitError> {
    let p = classes.params.p;
    if level == 0 || level % p == 0 {
        return Err(SplitError::BadLevel(level, p));
    }
    for &l0 in ell0s {
        if !arith::is_prime(l0) || l0 == p || level % l0 == 0 {
            return Err(SplitError::BadHeckePrime(l0, p, level));
        }
    }
    let mut v: Vec<u64> = Vec::new();
    for class in &classes.classes {
        for &l in class.local_gens.keys() {
            debug_assert_ne!(l, p);
            v.push(l);
        }
    }
    v.extend_from_slice(ell0s);
    v.extend(prime_factors(level));
    v.sort_unstable();
    v.dedup();
    let mut primes = BTreeMap::new();
    for l in v {
        let mut m = 0u32;
        for class in &classes.classes {
            if let Some(w) = class.local_gens.get(&l) {
                m = m.max(arith::valuation_rat(&w.nrd(), l).max(0) as u32);
            }
        }
        let vn = if level % l == 0 { valuation(&big(level as i64), l) } else { 0 };
        let n = 2 * m + vn + 4;
        let n = if l == 2 { n.max(7) } else { n };
        primes.insert(l, Precision { m, n, vn });
    }
    Ok(PrecisionPlan { level, primes })
}

fn denom_of(q: &Quat) -> BigInt {
    q.c.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()))
}

/// The congruence conditions imposed by the order basis: for each s^k with
/// denominator d, the matrix image of d·s^k must be ≡ 0 mod ℓ^{v_ℓ(d)}.
/// Vacuous unless ℓ divides a basis denominator (only ℓ ∈ {2, r} here).
pub fn condition_holds(order: &OrderBasis, l: u64, a: &Mat2, b: &Mat2) -> bool {
    let ab = a.mul(b);
    let m = a.m;
    for s in &order.s {
        let d = denom_of(s);
        let v = valuation(&d, l);
        if v == 0 {
            continue;
        }
        let lv = l.pow(v);
        debug_assert!(m % lv == 0);
        let mats = [Mat2::identity(m), *a, *b, ab];
        let mut img = Mat2::zero(m);
        for k in 0..4 {
            let n_k = (&s.c[k] * BigRational::from(d.clone())).to_integer();
            img = img.add(&mats[k].scale(arith::int_mod(&n_k, m)));
        }
        if !img.divisible_by(lv) {
            return false;
        }
    }
    true
}

pub fn relations_hold(eps: u64, p: u64, a: &Mat2, b: &Mat2) -> bool {
    let m = a.m;
    a.trace() == 0
        && b.trace() == 0
        && a.mul(a) == Mat2::scalar(m, sub_mod(0, eps % m, m))
        && b.mul(b) == Mat2::scalar(m, sub_mod(0, p % m, m))
        && a.mul(b).add(&b.mul(a)).is_zero()
}

/// Trace-free seed pair (A₀, B₀) modulo ℓ² (odd ℓ) or 2⁷, satisfying the
/// three relations and the basis congruence conditions. Deterministic:
/// the lexicographically first admissible candidate of each search family.
pub fn find_splitting_seed(
    params: &AlgebraParams,
    order: &OrderBasis,
    l: u64,
) -> Result<(Mat2, Mat2), SplitError> {
    assert_ne!(l, params.p, "no splitting at the ramified prime");
    if l == 2 {
        seed_at_two(params, order)
    } else {
        seed_odd(params, order, l)
    }
}

/// Companion family for odd ℓ: A₀ = (0 −ε; 1 0), B₀ = (b₁ ε·y; y −b₁)
/// (anti-commutation forces the ε·y entry), scanning (y, b₁) for
/// b₁² + ε·y² ≡ −p mod ℓ². Covers ℓ = r, where the basis congruence filters
/// the candidates down to b₁ ≡ −a^{-1} mod r.
fn seed_odd(
    params: &AlgebraParams,
    order: &OrderBasis,
    l: u64,
) -> Result<(Mat2, Mat2), SplitError> {
    let m = l * l;
    let eps = params.eps % m;
    let a = Mat2::from_i64(m, [0, -(eps as i64), 1, 0]);
    let target = sub_mod(0, params.p % m, m);
    for y in 0..m {
        let ey2 = mul_mod(mul_mod(eps, y, m), y, m);
        for b1 in 0..m {
            if add_mod(mul_mod(b1, b1, m), ey2, m) != target {
                continue;
            }
            let b = Mat2::new(m, [b1, mul_mod(eps, y, m), y, sub_mod(0, b1, m)]);
            if relations_hold(params.eps, params.p, &a, &b)
                && condition_holds(order, l, &a, &b)
            {
                return Ok((a, b));
            }
        }
    }
    Err(SplitError::SeedExhausted(l))
}

fn seed_at_two(params: &AlgebraParams, order: &OrderBasis) -> Result<(Mat2, Mat2), SplitError> {
    let m = 1u64 << 7;
    let p = params.p;
    let eps = params.eps;
    if p % 8 != 1 {
        // companion family exactly as in the odd case
        let a = Mat2::from_i64(m, [0, -((eps % m) as i64), 1, 0]);
        let target = sub_mod(0, p % m, m);
        for y in 0..m {
            let ey2 = mul_mod(mul_mod(eps % m, y, m), y, m);
            for b1 in 0..m {
                if add_mod(mul_mod(b1, b1, m), ey2, m) != target {
                    continue;
                }
                let b = Mat2::new(m, [b1, mul_mod(eps % m, y, m), y, sub_mod(0, b1, m)]);
                if relations_hold(eps, p, &a, &b) && condition_holds(order, 2, &a, &b) {
                    return Ok((a, b));
                }
            }
        }
    } else {
        // p ≡ 1 mod 8: the basis needs A ≡ I mod 2, so scan trace-free
        // A = (a₁ 2u; 2v −a₁) with a₁ odd, solve anti-commutation linearly
        // for b₁ and scan the remaining two entries of B
        let half = m / 2;
        for u in 0..half {
            for v in 0..half {
                let a2 = 2 * u;
                let a3 = 2 * v;
                for a1 in (1..m).step_by(2) {
                    if add_mod(mul_mod(a1, a1, m), mul_mod(a2, a3, m), m)
                        != sub_mod(0, eps % m, m)
                    {
                        continue;
                    }
                    let a = Mat2::new(m, [a1, a2, a3, sub_mod(0, a1, m)]);
                    let a1_inv = inv_mod(a1 % half, half).expect("a1 odd");
                    for b2 in 0..m {
                        for b3 in 0..m {
                            let s = add_mod(mul_mod(a2, b3, m), mul_mod(a3, b2, m), m);
                            debug_assert_eq!(s % 2, 0);
                            let b1_base = mul_mod(sub_mod(0, (s / 2) % half, half), a1_inv, half);
                            for b1 in [b1_base, b1_base + half] {
                                let b = Mat2::new(m, [b1, b2, b3, sub_mod(0, b1, m)]);
                                if relations_hold(eps, p, &a, &b)
                                    && condition_holds(order, 2, &a, &b)
                                {
                                    return Ok((a, b));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    seed_at_two_dfs(params, order)
}

/// Fallback for ℓ = 2: depth-first bit lifting over all trace-free pairs
/// from mod 8 up to mod 2⁷, pruning by the relations and by the mod-4 basis
/// congruences (already determined at mod 8).
fn seed_at_two_dfs(
    params: &AlgebraParams,
    order: &OrderBasis,
) -> Result<(Mat2, Mat2), SplitError> {
    fn rels_mod(eps: u64, p: u64, t: &[u64; 6], m: u64) -> bool {
        let f1 = add_mod(add_mod(mul_mod(t[0], t[0], m), mul_mod(t[1], t[2], m), m), eps % m, m);
        let f2 = add_mod(add_mod(mul_mod(t[3], t[3], m), mul_mod(t[4], t[5], m), m), p % m, m);
        let f3 = add_mod(
            add_mod(mul_mod(2 * t[0] % m, t[3], m), mul_mod(t[1], t[5], m), m),
            mul_mod(t[2], t[4], m),
            m,
        );
        f1 == 0 && f2 == 0 && f3 == 0
    }
    fn mats(t: &[u64; 6], m: u64) -> (Mat2, Mat2) {
        (
            Mat2::new(m, [t[0], t[1], t[2], sub_mod(0, t[0], m)]),
            Mat2::new(m, [t[3], t[4], t[5], sub_mod(0, t[3], m)]),
        )
    }
    let eps = params.eps;
    let p = params.p;
    let mut roots = Vec::new();
    for code in 0..8u64.pow(6) {
        let mut t = [0u64; 6];
        let mut c = code;
        for k in (0..6).rev() {
            t[k] = c % 8;
            c /= 8;
        }
        if rels_mod(eps, p, &t, 8) {
            let (a, b) = mats(&t, 8);
            if condition_holds(order, 2, &a, &b) {
                roots.push(t);
            }
        }
    }
    let mut stack: Vec<([u64; 6], u32)> = roots.into_iter().rev().map(|t| (t, 3)).collect();
    let mut nodes = 0u64;
    while let Some((t, k)) = stack.pop() {
        nodes += 1;
        if nodes > 20_000_000 {
            return Err(SplitError::SeedExhausted(2));
        }
        if k == 7 {
            let (a, b) = mats(&t, 1 << 7);
            if relations_hold(eps, p, &a, &b) && condition_holds(order, 2, &a, &b) {
                return Ok((a, b));
            }
            continue;
        }
        let step = 1u64 << k;
        let m2 = 1u64 << (k + 1);
        for code in (0..64u64).rev() {
            let mut t2 = t;
            for bit in 0..6 {
                if code >> bit & 1 == 1 {
                    t2[bit] += step;
                }
            }
            if rels_mod(eps, p, &t2, m2) {
                stack.push((t2, k + 1));
            }
        }
    }
    Err(SplitError::SeedExhausted(2))
}

/// 2×2 matrices over Z/m at arbitrary precision, for lift chains whose
/// modulus grows past u64 (the in-engine path stays on `Mat2`).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WideMat2 {
    pub m: BigInt,
    pub e: [BigInt; 4],
}

impl WideMat2 {
    pub fn new(m: BigInt, e: [BigInt; 4]) -> Self {
        let e = e.map(|x| x.mod_floor(&m));
        WideMat2 { m, e }
    }

    pub fn from_mat2(a: &Mat2) -> Self {
        Self::new(big(a.m as i64), a.e.map(|x| big(x as i64)))
    }

    pub fn to_mat2(&self) -> Option<Mat2> {
        let m = u64::try_from(&self.m).ok()?;
        let mut e = [0u64; 4];
        for k in 0..4 {
            e[k] = u64::try_from(&self.e[k]).ok()?;
        }
        Some(Mat2 { m, e })
    }

    pub fn scalar(m: BigInt, s: BigInt) -> Self {
        let s = s.mod_floor(&m);
        WideMat2 { e: [s.clone(), BigInt::zero(), BigInt::zero(), s], m }
    }

    pub fn add(&self, o: &WideMat2) -> WideMat2 {
        debug_assert_eq!(self.m, o.m);
        let e = std::array::from_fn(|k| (&self.e[k] + &o.e[k]).mod_floor(&self.m));
        WideMat2 { m: self.m.clone(), e }
    }

    pub fn mul(&self, o: &WideMat2) -> WideMat2 {
        debug_assert_eq!(self.m, o.m);
        let [a, b, c, d] = &self.e;
        let [e, f, g, h] = &o.e;
        WideMat2 {
            m: self.m.clone(),
            e: [
                (a * e + b * g).mod_floor(&self.m),
                (a * f + b * h).mod_floor(&self.m),
                (c * e + d * g).mod_floor(&self.m),
                (c * f + d * h).mod_floor(&self.m),
            ],
        }
    }

    pub fn scale(&self, s: &BigInt) -> WideMat2 {
        let e = std::array::from_fn(|k| (&self.e[k] * s).mod_floor(&self.m));
        WideMat2 { m: self.m.clone(), e }
    }

    pub fn is_zero(&self) -> bool {
        self.e.iter().all(|x| x.is_zero())
    }
}

pub fn relations_hold_wide(eps: u64, p: u64, a: &WideMat2, b: &WideMat2) -> bool {
    let m = &a.m;
    let neg = |x: u64| WideMat2::scalar(m.clone(), -big(x as i64));
    (&a.e[0] + &a.e[3]).mod_floor(m).is_zero()
        && (&b.e[0] + &b.e[3]).mod_floor(m).is_zero()
        && a.mul(a) == neg(eps)
        && b.mul(b) == neg(p)
        && a.mul(b).add(&b.mul(a)).is_zero()
}

/// One step of the odd-ℓ lift: trace-free A₀, B₀ with the relations mod ℓ^m
/// (m ≥ 2, A₀ and B₀ not proportional mod ℓ) are corrected by ℓ^m·X, ℓ^m·Y
/// where (X, Y) solves the 3×6 system
/// (2a₁ a₃ a₂ 0 0 0; 0 0 0 2b₁ b₃ b₂; 2b₁ b₃ b₂ 2a₁ a₃ a₂) = defects over F_ℓ.
pub fn lift_step_odd_wide(
    eps: u64,
    p: u64,
    a: &WideMat2,
    b: &WideMat2,
    l: u64,
) -> Result<(WideMat2, WideMat2), SplitError> {
    let lb = big(l as i64);
    let m_old = a.m.clone();
    debug_assert!((&m_old % (&lb * &lb)).is_zero(), "lift requires m ≥ 2");
    let m_new = &m_old * &lb;
    let fail = |reason: &str| SplitError::LiftFailed { l, reason: reason.into() };

    // trace-free representatives mod ℓ^{m+1} (the (2,2) entry is −a₁ in the
    // larger modulus, not the old residue)
    let tf = |x: &WideMat2| {
        WideMat2::new(
            m_new.clone(),
            [x.e[0].clone(), x.e[1].clone(), x.e[2].clone(), -x.e[0].clone()],
        )
    };
    let a_new = tf(a);
    let b_new = tf(b);
    let d1 = a_new.mul(&a_new).add(&WideMat2::scalar(m_new.clone(), big(eps as i64)));
    let d2 = b_new.mul(&b_new).add(&WideMat2::scalar(m_new.clone(), big(p as i64)));
    let d3 = a_new.mul(&b_new).add(&b_new.mul(&a_new));
    let mut rhs = [0u64; 3];
    for (k, d) in [d1, d2, d3].iter().enumerate() {
        let ok = d.e.iter().all(|x| (x % &m_old).is_zero())
            && d.e[1].is_zero()
            && d.e[2].is_zero()
            && d.e[0] == d.e[3];
        if !ok {
            return Err(fail("defect is not ℓ^m times a scalar"));
        }
        let s = arith::int_mod(&(&d.e[0] / &m_old), l);
        rhs[k] = sub_mod(0, s, l);
    }
    let am = |k: usize| arith::int_mod(&a.e[k], l);
    let bm = |k: usize| arith::int_mod(&b.e[k], l);
    let ra = [(2 * am(0)) % l, am(2), am(1)];
    let rb = [(2 * bm(0)) % l, bm(2), bm(1)];
    let mut sys = [[0u64; 7]; 3];
    for k in 0..3 {
        sys[0][k] = ra[k];
        sys[1][3 + k] = rb[k];
        sys[2][k] = rb[k];
        sys[2][3 + k] = ra[k];
        sys[k][6] = rhs[k];
    }
    let sol = solve_mod_l(&mut sys, l)
        .ok_or_else(|| fail("increment system inconsistent (A₀ ∝ B₀ mod ℓ)"))?;
    let x = WideMat2::new(
        m_new.clone(),
        [big(sol[0] as i64), big(sol[1] as i64), big(sol[2] as i64), -big(sol[0] as i64)],
    );
    let y = WideMat2::new(
        m_new.clone(),
        [big(sol[3] as i64), big(sol[4] as i64), big(sol[5] as i64), -big(sol[3] as i64)],
    );
    let a1 = a_new.add(&x.scale(&m_old));
    let b1 = b_new.add(&y.scale(&m_old));
    if !relations_hold_wide(eps, p, &a1, &b1) {
        return Err(fail("lifted pair fails the relations"));
    }
    Ok((a1, b1))
}

/// u64 wrapper around [`lift_step_odd_wide`], for moduli within machine range.
pub fn lift_step_odd(
    eps: u64,
    p: u64,
    a: &Mat2,
    b: &Mat2,
    l: u64,
) -> Result<(Mat2, Mat2), SplitError> {
    if a.m.checked_mul(l).is_none() {
        return Err(SplitError::LiftFailed { l, reason: "modulus overflow".into() });
    }
    let (aw, bw) = lift_step_odd_wide(eps, p, &WideMat2::from_mat2(a), &WideMat2::from_mat2(b), l)?;
    Ok((aw.to_mat2().expect("fits"), bw.to_mat2().expect("fits")))
}

/// Gaussian elimination over F_ℓ on the augmented 3×7 system; particular
/// solution with free variables at 0, or None when inconsistent.
fn solve_mod_l(sys: &mut [[u64; 7]; 3], l: u64) -> Option<[u64; 6]> {
    let mut row = 0usize;
    let mut pivots = Vec::new();
    for col in 0..6 {
        if row >= 3 {
            break;
        }
        if let Some(piv) = (row..3).find(|&r| sys[r][col] % l != 0) {
            sys.swap(row, piv);
            let inv = inv_mod(sys[row][col] % l, l)?;
            for c in 0..7 {
                sys[row][c] = mul_mod(sys[row][c] % l, inv, l);
            }
            for r in 0..3 {
                if r != row && sys[r][col] % l != 0 {
                    let f = sys[r][col] % l;
                    for c in 0..7 {
                        sys[r][c] = sub_mod(sys[r][c] % l, mul_mod(f, sys[row][c], l), l);
                    }
                }
            }
            pivots.push((row, col));
            row += 1;
        }
    }
    for r in row..3 {
        if sys[r][6] % l != 0 {
            return None;
        }
    }
    let mut sol = [0u64; 6];
    for &(r, c) in &pivots {
        sol[c] = sys[r][6] % l;
    }
    Some(sol)
}

/// One verified 2-adic Newton step: a tuple (a,b,c,x,y,z) satisfying
/// a²+bc = −ε, x²+yz = −p, 2ax+bz+cy = 0 mod 2^m (m ≥ 7) is lifted to
/// mod 2^{m+1} using the first 3-variable subset whose Jacobian determinant
/// has 2-adic valuation < 4 and whose Newton step verifies by substitution.
pub fn lift_step_2adic(t: &[u64; 6], m: u32, eps: u64, p: u64) -> Result<[u64; 6], SplitError> {
    assert!(m >= 7, "2-adic lift requires m ≥ 7");
    assert!(m <= 40, "modulus exceeds the i128 working range");
    let modulus = 1i128 << m;
    let modulus2 = 1i128 << (m + 1);
    let fail = |reason: &str| SplitError::LiftFailed { l: 2, reason: reason.into() };
    let f = |t: &[i128; 6], md: i128| -> [i128; 3] {
        [
            (t[0] * t[0] + t[1] * t[2] + eps as i128).rem_euclid(md),
            (t[3] * t[3] + t[4] * t[5] + p as i128).rem_euclid(md),
            (2 * t[0] * t[3] + t[1] * t[5] + t[2] * t[4]).rem_euclid(md),
        ]
    };
    let ti: [i128; 6] = std::array::from_fn(|k| t[k] as i128);
    if f(&ti, modulus).iter().any(|&x| x != 0) {
        return Err(fail("input does not satisfy the equations mod 2^m"));
    }
    let grad: [[i128; 6]; 3] = [
        [2 * ti[0], ti[2], ti[1], 0, 0, 0],
        [0, 0, 0, 2 * ti[3], ti[5], ti[4]],
        [2 * ti[3], ti[5], ti[4], 2 * ti[0], ti[2], ti[1]],
    ];
    for i in 0..6 {
        for j in i + 1..6 {
            for k in j + 1..6 {
                let vars = [i, j, k];
                let df: [[i128; 3]; 3] =
                    std::array::from_fn(|r| std::array::from_fn(|c| grad[r][vars[c]]));
                let det = det3(&df);
                if det == 0 {
                    continue;
                }
                let val = det.trailing_zeros();
                if val >= 4 {
                    continue;
                }
                // δ = −adj(Df)·F/det, with adj·F ≡ 0 mod 2^m ⊇ 2^val
                let fv = f(&ti, 1i128 << (m + 1 + val));
                let adj = adj3(&df);
                let odd = det >> val;
                let odd_inv = match inv_mod_pow2(odd, m + 1) {
                    Some(x) => x,
                    None => continue,
                };
                let mut t2 = ti;
                let mut ok = true;
                for r in 0..3 {
                    let acc: i128 = (0..3).map(|c| adj[r][c] * fv[c]).sum();
                    if acc.rem_euclid(1 << val) != 0 {
                        ok = false;
                        break;
                    }
                    let delta = ((-(acc >> val)).rem_euclid(modulus2) * odd_inv)
                        .rem_euclid(modulus2);
                    t2[vars[r]] = (t2[vars[r]] + delta).rem_euclid(modulus2);
                }
                if !ok {
                    continue;
                }
                // verify, never trust: equations mod 2^{m+1}, and the update
                // stays ≡ 0 mod 2^{m−val} (so in particular the mod-16 part,
                // hence the basis congruences, never move once m ≥ 7)
                let agree = 1i128 << (m - val);
                if f(&t2, modulus2).iter().all(|&x| x == 0)
                    && (0..6).all(|s| (t2[s] - ti[s]).rem_euclid(agree) == 0)
                {
                    return Ok(std::array::from_fn(|s| t2[s] as u64));
                }
            }
        }
    }
    Err(fail("no admissible variable subset lifted the solution"))
}

fn det3(m: &[[i128; 3]; 3]) -> i128 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn adj3(m: &[[i128; 3]; 3]) -> [[i128; 3]; 3] {
    let cof = |r: usize, c: usize| -> i128 {
        let rs: Vec<usize> = (0..3).filter(|&x| x != r).collect();
        let cs: Vec<usize> = (0..3).filter(|&x| x != c).collect();
        let minor = m[rs[0]][cs[0]] * m[rs[1]][cs[1]] - m[rs[0]][cs[1]] * m[rs[1]][cs[0]];
        if (r + c) % 2 == 0 {
            minor
        } else {
            -minor
        }
    };
    std::array::from_fn(|r| std::array::from_fn(|c| cof(c, r)))
}

fn inv_mod_pow2(a: i128, bits: u32) -> Option<i128> {
    let m = 1i128 << bits;
    let a = a.rem_euclid(m);
    if a % 2 == 0 {
        return None;
    }
    let mut x = 1i128;
    let mut k = 1;
    while k < bits {
        x = (x * (2 - a * x)).rem_euclid(m);
        k *= 2;
    }
    Some(x)
}

/// A per-prime splitting: the lifted pair (A, B) mod ℓ^{n_ℓ}, the order
/// basis images S^1..S^4 and class generator images W^1..W^h modulo the
/// working precision ℓ^{2m_ℓ + v_ℓ(N) + 2}.
#[derive(Clone, Debug)]
pub struct SplittingData {
    pub l: u64,
    pub prec: Precision,
    pub a_mat: Mat2,
    pub b_mat: Mat2,
    pub s_img: [Mat2; 4],
    pub w_img: Vec<Mat2>,
}

impl SplittingData {
    pub fn working_modulus(&self) -> u64 {
        self.l.pow(self.prec.working_exp())
    }

    /// Image of an element with ℓ-integral coordinates at any modulus
    /// dividing ℓ^{n_ℓ}.
    pub fn image_at(&self, q: &Quat, modulus: u64) -> Option<Mat2> {
        debug_assert_eq!(self.a_mat.m % modulus, 0);
        let a = self.a_mat.reduce(modulus);
        let b = self.b_mat.reduce(modulus);
        let mats = [Mat2::identity(modulus), a, b, a.mul(&b)];
        let mut acc = Mat2::zero(modulus);
        for k in 0..4 {
            let c = arith::rat_mod(&q.c[k], modulus)?;
            acc = acc.add(&mats[k].scale(c));
        }
        Some(acc)
    }

    /// Image of t·s¹ + x·s² + y·s³ + z·s⁴ at the working modulus.
    pub fn image_of_coords(&self, coords: &[BigInt; 4]) -> Mat2 {
        let m = self.working_modulus();
        let mut acc = Mat2::zero(m);
        for k in 0..4 {
            acc = acc.add(&self.s_img[k].scale(arith::int_mod(&coords[k], m)));
        }
        acc
    }
}

/// Compute the splitting at one ℓ ∈ V: seed, lift to ℓ^{n_ℓ}, verify the
/// relations and basis conditions at full modulus, then form S- and
/// W-images with exact cancellation of denominator ℓ-parts.
pub fn compute_splitting(
    params: &AlgebraParams,
    order: &OrderBasis,
    classes: &ClassSet,
    l: u64,
    prec: Precision,
) -> Result<SplittingData, SplitError> {
    let (mut a, mut b) = find_splitting_seed(params, order, l)?;
    if l == 2 {
        let mut t = [a.e[0], a.e[1], a.e[2], b.e[0], b.e[1], b.e[2]];
        let mut m = 7u32;
        while m < prec.n {
            t = lift_step_2adic(&t, m, params.eps, params.p)?;
            m += 1;
        }
        let md = 1u64 << prec.n;
        a = Mat2::new(md, [t[0], t[1], t[2], sub_mod(0, t[0], md)]);
        b = Mat2::new(md, [t[3], t[4], t[5], sub_mod(0, t[3], md)]);
    } else {
        let mut m = 2u32;
        while m < prec.n {
            let (a1, b1) = lift_step_odd(params.eps, params.p, &a, &b, l)?;
            a = a1;
            b = b1;
            m += 1;
        }
    }
    let inv_fail = |reason: String| SplitError::InvariantFailed { l, reason };
    if !relations_hold(params.eps, params.p, &a, &b) {
        return Err(inv_fail("relations fail at full modulus".into()));
    }
    if !condition_holds(order, l, &a, &b) {
        return Err(inv_fail("basis congruences fail at full modulus".into()));
    }

    let working = l.pow(prec.working_exp());
    let n_mod = l.pow(prec.n);
    debug_assert!(n_mod >= working * l * l, "headroom for denominator division");
    let mats = [Mat2::identity(n_mod), a, b, a.mul(&b)];
    let mut s_img: [Mat2; 4] = [Mat2::zero(working); 4];
    for (k, s) in order.s.iter().enumerate() {
        let d = denom_of(s);
        let v = valuation(&d, l);
        let lv = l.pow(v);
        let mut num = Mat2::zero(n_mod);
        for c in 0..4 {
            let n_c = (&s.c[c] * BigRational::from(d.clone())).to_integer();
            num = num.add(&mats[c].scale(arith::int_mod(&n_c, n_mod)));
        }
        if !num.divisible_by(lv) {
            return Err(inv_fail(format!("image of s^{} not divisible by {}", k + 1, lv)));
        }
        let reduced_mod = n_mod / lv;
        let unit = arith::int_mod(&(&d / BigInt::from(lv)), reduced_mod);
        let unit_inv = inv_mod(unit, reduced_mod)
            .ok_or_else(|| inv_fail("denominator unit not invertible".into()))?;
        let img = num.exact_div(lv).scale(unit_inv).reduce(working);
        let nrd_k = arith::rat_mod(&s.nrd(), working)
            .ok_or_else(|| inv_fail("basis nrd not ℓ-integral".into()))?;
        if img.det() != nrd_k {
            return Err(inv_fail(format!("det(S^{}) ≠ nrd(s^{})", k + 1, k + 1)));
        }
        s_img[k] = img;
    }

    let mut w_img = Vec::with_capacity(classes.h());
    for j in 0..classes.h() {
        let w = classes.local_gen(order, j, l);
        let coords = order.coords_of(&w);
        let mut acc = Mat2::zero(working);
        for k in 0..4 {
            debug_assert!(coords[k].is_integer());
            acc = acc.add(&s_img[k].scale(arith::int_mod(&coords[k].to_integer(), working)));
        }
        let nrd_w = arith::rat_mod(&w.nrd(), working)
            .ok_or_else(|| inv_fail("class generator nrd not ℓ-integral".into()))?;
        if acc.det() != nrd_w {
            return Err(inv_fail(format!("det(W^{}) ≠ nrd(w^{})", j + 1, j + 1)));
        }
        w_img.push(acc);
    }

    Ok(SplittingData { l, prec, a_mat: a, b_mat: b, s_img, w_img })
}
