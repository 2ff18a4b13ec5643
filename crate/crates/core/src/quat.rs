//! Exact arithmetic in the definite quaternion algebra D = (−ε, −p | Q).
//!
//! Generators satisfy i² = −ε, j² = −p, ij = −ji. The parameter ε depends on
//! p mod 8 so that D is ramified exactly at {p, ∞}:
//!   ε = 1 for p ≡ 3 mod 4 or p = 2,
//!   ε = 2 for p ≡ 5 mod 8,
//!   ε = r for p ≡ 1 mod 8, with r prime, r ≡ 3 mod 4 and (r | p) = −1.
//!
//! All coefficients are arbitrary-precision rationals; nothing here is
//! floating point.

use crate::arith::{self, big, rat};
use num::{BigInt, BigRational, Signed, Zero};
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum QuatError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("search limit exceeded while looking for {0}")]
    SearchExhausted(&'static str),
    #[error("maximal order validation failed for p = {p}: {reason}")]
    OrderValidation { p: u64, reason: String },
    #[error("trace pairing determinant {0} is not a perfect square")]
    NonSquareDiscriminant(BigInt),
}

/// The defining constants of D = (−ε, −p | Q). Cheap to copy; every element
/// carries one so mixed-algebra arithmetic is caught immediately.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Algebra {
    pub p: u64,
    pub eps: u64,
}

/// Parameters selecting the algebra for a given p, including the auxiliary
/// prime r and witness a (with r | a²p + 1) in the p ≡ 1 mod 8 case.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AlgebraParams {
    pub p: u64,
    pub eps: u64,
    pub r: Option<u64>,
    pub a: Option<u64>,
}

impl AlgebraParams {
    pub fn algebra(&self) -> Algebra {
        Algebra { p: self.p, eps: self.eps }
    }
}

/// Pick ε (and r, a where applicable) for a prime p. r and a are the smallest
/// valid choices, so results are reproducible.
pub fn build_algebra(p: u64) -> Result<AlgebraParams, QuatError> {
    if !arith::is_prime(p) {
        return Err(QuatError::NotPrime(p));
    }
    if p == 2 || p % 4 == 3 {
        return Ok(AlgebraParams { p, eps: 1, r: None, a: None });
    }
    if p % 8 == 5 {
        return Ok(AlgebraParams { p, eps: 2, r: None, a: None });
    }
    // p ≡ 1 mod 8: smallest prime r ≡ 3 mod 4 with (r | p) = −1
    let mut r = 3u64;
    loop {
        if r > 10_000 {
            return Err(QuatError::SearchExhausted("auxiliary prime r"));
        }
        if r % 4 == 3 && arith::is_prime(r) && arith::legendre(r as i64, p) == -1 {
            break;
        }
        r += 1;
    }
    let mut a = 0u64;
    loop {
        if a > r {
            return Err(QuatError::SearchExhausted("witness a with r | a^2 p + 1"));
        }
        if (a * a % r * (p % r) + 1) % r == 0 {
            break;
        }
        a += 1;
    }
    Ok(AlgebraParams { p, eps: r, r: Some(r), a: Some(a) })
}

/// An element c0 + c1·i + c2·j + c3·ij of D, with rational coefficients.
#[derive(Clone, PartialEq, Eq)]
pub struct Quat {
    pub alg: Algebra,
    pub c: [BigRational; 4],
}

impl fmt::Debug for Quat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}*i + {}*j + {}*ij)", self.c[0], self.c[1], self.c[2], self.c[3])
    }
}

impl Quat {
    pub fn new(alg: Algebra, c: [BigRational; 4]) -> Self {
        Quat { alg, c }
    }

    pub fn from_ints(alg: Algebra, c: [i64; 4]) -> Self {
        Quat { alg, c: [rat(c[0]), rat(c[1]), rat(c[2]), rat(c[3])] }
    }

    pub fn zero(alg: Algebra) -> Self {
        Self::from_ints(alg, [0, 0, 0, 0])
    }

    pub fn one(alg: Algebra) -> Self {
        Self::from_ints(alg, [1, 0, 0, 0])
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    pub fn add(&self, rhs: &Quat) -> Quat {
        assert_eq!(self.alg, rhs.alg, "mixed quaternion algebras");
        let c = std::array::from_fn(|k| &self.c[k] + &rhs.c[k]);
        Quat { alg: self.alg, c }
    }

    pub fn sub(&self, rhs: &Quat) -> Quat {
        assert_eq!(self.alg, rhs.alg, "mixed quaternion algebras");
        let c = std::array::from_fn(|k| &self.c[k] - &rhs.c[k]);
        Quat { alg: self.alg, c }
    }

    pub fn neg(&self) -> Quat {
        let c = std::array::from_fn(|k| -&self.c[k]);
        Quat { alg: self.alg, c }
    }

    pub fn scale(&self, s: &BigRational) -> Quat {
        let c = std::array::from_fn(|k| &self.c[k] * s);
        Quat { alg: self.alg, c }
    }

    /// Quaternion product under i² = −ε, j² = −p, ij = −ji.
    pub fn mul(&self, rhs: &Quat) -> Quat {
        assert_eq!(self.alg, rhs.alg, "mixed quaternion algebras");
        let eps = rat(self.alg.eps as i64);
        let p = rat(self.alg.p as i64);
        let [a0, a1, a2, a3] = &self.c;
        let [b0, b1, b2, b3] = &rhs.c;
        let c0 = a0 * b0 - &eps * (a1 * b1) - &p * (a2 * b2) - &eps * &p * (a3 * b3);
        let c1 = a0 * b1 + a1 * b0 + &p * (a2 * b3 - a3 * b2);
        let c2 = a0 * b2 + a2 * b0 - &eps * (a1 * b3 - a3 * b1);
        let c3 = a0 * b3 + a3 * b0 + (a1 * b2 - a2 * b1);
        Quat { alg: self.alg, c: [c0, c1, c2, c3] }
    }

    /// Standard involution: negates the i, j, ij parts.
    pub fn conj(&self) -> Quat {
        Quat {
            alg: self.alg,
            c: [self.c[0].clone(), -&self.c[1], -&self.c[2], -&self.c[3]],
        }
    }

    /// Reduced trace x + conj(x) = 2·c0.
    pub fn trd(&self) -> BigRational {
        &self.c[0] + &self.c[0]
    }

    /// Reduced norm x·conj(x) = c0² + ε c1² + p c2² + εp c3².
    pub fn nrd(&self) -> BigRational {
        let eps = rat(self.alg.eps as i64);
        let p = rat(self.alg.p as i64);
        let [c0, c1, c2, c3] = &self.c;
        c0 * c0 + &eps * (c1 * c1) + &p * (c2 * c2) + &eps * &p * (c3 * c3)
    }

    /// Inverse conj(x)/nrd(x); panics on zero.
    pub fn inv(&self) -> Quat {
        let n = self.nrd();
        assert!(!n.is_zero(), "inverse of zero quaternion");
        self.conj().scale(&n.recip())
    }
}

/// A Z-basis {s¹, s², s³, s⁴} of the maximal order O ⊂ D, together with the
/// inverse of its coefficient matrix for coordinate computations.
#[derive(Clone, Debug)]
pub struct OrderBasis {
    pub alg: Algebra,
    pub s: [Quat; 4],
    /// inv[k] is row k of the inverse of the 4×4 matrix whose columns are the
    /// (1, i, j, ij)-coefficients of s¹..s⁴.
    inv: [[BigRational; 4]; 4],
}

fn invert4(cols: &[[BigRational; 4]; 4]) -> Option<[[BigRational; 4]; 4]> {
    // Gauss-Jordan on [M | I] where M has the given columns.
    let mut m: Vec<Vec<BigRational>> = (0..4)
        .map(|r| {
            let mut row: Vec<BigRational> = (0..4).map(|c| cols[c][r].clone()).collect();
            for k in 0..4 {
                row.push(if k == r { rat(1) } else { rat(0) });
            }
            row
        })
        .collect();
    for col in 0..4 {
        let piv = (col..4).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let pv = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x = &*x / &pv;
        }
        for r in 0..4 {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..8 {
                    let t = &m[col][c] * &f;
                    m[r][c] = &m[r][c] - &t;
                }
            }
        }
    }
    Some(std::array::from_fn(|r| std::array::from_fn(|c| m[r][c + 4].clone())))
}

impl OrderBasis {
    pub fn from_elements(alg: Algebra, s: [Quat; 4]) -> Option<Self> {
        let cols: [[BigRational; 4]; 4] = std::array::from_fn(|k| s[k].c.clone());
        let inv = invert4(&cols)?;
        Some(OrderBasis { alg, s, inv })
    }

    /// Coordinates of q in the s-basis (exact rationals).
    pub fn coords_of(&self, q: &Quat) -> [BigRational; 4] {
        std::array::from_fn(|r| {
            (0..4).map(|c| &self.inv[r][c] * &q.c[c]).fold(rat(0), |a, b| a + b)
        })
    }

    /// True iff q lies in the Z-span of the basis.
    pub fn contains(&self, q: &Quat) -> bool {
        self.coords_of(q).iter().all(|x| x.is_integer())
    }

    /// Element with the given integer s-coordinates.
    pub fn from_coords(&self, v: &[BigInt; 4]) -> Quat {
        let mut acc = Quat::zero(self.alg);
        for k in 0..4 {
            acc = acc.add(&self.s[k].scale(&BigRational::from(v[k].clone())));
        }
        acc
    }

    /// Gram matrix of the reduced norm form in the s-basis:
    /// G[a][b] = ½·trd(s^a·conj(s^b)), so that nrd(Σ v_a s^a) = vᵀGv.
    pub fn gram(&self) -> [[BigRational; 4]; 4] {
        gram_of(&self.s)
    }
}

pub fn gram_of(basis: &[Quat; 4]) -> [[BigRational; 4]; 4] {
    std::array::from_fn(|a| {
        std::array::from_fn(|b| basis[a].mul(&basis[b].conj()).trd() / rat(2))
    })
}

/// Reduced discriminant sqrt(|det(trd(s^a·conj(s^b)))|) of the lattice
/// spanned by the four given elements. Equals p exactly for a maximal order
/// of D.
pub fn reduced_discriminant(s: &[Quat; 4]) -> Result<BigInt, QuatError> {
    let t: Vec<Vec<BigRational>> = (0..4)
        .map(|a| (0..4).map(|b| s[a].mul(&s[b].conj()).trd()).collect())
        .collect();
    let det = det4(&t);
    let d = det.abs();
    if !d.is_integer() {
        return Err(QuatError::NonSquareDiscriminant(d.numer().clone()));
    }
    arith::exact_sqrt(&d.to_integer()).ok_or(QuatError::NonSquareDiscriminant(d.to_integer()))
}

fn det4(m: &[Vec<BigRational>]) -> BigRational {
    // cofactor expansion; 4×4 only
    fn det_rec(m: &[Vec<BigRational>], rows: &[usize], cols: &[usize]) -> BigRational {
        if rows.len() == 1 {
            return m[rows[0]][cols[0]].clone();
        }
        let mut acc = rat(0);
        let r = rows[0];
        let rest: Vec<usize> = rows[1..].to_vec();
        for (k, &c) in cols.iter().enumerate() {
            let sub: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let term = &m[r][c] * &det_rec(m, &rest, &sub);
            if k % 2 == 0 {
                acc = acc + term;
            } else {
                acc = acc - term;
            }
        }
        acc
    }
    det_rec(m, &[0, 1, 2, 3], &[0, 1, 2, 3])
}

fn half() -> BigRational {
    arith::ratio(1, 2)
}

/// The case-appropriate maximal order basis. For p ≡ 3 mod 4 this is the
/// basis {1, i, (i+ij)/2, (1+j)/2}; the other congruence classes use the
/// Pizer-style bases, with two corrections (see below). The returned basis is
/// always validated: contains 1, closed under multiplication, and of reduced
/// discriminant p.
///
/// Corrections applied when the textbook basis fails validation:
/// * p = 2: (1+i+j+ij)/2 has nrd 3/2 in the presentation j² = −2, so the
///   order is rebuilt as {(1+i+j)/2, i, (j+ij)/2, ij}.
/// * p ≡ 1 mod 8: the listed (1/r)(j + a·ij) has non-integral norm
///   p(1+a²r)/r²; swapping the roles of i and j in all four elements gives
///   {(1+i)/2, (j+ij)/2, (1/r)(i + a·ij), ij}, whose third element has norm
///   (1+a²p)/r, integral precisely because r | a²p+1.
pub fn maximal_order_basis(params: &AlgebraParams) -> Result<OrderBasis, QuatError> {
    let alg = params.algebra();
    let p = params.p;
    let candidate = proposition_basis(params);
    match validated(alg, p, candidate) {
        Ok(basis) => Ok(basis),
        Err(first_err) => {
            let corrected = corrected_basis(params).ok_or(first_err)?;
            validated(alg, p, corrected)
        }
    }
}

fn validated(alg: Algebra, p: u64, s: [Quat; 4]) -> Result<OrderBasis, QuatError> {
    let basis = OrderBasis::from_elements(alg, s).ok_or_else(|| QuatError::OrderValidation {
        p,
        reason: "basis is not full rank".into(),
    })?;
    validate_order(&basis, p)?;
    Ok(basis)
}

fn proposition_basis(params: &AlgebraParams) -> [Quat; 4] {
    let alg = params.algebra();
    let h = half();
    let q = |c: [BigRational; 4]| Quat::new(alg, c);
    match (params.p, params.p % 8) {
        (2, _) => [
            // (1+i+j+ij)/2, i, j, ij — fails validation, corrected below
            q([h.clone(), h.clone(), h.clone(), h.clone()]),
            Quat::from_ints(alg, [0, 1, 0, 0]),
            Quat::from_ints(alg, [0, 0, 1, 0]),
            Quat::from_ints(alg, [0, 0, 0, 1]),
        ],
        (_, 3) | (_, 7) => [
            // {1, i, (i+ij)/2, (1+j)/2}
            Quat::one(alg),
            Quat::from_ints(alg, [0, 1, 0, 0]),
            q([rat(0), h.clone(), rat(0), h.clone()]),
            q([h.clone(), rat(0), h.clone(), rat(0)]),
        ],
        (_, 5) => [
            // {(1+j+ij)/2, (i+2j+ij)/4, j, ij}
            q([h.clone(), rat(0), h.clone(), h.clone()]),
            q([rat(0), arith::ratio(1, 4), half(), arith::ratio(1, 4)]),
            Quat::from_ints(alg, [0, 0, 1, 0]),
            Quat::from_ints(alg, [0, 0, 0, 1]),
        ],
        (_, 1) => {
            // literal fourth case {(1+j)/2, (i+ij)/2, (1/r)(j + a·ij), ij}
            let r = params.r.expect("r present for p ≡ 1 mod 8");
            let a = params.a.expect("a present for p ≡ 1 mod 8");
            let rr = arith::ratio(1, r as i64);
            let ar = arith::ratio(a as i64, r as i64);
            [
                q([h.clone(), rat(0), h.clone(), rat(0)]),
                q([rat(0), h.clone(), rat(0), h.clone()]),
                q([rat(0), rat(0), rr, ar]),
                Quat::from_ints(alg, [0, 0, 0, 1]),
            ]
        }
        _ => unreachable!("p prime"),
    }
}

fn corrected_basis(params: &AlgebraParams) -> Option<[Quat; 4]> {
    let alg = params.algebra();
    let h = half();
    let q = |c: [BigRational; 4]| Quat::new(alg, c);
    match (params.p, params.p % 8) {
        (2, _) => Some([
            q([h.clone(), h.clone(), h.clone(), rat(0)]),
            Quat::from_ints(alg, [0, 1, 0, 0]),
            q([rat(0), rat(0), h.clone(), h.clone()]),
            Quat::from_ints(alg, [0, 0, 0, 1]),
        ]),
        (_, 1) => {
            let r = params.r?;
            let a = params.a?;
            let rr = arith::ratio(1, r as i64);
            let ar = arith::ratio(a as i64, r as i64);
            Some([
                q([h.clone(), h.clone(), rat(0), rat(0)]),
                q([rat(0), rat(0), h.clone(), h.clone()]),
                q([rat(0), rr, rat(0), ar]),
                Quat::from_ints(alg, [0, 0, 0, 1]),
            ])
        }
        _ => None,
    }
}

/// Order axioms: 1 ∈ span, integral traces and norms, multiplicative closure,
/// reduced discriminant p.
pub fn validate_order(basis: &OrderBasis, p: u64) -> Result<(), QuatError> {
    let fail = |reason: String| QuatError::OrderValidation { p, reason };
    if !basis.contains(&Quat::one(basis.alg)) {
        return Err(fail("1 is not in the Z-span".into()));
    }
    for (k, s) in basis.s.iter().enumerate() {
        if !s.trd().is_integer() || !s.nrd().is_integer() {
            return Err(fail(format!(
                "basis element {} is not integral (trd {}, nrd {})",
                k + 1,
                s.trd(),
                s.nrd()
            )));
        }
    }
    for a in 0..4 {
        for b in 0..4 {
            if !basis.contains(&basis.s[a].mul(&basis.s[b])) {
                return Err(fail(format!("s{}·s{} lies outside the Z-span", a + 1, b + 1)));
            }
        }
    }
    let disc = reduced_discriminant(&basis.s)?;
    if disc != big(p as i64) {
        return Err(fail(format!("reduced discriminant is {disc}, expected {p}")));
    }
    Ok(())
}

/// The residue identification O_p/(j) ≅ F_{p²} = {s + t·i}: reduce the 1- and
/// i-coefficients mod p. Requires the coefficients (and p) to be p-integral,
/// which holds for every element of O when p is odd.
pub fn residue_mod_j(q: &Quat) -> Option<(u64, u64)> {
    let p = q.alg.p;
    let s = arith::rat_mod(&q.c[0], p)?;
    let t = arith::rat_mod(&q.c[1], p)?;
    Some((s, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::ratio;

    fn alg(p: u64, eps: u64) -> Algebra {
        Algebra { p, eps }
    }

    #[test]
    fn build_algebra_cases() {
        let a = build_algebra(11).unwrap();
        assert_eq!((a.eps, a.r, a.a), (1, None, None));
        let a = build_algebra(2).unwrap();
        assert_eq!(a.eps, 1);
        let a = build_algebra(13).unwrap();
        assert_eq!(a.eps, 2);
        // p = 17 ≡ 1 mod 8: r = 3 (3 ≡ 3 mod 4, (3|17) = −1), a = 1 (17+1 = 18 ≡ 0 mod 3)
        let a = build_algebra(17).unwrap();
        assert_eq!((a.eps, a.r, a.a), (3, Some(3), Some(1)));
        assert!(matches!(build_algebra(4), Err(QuatError::NotPrime(4))));
    }

    #[test]
    fn defining_relations() {
        let al = alg(11, 1);
        let i = Quat::from_ints(al, [0, 1, 0, 0]);
        let j = Quat::from_ints(al, [0, 0, 1, 0]);
        let ij = Quat::from_ints(al, [0, 0, 0, 1]);
        assert_eq!(i.mul(&j), ij);
        assert_eq!(j.mul(&i), ij.neg());
        assert_eq!(i.mul(&i), Quat::from_ints(al, [-1, 0, 0, 0]));
        assert_eq!(j.mul(&j), Quat::from_ints(al, [-11, 0, 0, 0]));
        // (1+i)(1−i) = 1 + ε = 2 for ε = 1
        let x = Quat::from_ints(al, [1, 1, 0, 0]);
        let y = Quat::from_ints(al, [1, -1, 0, 0]);
        assert_eq!(x.mul(&y), Quat::from_ints(al, [2, 0, 0, 0]));
    }

    #[test]
    fn nrd_trd_conj() {
        let al = alg(11, 1);
        assert_eq!(Quat::one(al).nrd(), rat(1));
        let ij = Quat::from_ints(al, [0, 0, 0, 1]);
        assert_eq!(ij.nrd(), rat(11)); // ε·p
        // nrd of t + x·i + y·(i+ij)/2 + z·(1+j)/2 for (t,x,y,z) = (1,2,3,4):
        // (t+z/2)² + (x+y/2)² + 11y²/4 + 11z²/4
        let t = (1, 2, 3, 4);
        let q = Quat::new(
            al,
            [
                rat(t.0) + ratio(t.3, 2),
                rat(t.1) + ratio(t.2, 2),
                ratio(t.3, 2),
                ratio(t.2, 2),
            ],
        );
        let expect = ratio(9, 1) + ratio(49, 4) + ratio(11 * 9, 4) + ratio(11 * 16, 4);
        assert_eq!(q.nrd(), expect);
    }

    #[test]
    fn maximal_orders_fixed_points() {
        // p = 11: {1, i, (i+ij)/2, (1+j)/2}
        let params = build_algebra(11).unwrap();
        let basis = maximal_order_basis(&params).unwrap();
        assert_eq!(basis.s[0], Quat::one(params.algebra()));
        assert_eq!(basis.s[1], Quat::from_ints(params.algebra(), [0, 1, 0, 0]));
        assert_eq!(basis.s[2].c, [rat(0), ratio(1, 2), rat(0), ratio(1, 2)]);
        assert_eq!(basis.s[3].c, [ratio(1, 2), rat(0), ratio(1, 2), rat(0)]);
        assert_eq!(reduced_discriminant(&basis.s).unwrap(), big(11));

        // p = 13: nrd((i+2j+ij)/4) = 5
        let params = build_algebra(13).unwrap();
        let basis = maximal_order_basis(&params).unwrap();
        assert_eq!(basis.s[1].nrd(), rat(5));
        assert_eq!(reduced_discriminant(&basis.s).unwrap(), big(13));

        // p = 2: corrected basis validates with discriminant 2
        let params = build_algebra(2).unwrap();
        let basis = maximal_order_basis(&params).unwrap();
        assert_eq!(reduced_discriminant(&basis.s).unwrap(), big(2));

        // p = 17 ≡ 1 mod 8: corrected basis, third element (i + a·ij)/r of norm (1+a²p)/r
        let params = build_algebra(17).unwrap();
        let basis = maximal_order_basis(&params).unwrap();
        assert_eq!(basis.s[2].nrd(), rat(6)); // (1 + 17)/3
        assert_eq!(reduced_discriminant(&basis.s).unwrap(), big(17));
    }

    #[test]
    fn non_maximal_discriminant() {
        // Z⟨1, i, j, ij⟩ for p = 11 has reduced discriminant 4·ε·p = 44
        let al = alg(11, 1);
        let s = [
            Quat::one(al),
            Quat::from_ints(al, [0, 1, 0, 0]),
            Quat::from_ints(al, [0, 0, 1, 0]),
            Quat::from_ints(al, [0, 0, 0, 1]),
        ];
        assert_eq!(reduced_discriminant(&s).unwrap(), big(44));
    }

    #[test]
    fn orders_up_to_200() {
        let mut p = 2u64;
        while p <= 200 {
            if arith::is_prime(p) {
                let params = build_algebra(p).unwrap();
                let basis = maximal_order_basis(&params).unwrap();
                validate_order(&basis, p).unwrap();
                // norm form positive definite on the basis: Gram has positive
                // leading principal minors
                let g = basis.gram();
                for k in 1..=4 {
                    let sub: Vec<Vec<BigRational>> =
                        (0..k).map(|r| (0..k).map(|c| g[r][c].clone()).collect()).collect();
                    assert!(det_k(&sub) > rat(0), "p = {p}: minor {k} not positive");
                }
            }
            p += 1;
        }
    }

    fn det_k(m: &[Vec<BigRational>]) -> BigRational {
        let n = m.len();
        let mut m: Vec<Vec<BigRational>> = m.to_vec();
        let mut det = rat(1);
        for col in 0..n {
            let piv = match (col..n).find(|&r| !m[r][col].is_zero()) {
                Some(piv) => piv,
                None => return rat(0),
            };
            if piv != col {
                m.swap(col, piv);
                det = -det;
            }
            det = &det * &m[col][col];
            let pv = m[col][col].clone();
            for r in col + 1..n {
                let f = &m[r][col] / &pv;
                for c in col..n {
                    let t = &m[col][c] * &f;
                    m[r][c] = &m[r][c] - &t;
                }
            }
        }
        det
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn prop_nrd_multiplicative_trd_additive(
            xc in proptest::array::uniform4(-12i64..=12),
            xd in proptest::array::uniform4(1i64..=4),
            yc in proptest::array::uniform4(-12i64..=12),
            yd in proptest::array::uniform4(1i64..=4),
        ) {
            let al = Algebra { p: 11, eps: 1 };
            let x = Quat::new(al, std::array::from_fn(|k| ratio(xc[k], xd[k])));
            let y = Quat::new(al, std::array::from_fn(|k| ratio(yc[k], yd[k])));
            proptest::prop_assert_eq!(x.mul(&y).nrd(), x.nrd() * y.nrd());
            proptest::prop_assert_eq!(x.mul(&y).conj(), y.conj().mul(&x.conj()));
            proptest::prop_assert_eq!(x.add(&x.conj()).c[0].clone(), x.trd());
            proptest::prop_assert!(!x.nrd().is_negative());
        }
    }

    #[test]
    fn random_algebra_identities() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for p in [3u64, 11, 13, 17] {
            let params = build_algebra(p).unwrap();
            let al = params.algebra();
            for _ in 0..50 {
                let mut pick = || {
                    Quat::new(
                        al,
                        std::array::from_fn(|_| {
                            ratio(rng.gen_range(-9..=9), rng.gen_range(1..=4))
                        }),
                    )
                };
                let x = pick();
                let y = pick();
                assert_eq!(x.mul(&y).nrd(), x.nrd() * y.nrd());
                assert_eq!(x.add(&x.conj()).c[0], x.trd());
                assert_eq!(x.mul(&y).conj(), y.conj().mul(&x.conj()));
                let z = pick();
                assert_eq!(x.mul(&y).mul(&z), x.mul(&y.mul(&z)));
            }
        }
    }
}
