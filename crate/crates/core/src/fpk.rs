//! Exact linear algebra over F_p and F_{p²} = F_p[i]/(i² + ε): characteristic
//! polynomials, eigenvalue extraction by exhaustive field scan, and
//! simultaneous eigensystems of commuting matrices.
//!
//! −ε is a quadratic non-residue mod p for every odd p handled by the ε case
//! split, so {s + t·i} really is the field with p² elements.

use crate::arith::{add_mod, inv_mod, mul_mod, sub_mod};

#[derive(Debug, thiserror::Error)]
pub enum FpkError {
    #[error("F_{{p²}} requires an odd prime, got p = {0}")]
    EvenPrime(u64),
    #[error("matrices {0} and {1} do not commute")]
    NonCommuting(usize, usize),
    #[error("matrix is not square")]
    NotSquare,
}

/// Field context for F_{p²} with i² = −ε.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fp2Ctx {
    pub p: u64,
    pub eps: u64,
}

/// An element s + t·i of F_{p²}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fp2 {
    pub s: u64,
    pub t: u64,
}

impl Fp2Ctx {
    pub fn new(p: u64, eps: u64) -> Result<Self, FpkError> {
        if p == 2 {
            return Err(FpkError::EvenPrime(p));
        }
        Ok(Fp2Ctx { p, eps: eps % p })
    }

    pub fn zero(&self) -> Fp2 {
        Fp2 { s: 0, t: 0 }
    }

    pub fn one(&self) -> Fp2 {
        Fp2 { s: 1, t: 0 }
    }

    pub fn embed(&self, s: u64) -> Fp2 {
        Fp2 { s: s % self.p, t: 0 }
    }

    pub fn gen_i(&self) -> Fp2 {
        Fp2 { s: 0, t: 1 }
    }

    pub fn add(&self, a: Fp2, b: Fp2) -> Fp2 {
        Fp2 { s: add_mod(a.s, b.s, self.p), t: add_mod(a.t, b.t, self.p) }
    }

    pub fn sub(&self, a: Fp2, b: Fp2) -> Fp2 {
        Fp2 { s: sub_mod(a.s, b.s, self.p), t: sub_mod(a.t, b.t, self.p) }
    }

    pub fn neg(&self, a: Fp2) -> Fp2 {
        Fp2 { s: sub_mod(0, a.s, self.p), t: sub_mod(0, a.t, self.p) }
    }

    pub fn mul(&self, a: Fp2, b: Fp2) -> Fp2 {
        let p = self.p;
        // (s₁ + t₁i)(s₂ + t₂i) = s₁s₂ − ε t₁t₂ + (s₁t₂ + t₁s₂) i
        let s = sub_mod(mul_mod(a.s, b.s, p), mul_mod(self.eps, mul_mod(a.t, b.t, p), p), p);
        let t = add_mod(mul_mod(a.s, b.t, p), mul_mod(a.t, b.s, p), p);
        Fp2 { s, t }
    }

    /// Field norm s² + ε t² ∈ F_p (zero iff the element is zero).
    pub fn norm(&self, a: Fp2) -> u64 {
        add_mod(
            mul_mod(a.s, a.s, self.p),
            mul_mod(self.eps, mul_mod(a.t, a.t, self.p), self.p),
            self.p,
        )
    }

    pub fn inv(&self, a: Fp2) -> Option<Fp2> {
        let n = self.norm(a);
        let ninv = inv_mod(n, self.p)?;
        Some(Fp2 {
            s: mul_mod(a.s, ninv, self.p),
            t: mul_mod(sub_mod(0, a.t, self.p), ninv, self.p),
        })
    }

    pub fn pow(&self, a: Fp2, mut e: u64) -> Fp2 {
        let mut base = a;
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Every nonzero element, ordered lexicographically by (s, t).
    pub fn nonzero_elements(&self) -> Vec<Fp2> {
        let mut out = Vec::with_capacity((self.p * self.p - 1) as usize);
        for s in 0..self.p {
            for t in 0..self.p {
                if s != 0 || t != 0 {
                    out.push(Fp2 { s, t });
                }
            }
        }
        out
    }

    pub fn all_elements(&self) -> Vec<Fp2> {
        let mut out = vec![self.zero()];
        out.extend(self.nonzero_elements());
        out
    }
}

/// Dense square matrix over F_{p²}; plain F_p matrices embed with t = 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fp2Matrix {
    pub n: usize,
    pub e: Vec<Fp2>,
}

impl Fp2Matrix {
    pub fn zero(n: usize) -> Self {
        Fp2Matrix { n, e: vec![Fp2 { s: 0, t: 0 }; n * n] }
    }

    pub fn identity(ctx: &Fp2Ctx, n: usize) -> Self {
        let mut m = Self::zero(n);
        for k in 0..n {
            m.e[k * n + k] = ctx.one();
        }
        m
    }

    pub fn from_fp_rows(ctx: &Fp2Ctx, rows: &[Vec<u64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zero(n);
        for r in 0..n {
            assert_eq!(rows[r].len(), n);
            for c in 0..n {
                m.e[r * n + c] = ctx.embed(rows[r][c]);
            }
        }
        m
    }

    pub fn at(&self, r: usize, c: usize) -> Fp2 {
        self.e[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Fp2) {
        self.e[r * self.n + c] = v;
    }

    pub fn mul(&self, ctx: &Fp2Ctx, o: &Fp2Matrix) -> Fp2Matrix {
        assert_eq!(self.n, o.n);
        let n = self.n;
        let mut out = Fp2Matrix::zero(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.at(r, k);
                if a == (Fp2 { s: 0, t: 0 }) {
                    continue;
                }
                for c in 0..n {
                    let add = ctx.mul(a, o.at(k, c));
                    out.e[r * n + c] = ctx.add(out.e[r * n + c], add);
                }
            }
        }
        out
    }

    pub fn sub(&self, ctx: &Fp2Ctx, o: &Fp2Matrix) -> Fp2Matrix {
        assert_eq!(self.n, o.n);
        let mut out = self.clone();
        for k in 0..self.n * self.n {
            out.e[k] = ctx.sub(out.e[k], o.e[k]);
        }
        out
    }

    pub fn commutes_with(&self, ctx: &Fp2Ctx, o: &Fp2Matrix) -> bool {
        self.mul(ctx, o) == o.mul(ctx, self)
    }

    /// M·v for a column vector v.
    pub fn apply(&self, ctx: &Fp2Ctx, v: &[Fp2]) -> Vec<Fp2> {
        let n = self.n;
        (0..n)
            .map(|r| {
                let mut acc = ctx.zero();
                for c in 0..n {
                    acc = ctx.add(acc, ctx.mul(self.at(r, c), v[c]));
                }
                acc
            })
            .collect()
    }
}

/// Monic characteristic polynomial via Hessenberg reduction, exact over the
/// field; coefficients lowest degree first, length n + 1.
pub fn char_poly(ctx: &Fp2Ctx, m: &Fp2Matrix) -> Vec<Fp2> {
    let n = m.n;
    let mut h = m.clone();
    // similarity reduction to upper Hessenberg form
    for j in 0..n.saturating_sub(2) {
        let piv = match (j + 1..n).find(|&r| h.at(r, j) != ctx.zero()) {
            Some(piv) => piv,
            None => continue,
        };
        if piv != j + 1 {
            for c in 0..n {
                let (a, b) = (h.at(j + 1, c), h.at(piv, c));
                h.set(j + 1, c, b);
                h.set(piv, c, a);
            }
            for r in 0..n {
                let (a, b) = (h.at(r, j + 1), h.at(r, piv));
                h.set(r, j + 1, b);
                h.set(r, piv, a);
            }
        }
        let d = ctx.inv(h.at(j + 1, j)).expect("pivot nonzero");
        for r in j + 2..n {
            let f = ctx.mul(h.at(r, j), d);
            if f == ctx.zero() {
                continue;
            }
            // row r −= f·row j+1; column j+1 += f·column r
            for c in 0..n {
                let sub = ctx.mul(f, h.at(j + 1, c));
                h.set(r, c, ctx.sub(h.at(r, c), sub));
            }
            for rr in 0..n {
                let add = ctx.mul(f, h.at(rr, r));
                h.set(rr, j + 1, ctx.add(h.at(rr, j + 1), add));
            }
        }
    }
    // recurrence over the leading principal blocks of the Hessenberg form
    let mut polys: Vec<Vec<Fp2>> = vec![vec![ctx.one()]];
    for k in 1..=n {
        let mut pk = poly_shift_mul(ctx, &polys[k - 1], h.at(k - 1, k - 1));
        let mut t = ctx.one();
        for i in 1..k {
            t = ctx.mul(t, h.at(k - i, k - i - 1));
            let coeff = ctx.mul(t, h.at(k - i - 1, k - 1));
            poly_sub_scaled(ctx, &mut pk, &polys[k - i - 1], coeff);
        }
        polys.push(pk);
    }
    polys.pop().unwrap()
}

/// (x − a)·p
fn poly_shift_mul(ctx: &Fp2Ctx, p: &[Fp2], a: Fp2) -> Vec<Fp2> {
    let mut out = vec![ctx.zero(); p.len() + 1];
    for (k, &c) in p.iter().enumerate() {
        out[k + 1] = ctx.add(out[k + 1], c);
        out[k] = ctx.sub(out[k], ctx.mul(a, c));
    }
    out
}

fn poly_sub_scaled(ctx: &Fp2Ctx, p: &mut [Fp2], q: &[Fp2], f: Fp2) {
    for (k, &c) in q.iter().enumerate() {
        p[k] = ctx.sub(p[k], ctx.mul(f, c));
    }
}

pub fn poly_eval(ctx: &Fp2Ctx, p: &[Fp2], x: Fp2) -> Fp2 {
    let mut acc = ctx.zero();
    for &c in p.iter().rev() {
        acc = ctx.add(ctx.mul(acc, x), c);
    }
    acc
}

/// All roots in F_{p²} with multiplicities, by exhaustive evaluation over the
/// p² field elements and repeated synthetic division; pairs sorted by root.
pub fn roots_in_fp2(ctx: &Fp2Ctx, poly: &[Fp2]) -> Vec<(Fp2, usize)> {
    let mut out = Vec::new();
    for x in ctx.all_elements() {
        if poly_eval(ctx, poly, x) != ctx.zero() {
            continue;
        }
        let mut mult = 0;
        let mut cur = poly.to_vec();
        loop {
            let (quot, rem) = synth_div(ctx, &cur, x);
            if rem != ctx.zero() {
                break;
            }
            mult += 1;
            cur = quot;
            if cur.len() <= 1 {
                break;
            }
        }
        out.push((x, mult));
    }
    out
}

/// Divide p by (x − a): (quotient, remainder).
fn synth_div(ctx: &Fp2Ctx, p: &[Fp2], a: Fp2) -> (Vec<Fp2>, Fp2) {
    let n = p.len();
    if n == 0 {
        return (Vec::new(), ctx.zero());
    }
    let mut q = vec![ctx.zero(); n - 1];
    let mut carry = ctx.zero();
    for k in (0..n).rev() {
        let cur = ctx.add(p[k], ctx.mul(carry, a));
        if k == 0 {
            return (q, cur);
        }
        q[k - 1] = cur;
        carry = cur;
    }
    unreachable!()
}

/// Multiset of eigenvalues of m lying in F_{p²}.
pub fn eigenvalues_fp2(ctx: &Fp2Ctx, m: &Fp2Matrix) -> Vec<(Fp2, usize)> {
    roots_in_fp2(ctx, &char_poly(ctx, m))
}

/// Basis of the kernel, as column vectors; deterministic (free columns in
/// increasing order, each normalized with a 1 at its free position).
pub fn kernel(ctx: &Fp2Ctx, m: &Fp2Matrix) -> Vec<Vec<Fp2>> {
    let n = m.n;
    let mut a = m.clone();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut row = 0usize;
    for col in 0..n {
        if let Some(piv) = (row..n).find(|&r| a.at(r, col) != ctx.zero()) {
            for c in 0..n {
                let (x, y) = (a.at(row, c), a.at(piv, c));
                a.set(row, c, y);
                a.set(piv, c, x);
            }
            let inv = ctx.inv(a.at(row, col)).unwrap();
            for c in 0..n {
                a.set(row, c, ctx.mul(a.at(row, c), inv));
            }
            for r in 0..n {
                if r != row && a.at(r, col) != ctx.zero() {
                    let f = a.at(r, col);
                    for c in 0..n {
                        let sub = ctx.mul(f, a.at(row, c));
                        a.set(r, c, ctx.sub(a.at(r, c), sub));
                    }
                }
            }
            pivot_of_col[col] = Some(row);
            row += 1;
        }
    }
    let mut basis = Vec::new();
    for free in 0..n {
        if pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = vec![ctx.zero(); n];
        v[free] = ctx.one();
        for col in 0..n {
            if let Some(r) = pivot_of_col[col] {
                v[col] = ctx.neg(a.at(r, free));
            }
        }
        basis.push(v);
    }
    basis
}

pub fn rank(ctx: &Fp2Ctx, m: &Fp2Matrix) -> usize {
    m.n - kernel(ctx, m).len()
}

/// A joint eigensystem of a commuting family: one eigenvalue per input
/// matrix, the dimension of the (generalized) joint eigenspace, and whether
/// that space consists of genuine eigenvectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Eigensystem {
    pub values: Vec<Fp2>,
    pub multiplicity: usize,
    pub diagonalizable: bool,
}

/// Simultaneous eigensystems of pairwise commuting matrices, by recursive
/// refinement of generalized eigenspaces over F_{p²}. Components whose
/// eigenvalues leave F_{p²} are not reported, so multiplicities sum to the
/// full dimension exactly when every characteristic polynomial splits.
pub fn simultaneous_eigensystems(
    ctx: &Fp2Ctx,
    mats: &[Fp2Matrix],
) -> Result<Vec<Eigensystem>, FpkError> {
    for (a, ma) in mats.iter().enumerate() {
        if ma.n != mats[0].n {
            return Err(FpkError::NotSquare);
        }
        for (b, mb) in mats.iter().enumerate().skip(a + 1) {
            if !ma.commutes_with(ctx, mb) {
                return Err(FpkError::NonCommuting(a, b));
            }
        }
    }
    let n = mats[0].n;
    let identity_basis: Vec<Vec<Fp2>> = (0..n)
        .map(|k| {
            let mut v = vec![ctx.zero(); n];
            v[k] = ctx.one();
            v
        })
        .collect();
    // subspace = (column basis, eigenvalues so far, still diagonalizable)
    let mut spaces = vec![(identity_basis, Vec::<Fp2>::new(), true)];
    for m in mats {
        let mut next = Vec::new();
        for (basis, values, diag) in spaces {
            let r = restriction(ctx, m, &basis);
            let d = basis.len();
            for (lambda, _) in roots_in_fp2(ctx, &char_poly(ctx, &r)) {
                let shifted = shift_by(ctx, &r, lambda);
                let simple = kernel(ctx, &shifted);
                let mut power = shifted.clone();
                for _ in 1..d {
                    power = power.mul(ctx, &shifted);
                }
                let gen_basis = kernel(ctx, &power);
                if gen_basis.is_empty() {
                    continue;
                }
                let sub_diag = diag && simple.len() == gen_basis.len();
                let new_basis: Vec<Vec<Fp2>> =
                    gen_basis.iter().map(|k| combine(ctx, &basis, k)).collect();
                let mut new_values = values.clone();
                new_values.push(lambda);
                next.push((new_basis, new_values, sub_diag));
            }
        }
        spaces = next;
    }
    let mut out: Vec<Eigensystem> = spaces
        .into_iter()
        .map(|(basis, values, diag)| Eigensystem {
            values,
            multiplicity: basis.len(),
            diagonalizable: diag,
        })
        .collect();
    out.sort_by(|a, b| a.values.cmp(&b.values));
    Ok(out)
}

fn shift_by(ctx: &Fp2Ctx, m: &Fp2Matrix, lambda: Fp2) -> Fp2Matrix {
    let mut out = m.clone();
    for k in 0..m.n {
        out.set(k, k, ctx.sub(out.at(k, k), lambda));
    }
    out
}

fn combine(ctx: &Fp2Ctx, basis: &[Vec<Fp2>], coeffs: &[Fp2]) -> Vec<Fp2> {
    let n = basis[0].len();
    let mut v = vec![ctx.zero(); n];
    for (b, &c) in basis.iter().zip(coeffs) {
        for k in 0..n {
            v[k] = ctx.add(v[k], ctx.mul(c, b[k]));
        }
    }
    v
}

/// Matrix of m restricted to the invariant subspace spanned by the given
/// independent columns: solves B·R = M·B.
fn restriction(ctx: &Fp2Ctx, m: &Fp2Matrix, basis: &[Vec<Fp2>]) -> Fp2Matrix {
    let n = m.n;
    let d = basis.len();
    // row-reduce [B | M·b₁ .. M·b_d]
    let mut aug: Vec<Vec<Fp2>> = (0..n)
        .map(|r| {
            let mut row = Vec::with_capacity(2 * d);
            for b in basis {
                row.push(b[r]);
            }
            row
        })
        .collect();
    for b in basis {
        let img = m.apply(ctx, b);
        for (r, row) in aug.iter_mut().enumerate() {
            row.push(img[r]);
        }
    }
    let mut row = 0usize;
    let mut pivots = Vec::new();
    for col in 0..d {
        let piv = (row..n).find(|&r| aug[r][col] != ctx.zero()).expect("basis independent");
        aug.swap(row, piv);
        let inv = ctx.inv(aug[row][col]).unwrap();
        for c in 0..2 * d {
            aug[row][c] = ctx.mul(aug[row][c], inv);
        }
        for r in 0..n {
            if r != row && aug[r][col] != ctx.zero() {
                let f = aug[r][col];
                for c in 0..2 * d {
                    let sub = ctx.mul(f, aug[row][c]);
                    aug[r][c] = ctx.sub(aug[r][c], sub);
                }
            }
        }
        pivots.push(row);
        row += 1;
    }
    // invariance: rows beyond the pivots must vanish on the image block
    for r in row..n {
        for c in d..2 * d {
            assert_eq!(aug[r][c], ctx.zero(), "subspace not invariant");
        }
    }
    let mut out = Fp2Matrix::zero(d);
    for (k, &pr) in pivots.iter().enumerate() {
        for c in 0..d {
            out.set(k, c, aug[pr][d + c]);
        }
    }
    out
}
