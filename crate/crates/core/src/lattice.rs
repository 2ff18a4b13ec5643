//! Rank-4 lattices in D (left O-ideals) in canonical Hermite normal form,
//! short-vector enumeration of the reduced norm form, and the left ideal
//! class set of the maximal order with Eichler-mass termination.
//!
//! A lattice is stored as a 4×4 upper-triangular integer matrix `rows` plus a
//! positive denominator: its elements are (Σ_k z_k·rows[k])/den in the
//! coordinates of the fixed order basis {s¹..s⁴}. The HNF rows and the
//! minimal denominator are unique per lattice, so structural equality is
//! lattice equality.

use crate::arith::{self, big, rat};
use crate::quat::{gram_of, reduced_discriminant, AlgebraParams, OrderBasis, Quat};
use num::{BigInt, BigRational, Integer, One, Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum LatticeError {
    #[error("generators span rank {0} < 4")]
    NotFullRank(usize),
    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("lattice index {0} is not a perfect rational square")]
    NonSquareIndex(BigRational),
    #[error("right order has reduced discriminant {0}, expected {1}; ideal not invertible")]
    NotInvertible(BigInt, u64),
    #[error("class enumeration overshot the Eichler mass: found {found}, target {target}")]
    MassOvershoot { found: BigRational, target: BigRational },
    #[error("class enumeration exhausted its frontier at mass {found} < {target}")]
    MassUnreachable { found: BigRational, target: BigRational },
    #[error("no element of minimal {0}-adic norm valuation found in ideal basis search")]
    LocalGeneratorNotFound(u64),
    #[error("expected {expected} stable lines mod {q}, found {found}")]
    BadLineCount { q: u64, expected: usize, found: usize },
}

/// A full-rank lattice in D, in canonical form w.r.t. a fixed order basis.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IdealLattice {
    /// Upper-triangular HNF rows; lattice vectors are integer combinations
    /// of rows[k]/den in s-coordinates.
    pub rows: [[BigInt; 4]; 4],
    pub den: BigInt,
}

/// Row Hermite normal form of a full-rank generator list (rows). Upper
/// triangular, positive pivots, entries above each pivot reduced into
/// [0, pivot).
fn hnf_rows(mut m: Vec<[BigInt; 4]>) -> Option<[[BigInt; 4]; 4]> {
    let mut row = 0usize;
    for col in 0..4 {
        loop {
            let mut best: Option<usize> = None;
            for r in row..m.len() {
                if !m[r][col].is_zero()
                    && best.map_or(true, |b| m[r][col].abs() < m[b][col].abs())
                {
                    best = Some(r);
                }
            }
            let piv = best?;
            m.swap(row, piv);
            let mut done = true;
            for r in row + 1..m.len() {
                if !m[r][col].is_zero() {
                    let q = div_round(&m[r][col], &m[row][col]);
                    for c in 0..4 {
                        let t = &m[row][c] * &q;
                        m[r][c] = &m[r][c] - t;
                    }
                    if !m[r][col].is_zero() {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if m[row][col].is_negative() {
            for c in 0..4 {
                m[row][c] = -m[row][c].clone();
            }
        }
        // reduce entries above the pivot
        for r in 0..row {
            if !m[r][col].is_zero() {
                let q = m[r][col].div_floor(&m[row][col]);
                for c in 0..4 {
                    let t = &m[row][c] * &q;
                    m[r][c] = &m[r][c] - t;
                }
            }
        }
        row += 1;
    }
    let mut out: [[BigInt; 4]; 4] = Default::default();
    for r in 0..4 {
        out[r] = m[r].clone();
    }
    Some(out)
}

fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    // nearest quotient, ties toward floor; keeps remainders small
    let (q, r) = a.div_mod_floor(b);
    if &r * 2 > b.abs() {
        q + 1
    } else {
        q
    }
}

impl IdealLattice {
    /// Canonical lattice from rational s-coordinate generators.
    pub fn from_coord_generators(gens: &[[BigRational; 4]]) -> Result<Self, LatticeError> {
        let mut den = BigInt::one();
        for g in gens {
            for c in g {
                den = den.lcm(c.denom());
            }
        }
        let rows: Vec<[BigInt; 4]> = gens
            .iter()
            .map(|g| {
                std::array::from_fn(|k| {
                    let x = &g[k] * BigRational::from(den.clone());
                    debug_assert!(x.is_integer());
                    x.to_integer()
                })
            })
            .collect();
        let rank = rank_of(&rows);
        if rank < 4 {
            return Err(LatticeError::NotFullRank(rank));
        }
        let hnf = hnf_rows(rows).expect("full rank");
        Ok(Self::canonical(hnf, den))
    }

    fn canonical(rows: [[BigInt; 4]; 4], den: BigInt) -> Self {
        let mut g = den.clone();
        for r in &rows {
            for c in r {
                g = g.gcd(c);
            }
        }
        if g.is_one() {
            return IdealLattice { rows, den };
        }
        let rows = std::array::from_fn(|r| std::array::from_fn(|c| &rows[r][c] / &g));
        IdealLattice { rows, den: den / g }
    }

    /// The order itself as a lattice (identity matrix, denominator 1).
    pub fn order_lattice() -> Self {
        let rows = std::array::from_fn(|r| std::array::from_fn(|c| big((r == c) as i64)));
        IdealLattice { rows, den: BigInt::one() }
    }

    /// Basis vectors as quaternions.
    pub fn basis_quats(&self, order: &OrderBasis) -> [Quat; 4] {
        std::array::from_fn(|r| {
            let mut acc = Quat::zero(order.alg);
            for k in 0..4 {
                let coeff = BigRational::new(self.rows[r][k].clone(), self.den.clone());
                acc = acc.add(&order.s[k].scale(&coeff));
            }
            acc
        })
    }

    /// s-coordinates (rational) of a lattice vector given its Z-coordinates
    /// in the lattice basis.
    pub fn scoords(&self, z: &[BigInt; 4]) -> [BigRational; 4] {
        std::array::from_fn(|c| {
            let mut acc = BigInt::zero();
            for k in 0..4 {
                acc += &z[k] * &self.rows[k][c];
            }
            BigRational::new(acc, self.den.clone())
        })
    }

    /// Coordinates of a quaternion in the lattice basis, if it lies in the
    /// lattice.
    pub fn coords_of(&self, order: &OrderBasis, q: &Quat) -> Option<[BigInt; 4]> {
        let w = order.coords_of(q);
        // solve z·rows = den·w; rows is upper triangular with pivot k in
        // column k, so substitute forward from column 0
        let mut z: [BigRational; 4] = std::array::from_fn(|_| rat(0));
        for c in 0..4 {
            let mut acc = &w[c] * BigRational::from(self.den.clone());
            for k in 0..c {
                acc = acc - &z[k] * BigRational::from(self.rows[k][c].clone());
            }
            let piv = BigRational::from(self.rows[c][c].clone());
            z[c] = acc / piv;
        }
        if z.iter().all(|x| x.is_integer()) {
            Some(std::array::from_fn(|k| z[k].to_integer()))
        } else {
            None
        }
    }

    pub fn contains(&self, order: &OrderBasis, q: &Quat) -> bool {
        self.coords_of(order, q).is_some()
    }

    /// Generalized index [O : I] as a positive rational.
    pub fn index_in_order(&self) -> BigRational {
        let mut det = BigInt::one();
        for k in 0..4 {
            det *= &self.rows[k][k];
        }
        let d4 = self.den.pow(4);
        BigRational::new(det, d4)
    }

    /// Reduced norm nrd(I) = sqrt([O : I]).
    pub fn nrd(&self) -> Result<BigRational, LatticeError> {
        let idx = self.index_in_order();
        arith::exact_sqrt_rat(&idx).ok_or(LatticeError::NonSquareIndex(idx))
    }

    /// Scale the lattice by a nonzero rational.
    pub fn scale(&self, r: &BigRational) -> Self {
        assert!(!r.is_zero());
        let num = r.numer().abs();
        let den_r = r.denom().clone();
        let rows: [[BigInt; 4]; 4] =
            std::array::from_fn(|a| std::array::from_fn(|b| &self.rows[a][b] * &num));
        let hnf = hnf_rows(rows.to_vec()).expect("still full rank");
        Self::canonical(hnf, &self.den * den_r)
    }

    /// True iff O·I ⊆ I (left ideal for the given maximal order).
    pub fn is_left_ideal(&self, order: &OrderBasis) -> bool {
        let b = self.basis_quats(order);
        order
            .s
            .iter()
            .all(|g| b.iter().all(|v| self.contains(order, &g.mul(v))))
    }

    /// Gram matrix of nrd on the lattice basis.
    pub fn gram(&self, order: &OrderBasis) -> [[BigRational; 4]; 4] {
        gram_of(&self.basis_quats(order))
    }
}

fn rank_of(rows: &[[BigInt; 4]]) -> usize {
    // rational Gaussian elimination, rank only
    let mut m: Vec<[BigRational; 4]> = rows
        .iter()
        .map(|r| std::array::from_fn(|c| BigRational::from(r[c].clone())))
        .collect();
    let mut rank = 0;
    for col in 0..4 {
        if let Some(piv) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) {
            m.swap(rank, piv);
            let pv = m[rank][col].clone();
            for r in rank + 1..m.len() {
                if !m[r][col].is_zero() {
                    let f = &m[r][col] / &pv;
                    for c in 0..4 {
                        let t = &m[rank][c] * &f;
                        m[r][c] = &m[r][c] - t;
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Lattice generated by a list of quaternions (must span rank 4 over Q).
pub fn lattice_from_generators(
    order: &OrderBasis,
    gens: &[Quat],
) -> Result<IdealLattice, LatticeError> {
    let coords: Vec<[BigRational; 4]> = gens.iter().map(|g| order.coords_of(g)).collect();
    IdealLattice::from_coord_generators(&coords)
}

/// Product lattice I·J, generated by the 16 pairwise products.
pub fn ideal_product(
    order: &OrderBasis,
    i: &IdealLattice,
    j: &IdealLattice,
) -> Result<IdealLattice, LatticeError> {
    let bi = i.basis_quats(order);
    let bj = j.basis_quats(order);
    let mut gens = Vec::with_capacity(16);
    for a in &bi {
        for b in &bj {
            gens.push(a.mul(b));
        }
    }
    lattice_from_generators(order, &gens)
}

/// Conjugate lattice conj(I).
pub fn conjugate_ideal(
    order: &OrderBasis,
    i: &IdealLattice,
) -> Result<IdealLattice, LatticeError> {
    let gens: Vec<Quat> = i.basis_quats(order).iter().map(|b| b.conj()).collect();
    lattice_from_generators(order, &gens)
}

/// Right multiplication I·α.
pub fn ideal_right_mul(
    order: &OrderBasis,
    i: &IdealLattice,
    alpha: &Quat,
) -> Result<IdealLattice, LatticeError> {
    let gens: Vec<Quat> = i.basis_quats(order).iter().map(|b| b.mul(alpha)).collect();
    lattice_from_generators(order, &gens)
}

/// All v ∈ Z⁴ with vᵀ·gram·v = target, in lexicographic order. The Gram
/// matrix must be positive definite; enumeration is exact (rational LDLᵀ,
/// Fincke–Pohst style depth-first recursion).
pub fn short_vectors(
    gram: &[[BigRational; 4]; 4],
    target: &BigRational,
) -> Result<Vec<[BigInt; 4]>, LatticeError> {
    if target.is_negative() {
        return Ok(Vec::new());
    }
    // LDLᵀ decomposition: Q(v) = Σ_i d[i]·(v_i + Σ_{j>i} u[i][j]·v_j)²
    let mut a: Vec<Vec<BigRational>> =
        (0..4).map(|r| (0..4).map(|c| gram[r][c].clone()).collect()).collect();
    let mut d = vec![rat(0); 4];
    let mut u: Vec<Vec<BigRational>> = vec![vec![rat(0); 4]; 4];
    for i in 0..4 {
        d[i] = a[i][i].clone();
        if !d[i].is_positive() {
            return Err(LatticeError::NotPositiveDefinite);
        }
        for j in i + 1..4 {
            u[i][j] = &a[i][j] / &d[i];
        }
        for r in i + 1..4 {
            for c in i + 1..4 {
                let t = &u[i][r] * &a[i][c];
                a[r][c] = &a[r][c] - t;
            }
        }
    }
    let mut out = Vec::new();
    let mut v = [BigInt::zero(), BigInt::zero(), BigInt::zero(), BigInt::zero()];
    enumerate(&d, &u, 3, target.clone(), &mut v, &mut out);
    out.sort();
    Ok(out)
}

fn enumerate(
    d: &[BigRational],
    u: &[Vec<BigRational>],
    level: usize,
    rem: BigRational,
    v: &mut [BigInt; 4],
    out: &mut Vec<[BigInt; 4]>,
) {
    let center: BigRational = (level + 1..4)
        .map(|j| &u[level][j] * BigRational::from(v[j].clone()))
        .fold(rat(0), |x, y| x + y);
    let ratio = &rem / &d[level];
    let s = arith::floor_sqrt_rat(&ratio) + 1u32;
    let lo = (-&center - BigRational::from(s.clone())).ceil().to_integer();
    let hi = (-&center + BigRational::from(s)).floor().to_integer();
    let mut t = lo.clone();
    while t <= hi {
        let shifted = BigRational::from(t.clone()) + &center;
        let used = &d[level] * &shifted * &shifted;
        if used <= rem {
            v[level] = t.clone();
            if level == 0 {
                if used == rem {
                    out.push(v.clone());
                }
            } else {
                enumerate(d, u, level - 1, &rem - &used, v, out);
            }
        }
        t += 1u32;
    }
    v[level] = BigInt::zero();
}

/// Isomorphism test for invertible left O-ideals: J = I·α for some α ∈ D^×
/// iff the lattice conj(I)·J contains an element of reduced norm
/// nrd(I)·nrd(J); the witness α = x/nrd(I) is verified by exact lattice
/// equality before being returned.
pub fn is_isomorphic(
    order: &OrderBasis,
    i: &IdealLattice,
    j: &IdealLattice,
) -> Result<Option<Quat>, LatticeError> {
    let ni = i.nrd()?;
    let nj = j.nrd()?;
    let k = ideal_product(order, &conjugate_ideal(order, i)?, j)?;
    let target = &ni * &nj;
    let vecs = short_vectors(&k.gram(order), &target)?;
    for v in vecs {
        let x = k
            .scoords(&v)
            .iter()
            .enumerate()
            .fold(Quat::zero(order.alg), |acc, (idx, c)| {
                acc.add(&order.s[idx].scale(c))
            });
        let alpha = x.scale(&ni.recip());
        if ideal_right_mul(order, i, &alpha)? == *j {
            return Ok(Some(alpha));
        }
    }
    Ok(None)
}

/// The right order O_r(I) = (1/nrd I)·conj(I)·I, validated to be a ring with
/// 1 of reduced discriminant p.
pub fn right_order(
    order: &OrderBasis,
    params: &AlgebraParams,
    i: &IdealLattice,
) -> Result<IdealLattice, LatticeError> {
    let n = i.nrd()?;
    let prod = ideal_product(order, &conjugate_ideal(order, i)?, i)?;
    let ro = prod.scale(&n.recip());
    let b = ro.basis_quats(order);
    let disc = reduced_discriminant(&b).map_err(|_| {
        LatticeError::NotInvertible(big(-1), params.p)
    })?;
    if disc != big(params.p as i64)
        || !ro.contains(order, &Quat::one(order.alg))
        || !(0..4).all(|a| (0..4).all(|c| ro.contains(order, &b[a].mul(&b[c]))))
    {
        return Err(LatticeError::NotInvertible(disc, params.p));
    }
    Ok(ro)
}

/// Number of units (reduced norm 1 elements) of an order lattice.
pub fn unit_count(order: &OrderBasis, lat: &IdealLattice) -> Result<u64, LatticeError> {
    Ok(short_vectors(&lat.gram(order), &rat(1))?.len() as u64)
}

/// The units themselves, as quaternions, in deterministic order.
pub fn units_of(order: &OrderBasis, lat: &IdealLattice) -> Result<Vec<Quat>, LatticeError> {
    let vs = short_vectors(&lat.gram(order), &rat(1))?;
    Ok(vs
        .iter()
        .map(|v| {
            lat.scoords(v).iter().enumerate().fold(Quat::zero(order.alg), |acc, (idx, c)| {
                acc.add(&order.s[idx].scale(c))
            })
        })
        .collect())
}

/// One class of the left ideal class set.
#[derive(Clone, Debug)]
pub struct IdealClass {
    pub lattice: IdealLattice,
    pub right_order: IdealLattice,
    pub unit_order: u64,
    /// Sparse local generators: ℓ ↦ w_ℓ, present only where v_ℓ(nrd I) > 0.
    pub local_gens: BTreeMap<u64, Quat>,
}

#[derive(Clone, Debug)]
pub struct ClassSet {
    pub params: AlgebraParams,
    pub classes: Vec<IdealClass>,
}

impl ClassSet {
    pub fn h(&self) -> usize {
        self.classes.len()
    }

    pub fn mass(&self) -> BigRational {
        self.classes
            .iter()
            .map(|c| BigRational::new(BigInt::one(), big(c.unit_order as i64)))
            .fold(rat(0), |a, b| a + b)
    }

    /// Local generator at ℓ for class j (1 where the map is sparse).
    pub fn local_gen(&self, order: &OrderBasis, j: usize, l: u64) -> Quat {
        self.classes[j]
            .local_gens
            .get(&l)
            .cloned()
            .unwrap_or_else(|| Quat::one(order.alg))
    }
}

fn eichler_mass(p: u64) -> BigRational {
    BigRational::new(big(p as i64 - 1), big(24))
}

/// Replace an integral left ideal by the minimal-norm integral ideal in its
/// class: J = I·conj(x)/nrd(I) for x ∈ I of minimal reduced norm. Keeps
/// every downstream norm-equation target small.
pub fn reduce_ideal(
    order: &OrderBasis,
    ideal: &IdealLattice,
) -> Result<IdealLattice, LatticeError> {
    let n = ideal.nrd()?;
    let gram = ideal.gram(order);
    for k in 1u64..=256 {
        let target = &n * rat(k as i64);
        let vs = short_vectors(&gram, &target)?;
        if let Some(v) = vs.first() {
            let x = ideal.scoords(v).iter().enumerate().fold(
                Quat::zero(order.alg),
                |acc, (idx, c)| acc.add(&order.s[idx].scale(c)),
            );
            let phi = x.conj().scale(&n.recip());
            let j = ideal_right_mul(order, ideal, &phi)?;
            debug_assert_eq!(j.nrd().unwrap(), rat(k as i64));
            debug_assert!(j.is_left_ideal(order));
            return Ok(j);
        }
    }
    Err(LatticeError::LocalGeneratorNotFound(0))
}

/// Left ideal class set by breadth-first search over q-neighbors (q the
/// smallest prime ≠ p), with the exact Eichler mass Σ 1/|O_r(I)^×| = (p−1)/24
/// as the termination certificate.
pub fn left_ideal_classes(
    params: &AlgebraParams,
    order: &OrderBasis,
) -> Result<ClassSet, LatticeError> {
    let p = params.p;
    let q: u64 = if p == 2 { 3 } else { 2 };
    let target = eichler_mass(p);

    let o_lat = IdealLattice::order_lattice();
    let ro = right_order(order, params, &o_lat)?;
    let u0 = unit_count(order, &ro)?;
    let mut classes = vec![IdealClass {
        lattice: o_lat,
        right_order: ro,
        unit_order: u0,
        local_gens: BTreeMap::new(),
    }];
    let mut mass = BigRational::new(BigInt::one(), big(u0 as i64));
    let mut frontier = 0usize;

    while mass != target {
        if mass > target {
            return Err(LatticeError::MassOvershoot { found: mass, target });
        }
        if frontier >= classes.len() {
            return Err(LatticeError::MassUnreachable { found: mass, target });
        }
        let current = classes[frontier].lattice.clone();
        frontier += 1;
        for nb_raw in q_neighbors(order, &current, q)? {
            let nb = reduce_ideal(order, &nb_raw)?;
            let mut known = false;
            for c in &classes {
                if is_isomorphic(order, &c.lattice, &nb)?.is_some() {
                    known = true;
                    break;
                }
            }
            if known {
                continue;
            }
            let ro = right_order(order, params, &nb)?;
            let u = unit_count(order, &ro)?;
            mass = mass + BigRational::new(BigInt::one(), big(u as i64));
            classes.push(IdealClass {
                lattice: nb,
                right_order: ro,
                unit_order: u,
                local_gens: BTreeMap::new(),
            });
            if mass == target {
                break;
            }
        }
    }

    let mut set = ClassSet { params: *params, classes };
    attach_local_generators(order, &mut set)?;
    Ok(set)
}

/// The q+1 sub-ideals J ⊂ I with nrd(J) = q·nrd(I): preimages of the
/// O/qO-stable 2-dimensional subspaces of I/qI (the lines of P¹(F_q) under
/// any splitting O/qO ≅ M₂(F_q)).
fn q_neighbors(
    order: &OrderBasis,
    ideal: &IdealLattice,
    q: u64,
) -> Result<Vec<IdealLattice>, LatticeError> {
    let b = ideal.basis_quats(order);
    // action of each order generator on I/qI, on coordinate column vectors
    let mut action = Vec::with_capacity(4);
    for g in &order.s {
        let mut m = [[0u64; 4]; 4];
        for (c, bc) in b.iter().enumerate() {
            let z = ideal
                .coords_of(order, &g.mul(bc))
                .expect("O·I ⊆ I for a left ideal");
            for k in 0..4 {
                m[k][c] = arith::int_mod(&z[k], q);
            }
        }
        action.push(m);
    }
    let mut found = Vec::new();
    for sub in two_dim_subspaces(q) {
        if is_stable(&sub, &action, q) {
            found.push(sub);
        }
    }
    if found.len() != (q + 1) as usize {
        return Err(LatticeError::BadLineCount {
            q,
            expected: (q + 1) as usize,
            found: found.len(),
        });
    }
    let mut out = Vec::with_capacity(found.len());
    for sub in found {
        let mut gens: Vec<Quat> = b
            .iter()
            .map(|x| x.scale(&rat(q as i64)))
            .collect();
        for v in sub {
            let z: [BigInt; 4] = std::array::from_fn(|k| big(v[k] as i64));
            let sc = ideal.scoords(&z);
            gens.push(
                sc.iter().enumerate().fold(Quat::zero(order.alg), |acc, (idx, c)| {
                    acc.add(&order.s[idx].scale(c))
                }),
            );
        }
        let j = lattice_from_generators(order, &gens)?;
        debug_assert_eq!(j.nrd().unwrap(), ideal.nrd().unwrap() * rat(q as i64));
        out.push(j);
    }
    Ok(out)
}

/// All 2-dimensional subspaces of F_q⁴ as reduced echelon bases, in a fixed
/// deterministic order.
fn two_dim_subspaces(q: u64) -> Vec<[[u64; 4]; 2]> {
    let mut out = Vec::new();
    for p1 in 0..4usize {
        for p2 in p1 + 1..4usize {
            let free: Vec<usize> = (0..4).filter(|&c| c != p1 && c != p2).collect();
            // row 1 has pivot p1 with free entries at columns > p1 except p2;
            // row 2 has pivot p2 with free entries at columns > p2
            let f1: Vec<usize> = free.iter().copied().filter(|&c| c > p1).collect();
            let f2: Vec<usize> = free.iter().copied().filter(|&c| c > p2).collect();
            let n1 = f1.len() as u32;
            let n2 = f2.len() as u32;
            for a in 0..q.pow(n1) {
                for bfill in 0..q.pow(n2) {
                    let mut r1 = [0u64; 4];
                    let mut r2 = [0u64; 4];
                    r1[p1] = 1;
                    r2[p2] = 1;
                    let mut t = a;
                    for &c in &f1 {
                        r1[c] = t % q;
                        t /= q;
                    }
                    let mut t = bfill;
                    for &c in &f2 {
                        r2[c] = t % q;
                        t /= q;
                    }
                    out.push([r1, r2]);
                }
            }
        }
    }
    out
}

fn is_stable(sub: &[[u64; 4]; 2], action: &[[[u64; 4]; 4]], q: u64) -> bool {
    for m in action {
        for row in sub {
            let img: [u64; 4] = std::array::from_fn(|k| {
                (0..4).fold(0u64, |acc, c| (acc + m[k][c] * row[c]) % q)
            });
            if !in_span2(sub, &img, q) {
                return false;
            }
        }
    }
    true
}

fn in_span2(sub: &[[u64; 4]; 2], v: &[u64; 4], q: u64) -> bool {
    // sub rows are echelon with pivots; reduce v by both rows and check zero
    let mut v = *v;
    for row in sub {
        let piv = row.iter().position(|&x| x == 1).unwrap();
        let f = v[piv] % q;
        if f != 0 {
            for c in 0..4 {
                v[c] = (v[c] + (q - f) * row[c]) % q;
            }
        }
    }
    v.iter().all(|&x| x % q == 0)
}

/// Fill in the per-class sparse local generators: for each prime ℓ dividing
/// nrd(I_j), the first basis element whose reduced norm attains the minimal
/// ℓ-adic valuation v_ℓ(nrd I_j); bounded short-vector search as a fallback
/// when no basis element attains it.
fn attach_local_generators(
    order: &OrderBasis,
    set: &mut ClassSet,
) -> Result<(), LatticeError> {
    for class in set.classes.iter_mut() {
        let n = class.lattice.nrd()?;
        assert!(n.is_integer(), "integral ideals only");
        let mut n_int = n.to_integer();
        let mut primes = Vec::new();
        let mut l = 2u64;
        while n_int > BigInt::one() {
            if arith::valuation(&n_int, l) > 0 {
                primes.push(l);
                while (&n_int % big(l as i64)).is_zero() {
                    n_int /= big(l as i64);
                }
            }
            l += 1;
        }
        for l in primes {
            let v_min = arith::valuation_rat(&n, l);
            let basis = class.lattice.basis_quats(order);
            let mut gen = basis
                .iter()
                .find(|b| arith::valuation_rat(&b.nrd(), l) == v_min)
                .cloned();
            if gen.is_none() {
                gen = local_generator_search(order, &class.lattice, &n, l, v_min)?;
            }
            let gen = gen.ok_or(LatticeError::LocalGeneratorNotFound(l))?;
            class.local_gens.insert(l, gen);
        }
    }
    Ok(())
}

fn local_generator_search(
    order: &OrderBasis,
    lat: &IdealLattice,
    nrd: &BigRational,
    l: u64,
    v_min: i64,
) -> Result<Option<Quat>, LatticeError> {
    let gram = lat.gram(order);
    for k in 1u64..=64 {
        if k % l == 0 {
            continue;
        }
        let target = nrd * rat(k as i64);
        for v in short_vectors(&gram, &target)? {
            let q = lat.scoords(&v).iter().enumerate().fold(
                Quat::zero(order.alg),
                |acc, (idx, c)| acc.add(&order.s[idx].scale(c)),
            );
            if arith::valuation_rat(&q.nrd(), l) == v_min {
                return Ok(Some(q));
            }
        }
    }
    Ok(None)
}
