//! The Hecke operator engine: T_{ℓ0} on functions on the class set Ω (level
//! 1, weight 0) via the norm-equation/congruence core computing e_{i,j,k},
//! and the general level-N / weight-k extension with F_{p²} and GL₂(Z/N)
//! bookkeeping.
//!
//! Matrix convention: the entry at (row j, column i) is T(𝟙_i) evaluated at
//! point j, so columns index the input basis. Row sums of the integer
//! companion ℓ0·T are ℓ0 + 1 (each coset lands in exactly one class).

use crate::arith::{self, big, inv_mod, mul_mod};
use crate::fpk::{Fp2, Fp2Ctx, Fp2Matrix, FpkError};
use crate::lattice::{
    self, short_vectors, ClassSet, LatticeError,
};
use crate::quat::{AlgebraParams, OrderBasis, Quat, QuatError};
use crate::split::{
    compute_splitting, precision_plan, Mat2, Precision, PrecisionPlan, SplitError,
    SplittingData,
};
use num::{BigInt, BigRational, Signed};
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum HeckeError {
    #[error(transparent)]
    Quat(#[from] QuatError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Fpk(#[from] FpkError),
    #[error("norm-equation target {0} is not a positive integer")]
    BadTarget(BigRational),
    #[error("the general algorithm requires odd p, got p = {0}")]
    EvenP(u64),
    #[error("class {class} has {found} witnesses where {expected} were expected")]
    WitnessCount { class: usize, found: usize, expected: usize },
    #[error("p = {p} divides the unit-image size m_{class} = {m}; the label fibration degenerates")]
    DegenerateLabels { p: u64, class: usize, m: u64 },
    #[error("coset {k} of column {j} landed in {found} classes (expected exactly 1)")]
    CosetPartition { j: usize, k: usize, found: usize },
    #[error("dense general matrix of dimension {0} exceeds the guard {1}; stream it instead")]
    TooLarge(usize, usize),
}

/// Everything needed to evaluate Hecke operators for one (p, N) and a fixed
/// list of Hecke primes: the order, the class set with local generators, and
/// the per-prime splittings at the planned precision.
pub struct HeckeEngine {
    pub params: AlgebraParams,
    pub order: OrderBasis,
    pub classes: ClassSet,
    pub level: u64,
    pub plan: PrecisionPlan,
    pub splittings: BTreeMap<u64, SplittingData>,
    gram: [[BigRational; 4]; 4],
}

/// e-data of one (i, j) block: for each coset index k, the list of passing
/// integer solutions (t, x, y, z) with M·α = t·s¹ + x·s² + y·s³ + z·s⁴.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub m_scale: BigInt,
    pub k_norm: BigRational,
    pub per_k: Vec<Vec<[BigInt; 4]>>,
}

impl CellResult {
    pub fn e(&self, k: usize) -> bool {
        !self.per_k[k].is_empty()
    }
}

/// A level-1 Hecke matrix over F_p with its integer (Brandt-type) companion
/// ℓ0·T; entry (j, i) counts the cosets g_k with g_k·w^j = w^i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeckeMatrix {
    pub p: u64,
    pub ell0: u64,
    pub counts: Vec<Vec<u64>>,
    pub entries: Vec<Vec<u64>>,
}

impl HeckeEngine {
    pub fn build(
        params: AlgebraParams,
        order: OrderBasis,
        classes: ClassSet,
        level: u64,
        ell0s: &[u64],
    ) -> Result<Self, HeckeError> {
        let plan = precision_plan(&classes, level, ell0s)?;
        let per_prime: Vec<(u64, Precision)> =
            plan.primes.iter().map(|(&l, &prec)| (l, prec)).collect();
        let computed: Result<Vec<(u64, SplittingData)>, SplitError> = per_prime
            .par_iter()
            .map(|&(l, prec)| {
                compute_splitting(&params, &order, &classes, l, prec).map(|s| (l, s))
            })
            .collect();
        let splittings: BTreeMap<u64, SplittingData> = computed?.into_iter().collect();
        let gram = order.gram();
        Ok(HeckeEngine { params, order, classes, level, plan, splittings, gram })
    }

    pub fn h(&self) -> usize {
        self.classes.h()
    }

    /// The ℓ0+1 coset representatives (1 k; 0 ℓ0) for 0 ≤ k < ℓ0, then
    /// (ℓ0 0; 0 1), as integer matrices.
    pub fn cosets(ell0: u64) -> Vec<[i64; 4]> {
        let mut out: Vec<[i64; 4]> = (0..ell0)
            .map(|k| [1, k as i64, 0, ell0 as i64])
            .collect();
        out.push([ell0 as i64, 0, 0, 1]);
        out
    }

    /// V_{i,j}: primes where a class generator is nontrivial or ℓ | N,
    /// excluding p and ℓ0.
    pub fn v_ij(&self, i: usize, j: usize, ell0: u64) -> Vec<u64> {
        self.plan
            .primes
            .keys()
            .copied()
            .filter(|&l| {
                l != ell0
                    && (self.level % l == 0
                        || self.classes.classes[i].local_gens.contains_key(&l)
                        || self.classes.classes[j].local_gens.contains_key(&l))
            })
            .collect()
    }

    fn w_nrd_val(&self, j: usize, l: u64) -> u32 {
        self.classes.classes[j]
            .local_gens
            .get(&l)
            .map(|w| arith::valuation_rat(&w.nrd(), l).max(0) as u32)
            .unwrap_or(0)
    }

    /// M = ℓ0·Π_{ℓ ∈ V_{i,j} ∪ {p, ℓ0}} ℓ^{m_ℓ} and
    /// K = ℓ0·Π ℓ^{v_ℓ(nrd w^j) − v_ℓ(nrd w^i)}; m_p = 0 always since class
    /// representatives have norm coprime to p.
    pub fn compute_mk(&self, i: usize, j: usize, ell0: u64) -> (BigInt, BigRational) {
        let mut m = big(ell0 as i64);
        let mut k = BigRational::from(big(ell0 as i64));
        let mut primes = self.v_ij(i, j, ell0);
        primes.push(ell0);
        for l in primes {
            let m_l = self.plan.primes[&l].m;
            m *= big(l as i64).pow(m_l);
            let vi = self.w_nrd_val(i, l) as i64;
            let vj = self.w_nrd_val(j, l) as i64;
            let lb = BigRational::from(big(l as i64));
            k *= lb.pow((vj - vi) as i32);
        }
        (m, k)
    }

    /// All integer quadruples with nrd(t·s¹ + x·s² + y·s³ + z·s⁴) = target,
    /// in lexicographic order.
    pub fn solve_norm_equation(&self, target: &BigRational) -> Result<Vec<[BigInt; 4]>, HeckeError> {
        if target.is_negative() || !target.is_integer() {
            return Err(HeckeError::BadTarget(target.clone()));
        }
        Ok(short_vectors(&self.gram, target)?)
    }

    /// The ℓ ∈ V_{i,j} congruence: W^i·img(Mα)·adj(W^j) ≡ 0 mod
    /// ℓ^{v_ℓ(M) + v_ℓ(det W^j)}, evaluated at the working modulus.
    fn v_condition(&self, sol: &[BigInt; 4], i: usize, j: usize, l: u64, m_scale: &BigInt) -> bool {
        let split = &self.splittings[&l];
        let u = split.w_img[i].mul(&split.image_of_coords(sol)).mul(&split.w_img[j].adj());
        let e = arith::valuation(m_scale, l) + self.w_nrd_val(j, l);
        u.divisible_by(l.pow(e))
    }

    /// The ℓ0 congruence for coset k: W^i·img(Mα)·adj(W^j)·adj(g_k) ≡ 0 mod
    /// ℓ0^{v_ℓ0(M) + v_ℓ0(det W^j) + 1}.
    fn ell0_condition(
        &self,
        sol: &[BigInt; 4],
        i: usize,
        j: usize,
        k: usize,
        ell0: u64,
        m_scale: &BigInt,
    ) -> bool {
        let split = &self.splittings[&ell0];
        let modulus = split.working_modulus();
        let g = Self::cosets(ell0)[k];
        let adj_g = Mat2::from_i64(modulus, [g[3], -g[1], -g[2], g[0]]);
        let u = split.w_img[i]
            .mul(&split.image_of_coords(sol))
            .mul(&split.w_img[j].adj())
            .mul(&adj_g);
        let e = arith::valuation(m_scale, ell0) + self.w_nrd_val(j, ell0) + 1;
        u.divisible_by(ell0.pow(e))
    }

    /// Both displayed congruence families for one solution; pure.
    pub fn check_congruences(
        &self,
        sol: &[BigInt; 4],
        i: usize,
        j: usize,
        k: usize,
        ell0: u64,
        m_scale: &BigInt,
    ) -> bool {
        self.v_ij(i, j, ell0)
            .iter()
            .all(|&l| self.v_condition(sol, i, j, l, m_scale))
            && self.ell0_condition(sol, i, j, k, ell0, m_scale)
    }

    /// The full (i, j) block: norm equation once, V-filter once (it does not
    /// depend on k), then the per-coset ℓ0 filter.
    ///
    /// Internally the denominator-clearing scale is M = nrd(I_i) rather than
    /// the coarser ℓ0·Π ℓ^{m_ℓ} of [`compute_mk`]: every witness α with
    /// J = I_i·α lies in (1/nrd I_i)·conj(I_i)·J ⊆ (1/nrd I_i)·O, so
    /// nrd(I_i)·α ∈ O already, and the norm-equation target drops to
    /// ℓ0·nrd(I_i)·nrd(I_j). The congruence exponents are v_ℓ(M)-generic, so
    /// the passing witness sets are identical for the two scales.
    pub fn cell(&self, i: usize, j: usize, ell0: u64) -> Result<CellResult, HeckeError> {
        let ni = self.classes.classes[i].lattice.nrd()?;
        let nj = self.classes.classes[j].lattice.nrd()?;
        debug_assert!(ni.is_integer() && nj.is_integer());
        let m_scale = ni.to_integer();
        let k_norm = BigRational::from(big(ell0 as i64)) * &nj / &ni;
        let m_rat = BigRational::from(m_scale.clone());
        let target = &k_norm * &m_rat * &m_rat;
        let sols = self.solve_norm_equation(&target)?;
        let v_primes = self.v_ij(i, j, ell0);
        let survivors: Vec<[BigInt; 4]> = sols
            .into_iter()
            .filter(|s| v_primes.iter().all(|&l| self.v_condition(s, i, j, l, &m_scale)))
            .collect();
        let per_k = (0..=ell0 as usize)
            .map(|k| {
                survivors
                    .iter()
                    .filter(|s| self.ell0_condition(s, i, j, k, ell0, &m_scale))
                    .cloned()
                    .collect()
            })
            .collect();
        Ok(CellResult { m_scale, k_norm, per_k })
    }

    /// All h² blocks, in parallel, output order fixed by (i, j).
    pub fn all_cells(&self, ell0: u64) -> Result<Vec<Vec<CellResult>>, HeckeError> {
        let h = self.h();
        let pairs: Vec<(usize, usize)> =
            (0..h).flat_map(|i| (0..h).map(move |j| (i, j))).collect();
        let results: Result<Vec<CellResult>, HeckeError> = pairs
            .par_iter()
            .map(|&(i, j)| self.cell(i, j, ell0))
            .collect();
        let flat = results?;
        let mut out: Vec<Vec<CellResult>> = Vec::with_capacity(h);
        let mut it = flat.into_iter();
        for _ in 0..h {
            out.push((0..h).map(|_| it.next().unwrap()).collect());
        }
        Ok(out)
    }

    /// Level-1 weight-0 matrix of T_{ℓ0}: (j, i) entry ℓ0^{-1}·Σ_k e_{i,j,k}
    /// over F_p, plus the integer companion of coset counts.
    pub fn level1_matrix(&self, ell0: u64) -> Result<HeckeMatrix, HeckeError> {
        let h = self.h();
        let cells = self.all_cells(ell0)?;
        let mut counts = vec![vec![0u64; h]; h];
        for i in 0..h {
            for j in 0..h {
                counts[j][i] = (0..=ell0 as usize).filter(|&k| cells[i][j].e(k)).count() as u64;
            }
        }
        // each coset of each column lands in exactly one class
        for j in 0..h {
            for k in 0..=ell0 as usize {
                let found = (0..h).filter(|&i| cells[i][j].e(k)).count();
                if found != 1 {
                    return Err(HeckeError::CosetPartition { j, k, found });
                }
            }
        }
        let p = self.params.p;
        let linv = inv_mod(ell0 % p, p).expect("ℓ0 coprime to p");
        let entries = counts
            .iter()
            .map(|row| row.iter().map(|&c| mul_mod(c % p, linv, p)).collect())
            .collect();
        Ok(HeckeMatrix { p, ell0, counts, entries })
    }

    /// Residue Q̄_p ∈ F_{p²}^× of a witness: the image of
    /// α = (t·s¹+x·s²+y·s³+z·s⁴)/M under O_p → O_p/(j) = {s + t·i}.
    /// All class generators are trivial at p, so no w-conjugation appears.
    pub fn residue_qp(&self, ctx: &Fp2Ctx, sol: &[BigInt; 4], m_scale: &BigInt) -> Result<Fp2, HeckeError> {
        let p = self.params.p;
        let q = self.order.from_coords(sol);
        let s = arith::rat_mod(&q.c[0], p).expect("p-integral");
        let t = arith::rat_mod(&q.c[1], p).expect("p-integral");
        let minv = inv_mod(arith::int_mod(m_scale, p), p).expect("gcd(M, p) = 1");
        let val = Fp2 { s: mul_mod(s, minv, p), t: mul_mod(t, minv, p) };
        if val == ctx.zero() {
            return Err(HeckeError::WitnessCount { class: 0, found: 0, expected: 1 });
        }
        Ok(val)
    }

    /// Residue Q̄_ℓ = W^i·(1/M)img(Mα)·(W^j)^{-1} mod ℓ^{v_ℓ(N)} for ℓ | N,
    /// via the adjugate with exact cancellation of the ℓ-power in M·det(W^j).
    pub fn residue_ql(
        &self,
        sol: &[BigInt; 4],
        i: usize,
        j: usize,
        l: u64,
        m_scale: &BigInt,
    ) -> Result<Mat2, HeckeError> {
        let split = &self.splittings[&l];
        let vn = split.prec.vn;
        debug_assert!(vn > 0, "residue_ql only at primes dividing N");
        let u = split.w_img[i].mul(&split.image_of_coords(sol)).mul(&split.w_img[j].adj());
        // denominator M·det(W^j): ℓ-part ℓ^{v}, unit part inverted mod ℓ^{vn}
        let v = arith::valuation(m_scale, l) + self.w_nrd_val(j, l);
        let lv = l.pow(v);
        let fail = || HeckeError::Split(SplitError::InvariantFailed {
            l,
            reason: "level residue not invertible".into(),
        });
        if !u.divisible_by(lv) {
            return Err(fail());
        }
        let reduced = u.exact_div(lv);
        let w_nrd = self.classes.local_gen(&self.order, j, l).nrd();
        let denom_unit_rat = BigRational::from(m_scale.clone()) * w_nrd
            / BigRational::from(big(lv as i64));
        let target_mod = l.pow(vn);
        let unit = arith::rat_mod(&denom_unit_rat, target_mod).ok_or_else(fail)?;
        let unit_inv = inv_mod(unit, target_mod).ok_or_else(fail)?;
        let out = reduced.reduce(target_mod).scale(unit_inv);
        if out.inv().is_none() {
            return Err(fail());
        }
        Ok(out)
    }

    /// ρ_p(w β w^{-1}) ∈ F_{p²} for a unit β of the right order of class i;
    /// at p the conjugation is trivial because w_p = 1.
    fn unit_residue_p(&self, beta: &Quat) -> Fp2 {
        let p = self.params.p;
        Fp2 {
            s: arith::rat_mod(&beta.c[0], p).expect("p-integral"),
            t: arith::rat_mod(&beta.c[1], p).expect("p-integral"),
        }
    }

    /// ρ_ℓ(w_ℓ β w_ℓ^{-1}) mod ℓ^{v_ℓ(N)}, via the adjugate form with exact
    /// cancellation; β may have ℓ in its coordinate denominators (cleared by
    /// the scale ℓ^e, whose contribution cancels against the division).
    fn unit_residue_l(&self, class: usize, beta: &Quat, l: u64) -> Mat2 {
        let split = &self.splittings[&l];
        let vn = split.prec.vn;
        let working = split.working_modulus();
        let e = beta
            .c
            .iter()
            .map(|c| arith::valuation(c.denom(), l))
            .max()
            .unwrap_or(0);
        let le = BigRational::from(big(l.pow(e) as i64));
        let scaled = beta.scale(&le);
        let img = split.image_at(&scaled, working).expect("ℓ-integral after scaling");
        let w = &split.w_img[class];
        // ℓ^e·det(w)·(w β w^{-1}) = W·img(ℓ^e β)·adj(W); the unit part of the
        // divisor is nrd(w)/ℓ^{v_ℓ(nrd w)}
        let u = w.mul(&img).mul(&w.adj());
        let v = e + self.w_nrd_val(class, l);
        let lv = l.pow(v);
        assert!(u.divisible_by(lv), "conjugated unit not integral");
        let reduced = u.exact_div(lv);
        let w_nrd = self.classes.local_gen(&self.order, class, l).nrd();
        let unit_part = w_nrd / BigRational::from(big(l.pow(v - e) as i64));
        let target_mod = l.pow(vn);
        let unit = arith::rat_mod(&unit_part, target_mod).expect("unit part");
        let unit_inv = inv_mod(unit, target_mod).expect("unit part invertible");
        reduced.reduce(target_mod).scale(unit_inv)
    }
}

/// One point identification induced by a witness: μ' = μ·qp at p, and
/// γ' = γ·qn mod N when N > 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ident {
    pub qp: Fp2,
    pub qn: Option<[u64; 4]>,
}

/// The general Hecke operator data for one ℓ0: per (i, j, k) the deduplicated
/// identification set, plus the per-class unit-image sizes m_i, from which
/// dense matrices, the class-collapsed matrix, and weight-k blocks are all
/// assembled.
pub struct GeneralHecke {
    pub p: u64,
    pub eps: u64,
    pub level: u64,
    pub ell0: u64,
    pub h: usize,
    pub m_i: Vec<u64>,
    /// Elements of GL₂(Z/N), entries row-major mod N; a single trivial
    /// element when N = 1 (the γ factor is dropped).
    pub gl2: Vec<[u64; 4]>,
    /// cells[i][j][k] = identifications of that coset cell (empty iff e = 0).
    pub cells: Vec<Vec<Vec<Vec<Ident>>>>,
}

/// Enumerate GL₂(Z/N) in lexicographic order of the entry quadruple.
pub fn gl2_elements(n: u64) -> Vec<[u64; 4]> {
    if n == 1 {
        return vec![[0, 0, 0, 0]];
    }
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let det = ((a as i128 * d as i128 - b as i128 * c as i128)
                        .rem_euclid(n as i128)) as u64;
                    if num::integer::gcd(det, n) == 1 {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

fn mat_inv_mod(a: &[u64; 4], n: u64) -> Option<[u64; 4]> {
    let det = (a[0] as i128 * a[3] as i128 - a[1] as i128 * a[2] as i128).rem_euclid(n as i128)
        as u64;
    let dinv = inv_mod(det, n)?;
    Some([
        mul_mod(a[3], dinv, n),
        mul_mod(arith::sub_mod(0, a[1], n), dinv, n),
        mul_mod(arith::sub_mod(0, a[2], n), dinv, n),
        mul_mod(a[0], dinv, n),
    ])
}

fn mat_mul_mod(a: &[u64; 4], b: &[u64; 4], n: u64) -> [u64; 4] {
    [
        arith::add_mod(mul_mod(a[0], b[0], n), mul_mod(a[1], b[2], n), n),
        arith::add_mod(mul_mod(a[0], b[1], n), mul_mod(a[1], b[3], n), n),
        arith::add_mod(mul_mod(a[2], b[0], n), mul_mod(a[3], b[2], n), n),
        arith::add_mod(mul_mod(a[2], b[1], n), mul_mod(a[3], b[3], n), n),
    ]
}

/// CRT-combine the per-prime residues Q̄_ℓ into one matrix mod N.
fn crt_mats(parts: &[(u64, Mat2)], n: u64) -> [u64; 4] {
    let mut out = [0u64; 4];
    for e in 0..4 {
        let mut x = 0u64;
        let mut md = 1u64;
        for (lv, mat) in parts {
            // combine x mod md with mat.e[e] mod lv
            let (l_mod, r) = (*lv, mat.e[e] % lv);
            let inv = inv_mod(md % l_mod, l_mod).expect("coprime moduli");
            let diff = arith::sub_mod(r, x % l_mod, l_mod);
            let t = mul_mod(diff, inv, l_mod);
            x += md * t;
            md *= l_mod;
        }
        debug_assert_eq!(md, n);
        out[e] = x % n;
    }
    out
}

impl HeckeEngine {
    /// The general Hecke data at level N: every witness of every (i, j, k)
    /// cell contributes its identification (Q̄_p, Q̄_N); the set of distinct
    /// identifications of a nonempty cell always has size m_i, the number of
    /// distinct unit residues of the source class.
    pub fn general(&self, ell0: u64) -> Result<GeneralHecke, HeckeError> {
        let p = self.params.p;
        if p == 2 {
            return Err(HeckeError::EvenP(p));
        }
        let ctx = Fp2Ctx::new(p, self.params.eps)?;
        let h = self.h();
        let n = self.level;
        let level_primes: Vec<(u64, u32)> = self
            .plan
            .primes
            .iter()
            .filter(|(_, prec)| prec.vn > 0)
            .map(|(&l, prec)| (l, prec.vn))
            .collect();

        // m_i: distinct joint unit residues per class
        let mut m_i = Vec::with_capacity(h);
        for (i, class) in self.classes.classes.iter().enumerate() {
            let units = lattice::units_of(&self.order, &class.right_order)?;
            debug_assert_eq!(units.len() as u64, class.unit_order);
            let mut residues: Vec<Ident> = units
                .iter()
                .map(|beta| Ident {
                    qp: self.unit_residue_p(beta),
                    qn: if n == 1 {
                        None
                    } else {
                        let parts: Vec<(u64, Mat2)> = level_primes
                            .iter()
                            .map(|&(l, vn)| (l.pow(vn), self.unit_residue_l(i, beta, l)))
                            .collect();
                        Some(crt_mats(&parts, n))
                    },
                })
                .collect();
            residues.sort();
            residues.dedup();
            let m = residues.len() as u64;
            if m % p == 0 {
                return Err(HeckeError::DegenerateLabels { p, class: i, m });
            }
            m_i.push(m);
        }

        let cells_raw = self.all_cells(ell0)?;
        let mut cells = Vec::with_capacity(h);
        for i in 0..h {
            let mut row = Vec::with_capacity(h);
            for j in 0..h {
                let cell = &cells_raw[i][j];
                let mut per_k = Vec::with_capacity(ell0 as usize + 1);
                for k in 0..=ell0 as usize {
                    let mut idents: Vec<Ident> = Vec::new();
                    for sol in &cell.per_k[k] {
                        let qp = self.residue_qp(&ctx, sol, &cell.m_scale)?;
                        let qn = if n == 1 {
                            None
                        } else {
                            let parts: Vec<(u64, Mat2)> = level_primes
                                .iter()
                                .map(|&(l, vn)| {
                                    self.residue_ql(sol, i, j, l, &cell.m_scale)
                                        .map(|m| (l.pow(vn), m))
                                })
                                .collect::<Result<_, _>>()?;
                            Some(crt_mats(&parts, n))
                        };
                        idents.push(Ident { qp, qn });
                    }
                    idents.sort();
                    idents.dedup();
                    if !idents.is_empty() && idents.len() as u64 != m_i[i] {
                        return Err(HeckeError::WitnessCount {
                            class: i,
                            found: idents.len(),
                            expected: m_i[i] as usize,
                        });
                    }
                    per_k.push(idents);
                }
                row.push(per_k);
            }
            cells.push(row);
        }
        Ok(GeneralHecke {
            p,
            eps: self.params.eps,
            level: n,
            ell0,
            h,
            m_i,
            gl2: gl2_elements(n),
            cells,
        })
    }
}

impl GeneralHecke {
    pub fn mu_count(&self) -> usize {
        (self.p * self.p - 1) as usize
    }

    pub fn dim(&self) -> usize {
        self.h * self.mu_count() * self.gl2.len()
    }

    fn ctx(&self) -> Fp2Ctx {
        Fp2Ctx::new(self.p, self.eps).expect("odd p")
    }

    /// Label index of (class j, μ, γ-index); μ ordered lexicographically.
    pub fn label(&self, class: usize, mu: Fp2, gamma_idx: usize) -> usize {
        let p = self.p;
        let mu_idx = (mu.s * p + mu.t - 1) as usize;
        (class * self.mu_count() + mu_idx) * self.gl2.len() + gamma_idx
    }

    pub fn label_desc(&self, idx: usize) -> (usize, Fp2, usize) {
        let g = idx % self.gl2.len();
        let rest = idx / self.gl2.len();
        let mu_idx = (rest % self.mu_count()) as u64;
        let class = rest / self.mu_count();
        let mu = Fp2 { s: (mu_idx + 1) / self.p, t: (mu_idx + 1) % self.p };
        (class, mu, g)
    }

    fn gamma_index(&self) -> BTreeMap<[u64; 4], usize> {
        self.gl2.iter().enumerate().map(|(k, g)| (*g, k)).collect()
    }

    /// Dense matrix over F_p (embedded in F_{p²}) on the full label space:
    /// entry ((j, μ·Q̄_p, γ·Q̄_N), (i, μ, γ)) += ℓ0^{-1}·m_i^{-1} per
    /// identification. Guarded against noncompact dimensions.
    pub fn dense_matrix(&self, max_dim: usize) -> Result<Fp2Matrix, HeckeError> {
        let dim = self.dim();
        if dim > max_dim {
            return Err(HeckeError::TooLarge(dim, max_dim));
        }
        let ctx = self.ctx();
        let p = self.p;
        let linv = ctx.embed(inv_mod(self.ell0 % p, p).unwrap());
        let gidx = self.gamma_index();
        let mut out = Fp2Matrix::zero(dim);
        let mus = ctx.nonzero_elements();
        for i in 0..self.h {
            let weight = ctx.mul(linv, ctx.embed(inv_mod(self.m_i[i] % p, p).unwrap()));
            for j in 0..self.h {
                for k in 0..=self.ell0 as usize {
                    for ident in &self.cells[i][j][k] {
                        for (gi, gamma) in self.gl2.iter().enumerate() {
                            let tgt_gamma = match &ident.qn {
                                None => gi,
                                Some(qn) => gidx[&mat_mul_mod(gamma, qn, self.level)],
                            };
                            for &mu in &mus {
                                let row = self.label(j, ctx.mul(mu, ident.qp), tgt_gamma);
                                let col = self.label(i, mu, gi);
                                let cur = out.at(row, col);
                                out.set(row, col, ctx.add(cur, weight));
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Collapse each (j, i) block by summing over the (μ, γ) fiber of the
    /// output; reproduces the level-1 weight-0 matrix over F_p.
    pub fn collapse_matrix(&self) -> Vec<Vec<u64>> {
        let p = self.p;
        let linv = inv_mod(self.ell0 % p, p).unwrap();
        let mut out = vec![vec![0u64; self.h]; self.h];
        for i in 0..self.h {
            let mi_inv = inv_mod(self.m_i[i] % p, p).unwrap();
            for j in 0..self.h {
                let mut acc = 0u64;
                for k in 0..=self.ell0 as usize {
                    acc = arith::add_mod(
                        acc,
                        mul_mod(self.cells[i][j][k].len() as u64 % p, mi_inv, p),
                        p,
                    );
                }
                out[j][i] = mul_mod(acc, linv, p);
            }
        }
        out
    }

    /// Sparse entries of a single output row (j, μ', γ'), for streaming the
    /// full matrix without materializing it: the column of each contribution
    /// is recovered as (i, μ'·Q̄_p^{-1}, γ'·Q̄_N^{-1}).
    pub fn row_entries(&self, row: usize) -> Vec<(usize, Fp2)> {
        let ctx = self.ctx();
        let p = self.p;
        let linv = ctx.embed(inv_mod(self.ell0 % p, p).unwrap());
        let gidx = self.gamma_index();
        let (j, mu_out, gi_out) = self.label_desc(row);
        let mut acc: BTreeMap<usize, Fp2> = BTreeMap::new();
        for i in 0..self.h {
            let weight = ctx.mul(linv, ctx.embed(inv_mod(self.m_i[i] % p, p).unwrap()));
            for k in 0..=self.ell0 as usize {
                for ident in &self.cells[i][j][k] {
                    let qp_inv = ctx.inv(ident.qp).expect("Q̄_p is a unit");
                    let mu = ctx.mul(mu_out, qp_inv);
                    let g_col = match &ident.qn {
                        None => gi_out,
                        Some(qn) => {
                            let qn_inv = mat_inv_mod(qn, self.level).expect("Q̄_N invertible");
                            gidx[&mat_mul_mod(&self.gl2[gi_out], &qn_inv, self.level)]
                        }
                    };
                    let col = self.label(i, mu, g_col);
                    let e = acc.entry(col).or_insert_with(|| ctx.zero());
                    *e = ctx.add(*e, weight);
                }
            }
        }
        acc.into_iter().collect()
    }

    /// The weight-k block: the matrix of T_{ℓ0} on the span of
    /// f_{i,γ} = Σ_μ μ^{−k}·𝟙_{(i,μ,γ)}, indexed by (class, γ). Entry
    /// ((j,γ'),(i,γ)) = ℓ0^{-1}·Σ_k m_i^{-1}·Σ_{ι: γ·Q̄_N = γ'} Q̄_p^k over
    /// F_{p²}. Weights are taken mod p²−1.
    pub fn weight_matrix(&self, weight: u64) -> Fp2Matrix {
        let ctx = self.ctx();
        let p = self.p;
        let k_red = weight % (p * p - 1);
        let linv = ctx.embed(inv_mod(self.ell0 % p, p).unwrap());
        let gidx = self.gamma_index();
        let g_count = self.gl2.len();
        let dim = self.h * g_count;
        let mut out = Fp2Matrix::zero(dim);
        for i in 0..self.h {
            let weight_i = ctx.mul(linv, ctx.embed(inv_mod(self.m_i[i] % p, p).unwrap()));
            for j in 0..self.h {
                for kk in 0..=self.ell0 as usize {
                    for ident in &self.cells[i][j][kk] {
                        let qpk = ctx.pow(ident.qp, k_red);
                        let term = ctx.mul(weight_i, qpk);
                        for (gi, gamma) in self.gl2.iter().enumerate() {
                            let tgt = match &ident.qn {
                                None => gi,
                                Some(qn) => gidx[&mat_mul_mod(gamma, qn, self.level)],
                            };
                            let row = j * g_count + tgt;
                            let col = i * g_count + gi;
                            let cur = out.at(row, col);
                            out.set(row, col, ctx.add(cur, term));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Convenience: complete level-1 weight-0 pipeline for one (p, ℓ0) pair.
pub fn hecke_matrix_level1(p: u64, ell0: u64) -> Result<HeckeMatrix, HeckeError> {
    let params = crate::quat::build_algebra(p)?;
    let order = crate::quat::maximal_order_basis(&params)?;
    let classes = lattice::left_ideal_classes(&params, &order)?;
    let engine = HeckeEngine::build(params, order, classes, 1, &[ell0])?;
    engine.level1_matrix(ell0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::lattice::left_ideal_classes;
    use num::Zero;
    use crate::quat::{build_algebra, maximal_order_basis};

    fn engine(p: u64, level: u64, ells: &[u64]) -> HeckeEngine {
        let params = build_algebra(p).unwrap();
        let order = maximal_order_basis(&params).unwrap();
        let classes = left_ideal_classes(&params, &order).unwrap();
        HeckeEngine::build(params, order, classes, level, ells).unwrap()
    }

    #[test]
    fn compute_mk_fixed_points() {
        let e2 = engine(11, 1, &[2]);
        // m₂ = 1, m₁₁ = 0: (1,1): M = 2·2 = 4, K = 2
        let (m, k) = e2.compute_mk(0, 0, 2);
        assert_eq!((m, k), (big(4), rat(2)));
        // (1,2): K = 2·2^{1−0} = 4
        let (m, k) = e2.compute_mk(0, 1, 2);
        assert_eq!((m, k), (big(4), rat(4)));
        let e3 = engine(11, 1, &[3]);
        // ℓ0 = 3, (2,2): M = 3·2 = 6, K = 3
        let (m, k) = e3.compute_mk(1, 1, 3);
        assert_eq!((m, k), (big(6), rat(3)));
    }

    #[test]
    fn norm_equation_fixed_points() {
        let e = engine(11, 1, &[2]);
        // target 2: exactly (±1, ±1, 0, 0)
        let sols = e.solve_norm_equation(&rat(2)).unwrap();
        assert_eq!(sols.len(), 4);
        for s in &sols {
            assert_eq!((s[0].clone() * s[0].clone() + s[1].clone() * s[1].clone()), big(2));
            assert!(s[2].is_zero() && s[3].is_zero());
        }
        // target 1: exactly the unit group of O (order 4)
        let sols = e.solve_norm_equation(&rat(1)).unwrap();
        assert_eq!(sols.len(), 4);
        // target 12 includes the z = ±2 family
        let sols = e.solve_norm_equation(&rat(12)).unwrap();
        assert!(sols.iter().any(|s| s[3] == big(2) || s[3] == big(-2)));
        // non-integer target rejected
        assert!(e.solve_norm_equation(&crate::arith::ratio(1, 2)).is_err());
    }

    #[test]
    fn section2_congruence_fixed_points() {
        // the hand computation checks α = 1 + i at the sharp scale M = 1,
        // K = 2: coset k = 1 passes, coset k = 0 does not
        let e = engine(11, 1, &[2]);
        let sol = [big(1), big(1), big(0), big(0)];
        assert!(!e.check_congruences(&sol, 0, 0, 0, 2, &big(1)));
        assert!(e.check_congruences(&sol, 0, 0, 1, 2, &big(1)));
        // identity witness, i = j, passes every V-condition vacuously
        let one = [big(1), big(0), big(0), big(0)];
        let v = e.v_ij(0, 0, 2);
        assert!(v.is_empty());
        assert!(v.iter().all(|&l| e.v_condition(&one, 0, 0, l, &big(1))));
    }

    #[test]
    fn e_cell_sums_p11_ell2() {
        let e = engine(11, 1, &[2]);
        // Σ_k e(i, j, k) fixed points: (1,1) → 1, (2,1) → 2, (1,2) → 3, (2,2) → 0
        let count = |i: usize, j: usize| -> usize {
            let c = e.cell(i, j, 2).unwrap();
            (0..=2).filter(|&k| c.e(k)).count()
        };
        assert_eq!(count(0, 0), 1);
        assert_eq!(count(1, 0), 2);
        assert_eq!(count(0, 1), 3);
        assert_eq!(count(1, 1), 0);
        // witness count per nonempty cell = |O_r(I_i)^×|
        let c = e.cell(0, 1, 2).unwrap();
        for k in 0..=2usize {
            if c.e(k) {
                assert_eq!(c.per_k[k].len() as u64, e.classes.classes[0].unit_order);
            }
        }
    }

    /// Engine built on the published class-set data for p = 11: the exact
    /// I₂ lattice from its printed Z-basis and the printed local generator
    /// w² = 1 − (3/2)i − (1/2)ij. Individual e_{i,j,k} and witnesses depend
    /// on these choices (only the k-sums do not), so the witness fixtures
    /// are checked against this aligned engine.
    fn engine_published_p11(ells: &[u64]) -> HeckeEngine {
        use crate::arith::ratio;
        let params = build_algebra(11).unwrap();
        let order = maximal_order_basis(&params).unwrap();
        let mut classes = left_ideal_classes(&params, &order).unwrap();
        let al = params.algebra();
        let gens = [
            Quat::from_ints(al, [2, 0, 0, 0]),
            Quat::from_ints(al, [0, -2, 0, 0]),
            Quat::new(al, [rat(1), ratio(-3, 2), rat(0), ratio(-1, 2)]),
            Quat::new(al, [ratio(1, 2), rat(-1), ratio(-1, 2), rat(0)]),
        ];
        let i2 = lattice::lattice_from_generators(&order, &gens).unwrap();
        let w2 = gens[2].clone();
        assert!(i2.contains(&order, &w2));
        classes.classes[1].lattice = i2.clone();
        classes.classes[1].right_order =
            lattice::right_order(&order, &params, &i2).unwrap();
        classes.classes[1].unit_order =
            lattice::unit_count(&order, &classes.classes[1].right_order).unwrap();
        classes.classes[1].local_gens.clear();
        classes.classes[1].local_gens.insert(2, w2);
        HeckeEngine::build(params, order, classes, 1, ells).unwrap()
    }

    #[test]
    fn published_witnesses_p11_ell2() {
        let e = engine_published_p11(&[2]);
        // same coset counts as with our own representatives
        let lvl1 = e.level1_matrix(2).unwrap();
        assert_eq!(lvl1.counts, vec![vec![1, 2], vec![3, 0]]);
        // witnesses for (i, j) = (1, 2): the printed generators
        // α ∈ {−i+½−½j, i+½−½j, 2} at the scale M = nrd(I₁) = 1, i.e. the
        // order coordinates (1,−1,0,−1), (1,1,0,−1), (2,0,0,0)
        let c = e.cell(0, 1, 2).unwrap();
        assert_eq!(c.m_scale, big(1));
        let all: Vec<[BigInt; 4]> = c.per_k.iter().flatten().cloned().collect();
        let expect = [
            [big(1), big(-1), big(0), big(-1)],
            [big(1), big(1), big(0), big(-1)],
            [big(2), big(0), big(0), big(0)],
        ];
        for w in &expect {
            assert!(all.contains(w), "missing witness {w:?}");
        }
        // each of the three cosets of column 2 admits exactly |O^×| = 4 witnesses
        for k in 0..=2usize {
            assert!(c.e(k));
            assert_eq!(c.per_k[k].len(), 4);
        }
    }

    #[test]
    fn t2_t3_matrices_p11() {
        let m2 = hecke_matrix_level1(11, 2).unwrap();
        assert_eq!(m2.counts, vec![vec![1, 2], vec![3, 0]]);
        assert_eq!(m2.entries, vec![vec![6, 1], vec![7, 0]]);
        let m3 = hecke_matrix_level1(11, 3).unwrap();
        assert_eq!(m3.counts, vec![vec![2, 2], vec![3, 1]]);
        assert_eq!(m3.entries, vec![vec![8, 8], vec![1, 4]]);
    }

    #[test]
    fn h1_matrix_is_coset_count() {
        for (p, l0) in [(13u64, 2u64), (2, 3), (5, 3), (7, 2)] {
            let m = hecke_matrix_level1(p, l0).unwrap();
            assert_eq!(m.counts, vec![vec![l0 + 1]]);
            let expect = mul_mod((l0 + 1) % p, inv_mod(l0 % p, p).unwrap(), p);
            assert_eq!(m.entries, vec![vec![expect]]);
        }
    }

    #[test]
    fn residue_fixed_points() {
        let e = engine(11, 3, &[2]);
        let ctx = Fp2Ctx::new(11, 1).unwrap();
        // α = 1 with i = j: Q̄_p = 1, Q̄_ℓ = identity
        let one = [big(1), big(0), big(0), big(0)];
        assert_eq!(e.residue_qp(&ctx, &one, &big(1)).unwrap(), ctx.one());
        let q3 = e.residue_ql(&one, 0, 0, 3, &big(1)).unwrap();
        assert_eq!(q3, Mat2::identity(3));
        // α = 1 + i: image mod 3 is (1 −1; 1 1), invertible
        let sol = [big(1), big(1), big(0), big(0)];
        let q3 = e.residue_ql(&sol, 0, 0, 3, &big(1)).unwrap();
        assert_eq!(q3.e, [1, 2, 1, 1]);
        // det(Q̄_ℓ) ≡ nrd(α) mod 3 for the witness α = 1 + i (nrd 2)
        assert_eq!(q3.det(), 2);
        // the published isomorphism witness α = ½(i + ½(1+j)) = (¼ + ½i + ¼j)
        // has Q̄_p = (3 + 6i)·… : just check it is a nonzero F_{p²} point and
        // a unit of the right multiplicative order
        let quarter = [big(1), big(2), big(0), big(1)]; // 4α = s¹ + 2s² + s⁴
        let qp = e.residue_qp(&ctx, &quarter, &big(4)).unwrap();
        assert_ne!(qp, ctx.zero());
        assert_eq!(ctx.pow(qp, 11 * 11 - 1), ctx.one());
        // units of O reduce to norm-1 elements of F_{p²}^×
        let units = lattice::units_of(&e.order, &e.classes.classes[0].right_order).unwrap();
        for u in units {
            let coords = e.order.coords_of(&u).map(|c| c.to_integer());
            let r = e.residue_qp(&ctx, &coords, &big(1)).unwrap();
            assert_eq!(ctx.norm(r), 1);
        }
    }

    #[test]
    fn general_n1_collapse_and_weights() {
        let e = engine(11, 1, &[2, 3]);
        let g2 = e.general(2).unwrap();
        assert_eq!(g2.m_i, vec![4, 6]);
        assert_eq!(g2.dim(), 2 * 120);
        // collapsing the label fibration reproduces the level-1 matrix
        let lvl1 = e.level1_matrix(2).unwrap();
        assert_eq!(g2.collapse_matrix(), lvl1.entries);
        // weight 0 block equals the level-1 matrix
        let w0 = g2.weight_matrix(0);
        assert_eq!(w0.n, 2);
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(w0.at(r, c).s, lvl1.entries[r][c]);
                assert_eq!(w0.at(r, c).t, 0);
            }
        }
        // the all-ones vector is an eigenvector of the dense general matrix
        // with eigenvalue (ℓ0+1)/ℓ0
        let ctx = Fp2Ctx::new(11, 1).unwrap();
        let dense = g2.dense_matrix(512).unwrap();
        let ones = vec![ctx.one(); dense.n];
        let out = dense.apply(&ctx, &ones);
        let expect = ctx.embed(mul_mod(3, inv_mod(2, 11).unwrap(), 11));
        assert!(out.iter().all(|&x| x == expect));
        // weight blocks of T₂ and T₃ commute for k ∈ {0, 2, 120}
        let g3 = e.general(3).unwrap();
        for k in [0u64, 2, 120] {
            let a = g2.weight_matrix(k);
            let b = g3.weight_matrix(k);
            assert!(a.commutes_with(&ctx, &b), "weight {k} blocks do not commute");
        }
        // the full 240×240 matrices commute and their common eigenvalue
        // pairs include (a₂, a₃) = (−1, −4) and (7, 5)
        let d2 = dense;
        let d3 = g3.dense_matrix(512).unwrap();
        assert!(d2.commutes_with(&ctx, &d3));
        for (a2, a3) in [(10u64, 7u64), (7, 5)] {
            let mut s2 = d2.clone();
            let mut s3 = d3.clone();
            for k in 0..s2.n {
                s2.set(k, k, ctx.sub(s2.at(k, k), ctx.embed(a2)));
                s3.set(k, k, ctx.sub(s3.at(k, k), ctx.embed(a3)));
            }
            let k2 = crate::fpk::kernel(&ctx, &s2);
            // joint eigenvector exists iff (T₃ − a₃) drops rank on ker(T₂ − a₂):
            // zero-pad the image columns into a square matrix and compare ranks
            let n = s3.n;
            let mut imgs = Fp2Matrix::zero(n);
            for (c, v) in k2.iter().enumerate() {
                let w = s3.apply(&ctx, v);
                for r in 0..n {
                    imgs.set(r, c, w[r]);
                }
            }
            let rank_imgs = crate::fpk::rank(&ctx, &imgs);
            assert!(
                rank_imgs < k2.len(),
                "no joint eigenvector for ({a2}, {a3}): rank {rank_imgs} of {}",
                k2.len()
            );
        }
    }

    #[test]
    fn general_level3_identities() {
        let e = engine(11, 3, &[2]);
        let g = e.general(2).unwrap();
        assert_eq!(g.gl2.len(), 48);
        assert_eq!(g.dim(), 2 * 120 * 48);
        // collapse matches a freshly computed level-1 run
        let lvl1 = hecke_matrix_level1(11, 2).unwrap();
        assert_eq!(g.collapse_matrix(), lvl1.entries);
        // weight-0 matrix is 96×96 with the all-ones eigenvector on its
        // γ-collapsed level-1 structure; here just check commuting with itself
        let w0 = g.weight_matrix(0);
        assert_eq!(w0.n, 96);
    }

    #[test]
    fn p3_label_fibration() {
        // p = 3 at level 1 has unit image of size 4 (the cube roots of unity
        // reduce trivially mod π); with level structure the joint image has
        // order 12, which p divides, so the general path refuses cleanly
        let e = engine(3, 1, &[2]);
        let g = e.general(2).unwrap();
        assert_eq!(g.m_i, vec![4]);
        let e = engine(3, 2, &[5]);
        assert!(matches!(
            e.general(5),
            Err(HeckeError::DegenerateLabels { p: 3, m: 12, .. })
        ));
    }

    #[test]
    fn witness_sets_closed_under_units() {
        // replacing the witness list by {u·α : u ∈ O_r(I_i)^×} leaves the
        // identification set invariant (it already is the full unit orbit)
        let e = engine(11, 1, &[2]);
        let ctx = Fp2Ctx::new(11, 1).unwrap();
        let units =
            lattice::units_of(&e.order, &e.classes.classes[0].right_order).unwrap();
        let cell = e.cell(0, 1, 2).unwrap();
        for k in 0..=2usize {
            if !cell.e(k) {
                continue;
            }
            let base: std::collections::BTreeSet<Fp2> = cell.per_k[k]
                .iter()
                .map(|s| e.residue_qp(&ctx, s, &cell.m_scale).unwrap())
                .collect();
            for u in &units {
                let twisted: std::collections::BTreeSet<Fp2> = cell.per_k[k]
                    .iter()
                    .map(|s| {
                        let alpha = e.order.from_coords(s);
                        let scaled = u.mul(&alpha);
                        let coords = e.order.coords_of(&scaled);
                        let ic: [BigInt; 4] = std::array::from_fn(|idx| {
                            assert!(coords[idx].is_integer());
                            coords[idx].to_integer()
                        });
                        e.residue_qp(&ctx, &ic, &cell.m_scale).unwrap()
                    })
                    .collect();
                assert_eq!(base, twisted);
            }
        }
    }

    #[test]
    fn ident_sets_are_unit_orbits() {
        // the identification set of every nonempty cell is a coset of the
        // unit-residue image: replacing the witness list by unit multiples
        // leaves the set invariant, so its size is exactly m_i
        let e = engine(11, 1, &[2]);
        let g = e.general(2).unwrap();
        for i in 0..g.h {
            for j in 0..g.h {
                for k in 0..=2usize {
                    let cell = &g.cells[i][j][k];
                    assert!(cell.is_empty() || cell.len() as u64 == g.m_i[i]);
                }
            }
        }
    }
}
