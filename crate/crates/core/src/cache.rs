//! JSON cache for the expensive per-p data: algebra parameters, the maximal
//! order basis, the ideal class set with unit orders and local generators,
//! and any computed splittings. Serialization is deterministic and
//! round-trips bit-exactly (all big numbers as decimal/fraction strings,
//! maps as sorted structures).

use crate::arith::big;
use crate::lattice::{ClassSet, IdealClass, IdealLattice};
use crate::quat::{AlgebraParams, OrderBasis, Quat};
use crate::split::{Mat2, Precision, SplittingData};
use num::{BigInt, BigRational, One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed cache: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed cache: {0}")]
    Malformed(String),
    #[error("cache verification failed: {0}")]
    Verify(String),
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct CacheFile {
    pub schema_version: u32,
    pub p: u64,
    pub eps: u64,
    pub r: Option<u64>,
    pub a: Option<u64>,
    /// 16 rationals: coordinates of s¹..s⁴ in (1, i, j, ij).
    pub basis: Vec<Vec<String>>,
    pub classes: Vec<CacheClass>,
    #[serde(default)]
    pub splittings: Vec<CacheSplitting>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct CacheClass {
    /// Upper-triangular HNF rows (s-coordinates times denominator).
    pub hnf: Vec<Vec<String>>,
    pub denominator: String,
    pub unit_order: u64,
    /// ℓ ↦ 4 rational (1, i, j, ij)-coordinates of w_ℓ.
    pub local_gens: BTreeMap<u64, Vec<String>>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct CacheSplitting {
    pub l: u64,
    pub n: u32,
    pub m: u32,
    pub vn: u32,
    pub a_mat: Vec<u64>,
    pub b_mat: Vec<u64>,
    pub s_img: Vec<Vec<u64>>,
    pub w_img: Vec<Vec<u64>>,
}

fn rat_to_string(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn rat_from_string(s: &str) -> Result<BigRational, CacheError> {
    let bad = || CacheError::Malformed(format!("bad rational '{s}'"));
    match s.split_once('/') {
        None => Ok(BigRational::from(BigInt::from_str(s).map_err(|_| bad())?)),
        Some((n, d)) => {
            let num = BigInt::from_str(n).map_err(|_| bad())?;
            let den = BigInt::from_str(d).map_err(|_| bad())?;
            if den.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(num, den))
        }
    }
}

pub fn to_cache(
    params: &AlgebraParams,
    order: &OrderBasis,
    classes: &ClassSet,
    splittings: &[SplittingData],
) -> CacheFile {
    CacheFile {
        schema_version: SCHEMA_VERSION,
        p: params.p,
        eps: params.eps,
        r: params.r,
        a: params.a,
        basis: order
            .s
            .iter()
            .map(|s| s.c.iter().map(rat_to_string).collect())
            .collect(),
        classes: classes
            .classes
            .iter()
            .map(|c| CacheClass {
                hnf: c
                    .lattice
                    .rows
                    .iter()
                    .map(|r| r.iter().map(|x| x.to_string()).collect())
                    .collect(),
                denominator: c.lattice.den.to_string(),
                unit_order: c.unit_order,
                local_gens: c
                    .local_gens
                    .iter()
                    .map(|(&l, w)| (l, w.c.iter().map(rat_to_string).collect()))
                    .collect(),
            })
            .collect(),
        splittings: splittings
            .iter()
            .map(|s| CacheSplitting {
                l: s.l,
                n: s.prec.n,
                m: s.prec.m,
                vn: s.prec.vn,
                a_mat: s.a_mat.e.to_vec(),
                b_mat: s.b_mat.e.to_vec(),
                s_img: s.s_img.iter().map(|m| m.e.to_vec()).collect(),
                w_img: s.w_img.iter().map(|m| m.e.to_vec()).collect(),
            })
            .collect(),
    }
}

pub struct CachedData {
    pub params: AlgebraParams,
    pub order: OrderBasis,
    pub classes: ClassSet,
    pub splittings: Vec<SplittingData>,
}

pub fn from_cache(file: &CacheFile) -> Result<CachedData, CacheError> {
    let bad = |msg: &str| CacheError::Malformed(msg.to_string());
    if file.schema_version != SCHEMA_VERSION {
        return Err(bad("unsupported schema version"));
    }
    let params =
        AlgebraParams { p: file.p, eps: file.eps, r: file.r, a: file.a };
    let alg = params.algebra();
    if file.basis.len() != 4 {
        return Err(bad("basis must have 4 elements"));
    }
    let mut s_elems = Vec::with_capacity(4);
    for coords in &file.basis {
        if coords.len() != 4 {
            return Err(bad("basis element must have 4 coordinates"));
        }
        let mut c = Vec::with_capacity(4);
        for x in coords {
            c.push(rat_from_string(x)?);
        }
        s_elems.push(Quat::new(alg, [c[0].clone(), c[1].clone(), c[2].clone(), c[3].clone()]));
    }
    let order = OrderBasis::from_elements(
        alg,
        [s_elems[0].clone(), s_elems[1].clone(), s_elems[2].clone(), s_elems[3].clone()],
    )
    .ok_or_else(|| bad("basis not full rank"))?;

    let mut classes = Vec::with_capacity(file.classes.len());
    for c in &file.classes {
        if c.hnf.len() != 4 || c.hnf.iter().any(|r| r.len() != 4) {
            return Err(bad("class HNF must be 4×4"));
        }
        let mut rows: [[BigInt; 4]; 4] = Default::default();
        for (r, row) in c.hnf.iter().enumerate() {
            for (k, x) in row.iter().enumerate() {
                rows[r][k] = BigInt::from_str(x).map_err(|_| bad("bad HNF entry"))?;
            }
        }
        let den = BigInt::from_str(&c.denominator).map_err(|_| bad("bad denominator"))?;
        if den <= BigInt::zero() {
            return Err(bad("denominator must be positive"));
        }
        let lattice = IdealLattice { rows, den };
        let mut local_gens = BTreeMap::new();
        for (&l, w) in &c.local_gens {
            if w.len() != 4 {
                return Err(bad("local generator must have 4 coordinates"));
            }
            let mut coords = Vec::with_capacity(4);
            for x in w {
                coords.push(rat_from_string(x)?);
            }
            local_gens.insert(
                l,
                Quat::new(alg, [
                    coords[0].clone(),
                    coords[1].clone(),
                    coords[2].clone(),
                    coords[3].clone(),
                ]),
            );
        }
        let right_order = crate::lattice::right_order(&order, &params, &lattice)
            .map_err(|e| CacheError::Malformed(format!("class right order: {e}")))?;
        classes.push(IdealClass { lattice, right_order, unit_order: c.unit_order, local_gens });
    }
    let classes = ClassSet { params, classes };

    let mut splittings = Vec::with_capacity(file.splittings.len());
    for s in &file.splittings {
        let prec = Precision { m: s.m, n: s.n, vn: s.vn };
        let full = s
            .l
            .checked_pow(s.n)
            .ok_or_else(|| bad("splitting modulus overflow"))?;
        let working = s.l.pow(prec.working_exp());
        let as_mat2 = |e: &[u64], m: u64| -> Result<Mat2, CacheError> {
            if e.len() != 4 {
                return Err(bad("matrix must have 4 entries"));
            }
            Ok(Mat2::new(m, [e[0], e[1], e[2], e[3]]))
        };
        splittings.push(SplittingData {
            l: s.l,
            prec,
            a_mat: as_mat2(&s.a_mat, full)?,
            b_mat: as_mat2(&s.b_mat, full)?,
            s_img: [
                as_mat2(&s.s_img[0], working)?,
                as_mat2(&s.s_img[1], working)?,
                as_mat2(&s.s_img[2], working)?,
                as_mat2(&s.s_img[3], working)?,
            ],
            w_img: s
                .w_img
                .iter()
                .map(|e| as_mat2(e, working))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(CachedData { params, order, classes, splittings })
}

/// Recompute the cheap invariants without redoing any search: order axioms,
/// HNF canonicity, unit orders and the exact Eichler mass, splitting
/// relations and determinant compatibility.
pub fn verify(file: &CacheFile) -> Result<(), CacheError> {
    let data = from_cache(file)?;
    let fail = |msg: String| CacheError::Verify(msg);
    crate::quat::validate_order(&data.order, data.params.p)
        .map_err(|e| fail(format!("order: {e}")))?;
    let mut mass = BigRational::zero();
    for (j, class) in data.classes.classes.iter().enumerate() {
        if !class.lattice.is_left_ideal(&data.order) {
            return Err(fail(format!("class {} is not a left ideal", j + 1)));
        }
        let units = crate::lattice::unit_count(&data.order, &class.right_order)
            .map_err(|e| fail(format!("class {}: {e}", j + 1)))?;
        if units != class.unit_order {
            return Err(fail(format!(
                "class {}: stored unit order {} ≠ recomputed {}",
                j + 1,
                class.unit_order,
                units
            )));
        }
        mass += BigRational::new(BigInt::one(), big(units as i64));
        for (&l, w) in &class.local_gens {
            let nrd = class.lattice.nrd().map_err(|e| fail(e.to_string()))?;
            if crate::arith::valuation_rat(&w.nrd(), l) != crate::arith::valuation_rat(&nrd, l) {
                return Err(fail(format!("class {} generator at {} not minimal", j + 1, l)));
            }
            if !class.lattice.contains(&data.order, w) {
                return Err(fail(format!("class {} generator at {} outside ideal", j + 1, l)));
            }
        }
    }
    let target = BigRational::new(big(data.params.p as i64 - 1), big(24));
    if mass != target {
        return Err(fail(format!("mass {mass} ≠ (p−1)/24 = {target}")));
    }
    for s in &data.splittings {
        if !crate::split::relations_hold(data.params.eps, data.params.p, &s.a_mat, &s.b_mat) {
            return Err(fail(format!("splitting at {} fails the relations", s.l)));
        }
        if !crate::split::condition_holds(&data.order, s.l, &s.a_mat, &s.b_mat) {
            return Err(fail(format!("splitting at {} fails the basis congruences", s.l)));
        }
        for (k, img) in s.s_img.iter().enumerate() {
            let nrd = crate::arith::rat_mod(&data.order.s[k].nrd(), img.m)
                .ok_or_else(|| fail("nrd not ℓ-integral".into()))?;
            if img.det() != nrd {
                return Err(fail(format!("splitting at {}: det(S^{}) mismatch", s.l, k + 1)));
            }
        }
    }
    Ok(())
}

pub fn cache_path(dir: &Path, p: u64) -> PathBuf {
    dir.join(format!("p{p}.json"))
}

pub fn save(dir: &Path, file: &CacheFile) -> Result<PathBuf, CacheError> {
    std::fs::create_dir_all(dir)?;
    let path = cache_path(dir, file.p);
    let tmp = dir.join(format!(".p{}.json.tmp", file.p));
    let bytes = serde_json::to_vec_pretty(file)?;
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn load(dir: &Path, p: u64) -> Result<Option<CacheFile>, CacheError> {
    let path = cache_path(dir, p);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(&path)?;
    Ok(Some(serde_json::from_slice(&bytes)?))
}
