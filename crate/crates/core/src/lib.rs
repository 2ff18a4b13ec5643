//! Exact-arithmetic computation of mod-p Hecke operator matrices on the
//! quaternion side: ideal class sets of the maximal order of the definite
//! quaternion algebra (−ε, −p | Q), truncated local splittings
//! O ⊗ Z_ℓ ≅ M₂(Z_ℓ), Brandt-type Hecke matrices T_{ℓ0} at any level N
//! coprime to p and any weight k, and the resulting systems of Hecke
//! eigenvalues over F_{p²}.
//!
//! Everything is exact: arbitrary-precision integers and rationals, residue
//! arithmetic modulo prime powers, and finite-field linear algebra. There is
//! no floating point anywhere.

pub mod arith;
pub mod cache;
pub mod fpk;
pub mod hecke;
pub mod lattice;
pub mod quat;
pub mod split;

pub use quat::{build_algebra, maximal_order_basis, Algebra, AlgebraParams, OrderBasis, Quat};
