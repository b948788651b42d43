//! Polynomial lattice rules over GF(2) built to minimize the mean square
//! weighted L2 discrepancy of their Owen-scrambled point sets.

pub mod cbc;
pub mod discrepancy;
pub mod error;
pub mod gf2poly;
pub mod lattice;
pub mod scramble;
pub mod sobol;
pub mod walsh;
pub mod weights;

pub use error::{Error, Result};
pub use gf2poly::{find_irreducible, is_irreducible, Gf2Poly, Modulus};
pub use lattice::{PointSet, PolyLatticeRule, RuleFile};
pub use weights::{Preset, Subset, WeightScheme};
