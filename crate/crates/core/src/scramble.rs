//! Owen's nested scrambling in base 2.
//!
//! Digit `k` of a coordinate is flipped or kept by a permutation that
//! depends on the coordinate index and the `k - 1` digits before it. The
//! permutation trees are never stored; each swap bit is hashed on demand.

use crate::error::{Error, Result};
use crate::lattice::{PointSet, MAX_PRECISION_BITS};

pub const DEFAULT_DEPTH: u32 = 53;

/// Source of the swap bits of a family of binary permutation trees.
pub trait ScrambleRandomness: Sync {
    /// Number of output digits.
    fn depth(&self) -> u32;

    /// Whether the permutation for digit `k` (1-based) of coordinate `j`,
    /// below the original digit prefix `prefix`, swaps 0 and 1.
    fn swap(&self, j: usize, k: u32, prefix: u64) -> bool;
}

/// Independent uniform swap bits derived from a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OwenTree {
    seed: u64,
    depth: u32,
}

impl OwenTree {
    pub fn new(seed: u64, depth: u32) -> Result<OwenTree> {
        check_depth(depth)?;
        Ok(OwenTree { seed, depth })
    }
}

impl ScrambleRandomness for OwenTree {
    fn depth(&self) -> u32 {
        self.depth
    }

    fn swap(&self, j: usize, k: u32, prefix: u64) -> bool {
        let h = mix(self.seed ^ mix(j as u64 ^ mix(((k as u64) << 32) ^ mix(prefix))));
        h >> 63 == 1
    }
}

/// Every permutation is the identity: points are only zero-padded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdentityTree {
    depth: u32,
}

impl IdentityTree {
    pub fn new(depth: u32) -> Result<IdentityTree> {
        check_depth(depth)?;
        Ok(IdentityTree { depth })
    }
}

impl ScrambleRandomness for IdentityTree {
    fn depth(&self) -> u32 {
        self.depth
    }

    fn swap(&self, _j: usize, _k: u32, _prefix: u64) -> bool {
        false
    }
}

fn check_depth(depth: u32) -> Result<()> {
    if depth == 0 || depth > MAX_PRECISION_BITS {
        return Err(Error::invalid(format!(
            "scramble depth {depth} outside 1..={MAX_PRECISION_BITS}"
        )));
    }
    Ok(())
}

/// splitmix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scrambles one `bits`-digit numerator of coordinate `j` to `rnd.depth()` digits.
/// Input digits past `bits` are zero, so the trailing output digits are the
/// swap bits along the zero branch, independent and uniform.
pub(crate) fn scramble_coordinate<R: ScrambleRandomness + ?Sized>(rnd: &R, j: usize, a: u64, bits: u32) -> u64 {
    let mut out = 0u64;
    let mut prefix = 0u64;
    for k in 1..=rnd.depth() {
        let x = if k <= bits { (a >> (bits - k)) & 1 } else { 0 };
        let y = x ^ rnd.swap(j, k, prefix) as u64;
        out = out << 1 | y;
        prefix = prefix << 1 | x;
    }
    out
}

/// The Owen scramble of `ps` at precision `rnd.depth()`.
pub fn scramble<R: ScrambleRandomness + ?Sized>(ps: &PointSet, rnd: &R) -> Result<PointSet> {
    let bits = ps.precision_bits();
    if rnd.depth() < bits {
        return Err(Error::invalid(format!(
            "scramble depth {} is below the point precision {bits}",
            rnd.depth()
        )));
    }
    let s = ps.dim();
    let coords = ps
        .numerators()
        .iter()
        .enumerate()
        .map(|(i, &a)| scramble_coordinate(rnd, i % s, a, bits))
        .collect();
    PointSet::new(s, rnd.depth(), coords)
}
