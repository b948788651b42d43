//! Arithmetic in GF(2)[x] on single-word coefficient masks, plus the
//! truncated Laurent expansion map used to turn `n(x) q(x) / p(x)` into a
//! dyadic coordinate.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest degree a modulus may have so that `a * x` of a reduced residue
/// still fits in one `u64`.
pub const MAX_DEGREE: u32 = 62;

/// A polynomial over GF(2). Bit `i` is the coefficient of `x^i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Gf2Poly(u64);

impl Gf2Poly {
    pub const ZERO: Gf2Poly = Gf2Poly(0);
    pub const ONE: Gf2Poly = Gf2Poly(1);
    pub const X: Gf2Poly = Gf2Poly(2);

    pub const fn from_bits(bits: u64) -> Self {
        Gf2Poly(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Degree of the polynomial; `None` stands for the degree of the zero
    /// polynomial (minus infinity).
    pub const fn degree(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros())
        }
    }

    /// Coefficientwise sum (XOR).
    pub const fn add(self, other: Gf2Poly) -> Gf2Poly {
        Gf2Poly(self.0 ^ other.0)
    }

    /// Remainder of `self` modulo `p`.
    #[allow(clippy::should_implement_trait)]
    pub fn rem(self, p: Gf2Poly) -> Result<Gf2Poly> {
        let dp = p.degree().ok_or(Error::ZeroModulus)?;
        Ok(Gf2Poly(rem_raw(self.0, p.0, dp)))
    }

    /// `self * b mod p`.
    pub fn mul_mod(self, b: Gf2Poly, p: Gf2Poly) -> Result<Gf2Poly> {
        let dp = p.degree().ok_or(Error::ZeroModulus)?;
        if dp > MAX_DEGREE {
            return Err(Error::DegreeOutOfRange(format!(
                "modulus degree {dp} exceeds {MAX_DEGREE}"
            )));
        }
        if dp == 0 {
            return Ok(Gf2Poly::ZERO);
        }
        let a = rem_raw(self.0, p.0, dp);
        let b = rem_raw(b.0, p.0, dp);
        Ok(Gf2Poly(mul_mod_raw(a, b, p.0, dp)))
    }

    /// `self^e mod p` by square-and-multiply.
    pub fn pow_mod(self, e: u64, p: Gf2Poly) -> Result<Gf2Poly> {
        let dp = p.degree().ok_or(Error::ZeroModulus)?;
        if dp > MAX_DEGREE {
            return Err(Error::DegreeOutOfRange(format!(
                "modulus degree {dp} exceeds {MAX_DEGREE}"
            )));
        }
        if dp == 0 {
            return Ok(Gf2Poly::ZERO);
        }
        Ok(Gf2Poly(pow_mod_raw(rem_raw(self.0, p.0, dp), e, p.0, dp)))
    }

    pub fn gcd(self, other: Gf2Poly) -> Gf2Poly {
        let (mut a, mut b) = (self.0, other.0);
        while b != 0 {
            let db = 63 - b.leading_zeros();
            a = rem_raw(a, b, db);
            std::mem::swap(&mut a, &mut b);
        }
        Gf2Poly(a)
    }
}

impl Add for Gf2Poly {
    type Output = Gf2Poly;

    // coefficients live in GF(2), so addition is XOR
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf2Poly) -> Gf2Poly {
        Gf2Poly(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf2Poly {
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Gf2Poly) {
        self.0 ^= rhs.0;
    }
}

impl fmt::Display for Gf2Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:x}", self.0)
    }
}

impl fmt::Debug for Gf2Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf2Poly(0x{:x})", self.0)
    }
}

impl FromStr for Gf2Poly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t
            .strip_prefix("0x")
            .or_else(|| t.strip_prefix("0X"))
            .ok_or_else(|| Error::invalid(format!("polynomial '{s}' must be a 0x-prefixed hex mask")))?;
        u64::from_str_radix(digits, 16)
            .map(Gf2Poly)
            .map_err(|e| Error::invalid(format!("polynomial '{s}': {e}")))
    }
}

impl Serialize for Gf2Poly {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Gf2Poly {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[inline]
pub(crate) fn rem_raw(mut a: u64, p: u64, dp: u32) -> u64 {
    while a != 0 {
        let da = 63 - a.leading_zeros();
        if da < dp {
            break;
        }
        a ^= p << (da - dp);
    }
    a
}

/// Product of two residues of degree `< m` reduced by `p` of degree `m`.
#[inline]
pub(crate) fn mul_mod_raw(mut a: u64, b: u64, p: u64, m: u32) -> u64 {
    let top = 1u64 << m;
    let mut acc = 0u64;
    let mut bb = b;
    while bb != 0 {
        if bb & 1 == 1 {
            acc ^= a;
        }
        bb >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= p;
        }
    }
    acc
}

pub(crate) fn pow_mod_raw(base: u64, mut e: u64, p: u64, m: u32) -> u64 {
    let mut result = rem_raw(1, p, m);
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            result = mul_mod_raw(result, b, p, m);
        }
        b = mul_mod_raw(b, b, p, m);
        e >>= 1;
    }
    result
}

/// Distinct prime factors by trial division.
pub(crate) fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's test: `p` of degree `m` is irreducible iff `x^(2^m) = x mod p`
/// and `gcd(x^(2^(m/r)) - x, p) = 1` for every prime `r | m`.
pub fn is_irreducible(p: Gf2Poly) -> Result<bool> {
    let m = match p.degree() {
        None | Some(0) => return Err(Error::ConstantPolynomial(p)),
        Some(m) => m,
    };
    if m > MAX_DEGREE {
        return Err(Error::DegreeOutOfRange(format!("degree {m} exceeds {MAX_DEGREE}")));
    }
    let x = rem_raw(2, p.0, m);
    // frob[i] = x^(2^i) mod p
    let mut frob = Vec::with_capacity(m as usize + 1);
    let mut h = x;
    frob.push(h);
    for _ in 0..m {
        h = mul_mod_raw(h, h, p.0, m);
        frob.push(h);
    }
    if frob[m as usize] != x {
        return Ok(false);
    }
    for r in prime_factors(m as u64) {
        let k = (m as u64 / r) as usize;
        let g = Gf2Poly(frob[k] ^ x).gcd(p);
        if g != Gf2Poly::ONE {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Irreducibility by trial division with every polynomial of degree at most
/// `deg(p) / 2`. Exponential in the degree; kept as an independent check.
pub fn is_irreducible_trial(p: Gf2Poly) -> Result<bool> {
    let m = match p.degree() {
        None | Some(0) => return Err(Error::ConstantPolynomial(p)),
        Some(m) => m,
    };
    for d in 1..=m / 2 {
        for f in (1u64 << d)..(1u64 << (d + 1)) {
            if rem_raw(p.0, f, d) == 0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The irreducible polynomial of degree `m` with the smallest bitmask.
pub fn find_irreducible(m: u32) -> Result<Gf2Poly> {
    if m == 0 || m > MAX_DEGREE {
        return Err(Error::DegreeOutOfRange(format!(
            "irreducible degree must lie in 1..={MAX_DEGREE}, got {m}"
        )));
    }
    let lo = 1u64 << m;
    (lo..lo << 1)
        .map(Gf2Poly)
        .find(|&p| is_irreducible(p).unwrap_or(false))
        .ok_or_else(|| Error::invalid(format!("no irreducible polynomial of degree {m}")))
}

/// A validated irreducible modulus `p` of degree `m`, the field
/// GF(2)[x]/(p) in which all point generation happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    p: Gf2Poly,
    m: u32,
}

impl Modulus {
    pub fn new(p: Gf2Poly) -> Result<Self> {
        if !is_irreducible(p)? {
            return Err(Error::Reducible(p));
        }
        Ok(Modulus {
            p,
            m: p.degree().expect("irreducible polynomials are nonconstant"),
        })
    }

    /// `find_irreducible(m)` wrapped as a modulus.
    pub fn smallest(m: u32) -> Result<Self> {
        Modulus::new(find_irreducible(m)?)
    }

    pub fn poly(&self) -> Gf2Poly {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    /// Order of the multiplicative group, `2^m - 1`.
    pub fn group_order(&self) -> u64 {
        (1u64 << self.m) - 1
    }

    fn check_residue(&self, a: Gf2Poly, what: &str) -> Result<()> {
        match a.degree() {
            Some(d) if d >= self.m => Err(Error::DegreeOutOfRange(format!(
                "{what} = {a} has degree {d}, must be < {}",
                self.m
            ))),
            _ => Ok(()),
        }
    }

    pub fn mul(&self, a: Gf2Poly, b: Gf2Poly) -> Gf2Poly {
        Gf2Poly(mul_mod_raw(
            rem_raw(a.0, self.p.0, self.m),
            rem_raw(b.0, self.p.0, self.m),
            self.p.0,
            self.m,
        ))
    }

    pub fn pow(&self, a: Gf2Poly, e: u64) -> Gf2Poly {
        Gf2Poly(pow_mod_raw(rem_raw(a.0, self.p.0, self.m), e, self.p.0, self.m))
    }

    /// `v_m(n q / p)` as the numerator of a fraction over `2^m`.
    pub fn laurent_truncate(&self, n: Gf2Poly, q: Gf2Poly) -> Result<u64> {
        self.check_residue(n, "n")?;
        self.check_residue(q, "q")?;
        Ok(self.truncate_residue(mul_mod_raw(n.0, q.0, self.p.0, self.m)))
    }

    /// First `m` Laurent digits of `r / p` for a residue `deg(r) < m`, by
    /// synthetic division. Digit `t_l` lands at bit `m - l`. The polynomial
    /// part of `n q / p` never reaches the negative powers, so reducing the
    /// numerator first does not change the digits.
    #[inline]
    pub(crate) fn truncate_residue(&self, r: u64) -> u64 {
        let top = 1u64 << self.m;
        let mut rem = r;
        let mut out = 0u64;
        for _ in 0..self.m {
            rem <<= 1;
            out <<= 1;
            if rem & top != 0 {
                rem ^= self.p.0;
                out |= 1;
            }
        }
        out
    }

    /// A generator of the cyclic group (GF(2)[x]/p)^*, smallest bitmask
    /// first. For `m = 1` the group is trivial and `1` is returned.
    pub fn unit_group_generator(&self) -> Gf2Poly {
        let order = self.group_order();
        if order == 1 {
            return Gf2Poly::ONE;
        }
        let factors = prime_factors(order);
        (2u64..1u64 << self.m)
            .find(|&g| {
                factors
                    .iter()
                    .all(|&r| pow_mod_raw(g, order / r, self.p.0, self.m) != 1)
            })
            .map(Gf2Poly)
            .expect("the multiplicative group of a finite field is cyclic")
    }
}

/// `v_m(n q / p)`; validates that `p` is irreducible of degree `m` and that
/// `n` and `q` are reduced residues.
pub fn laurent_truncate_vm(n: Gf2Poly, q: Gf2Poly, p: Gf2Poly, m: u32) -> Result<u64> {
    let modulus = Modulus::new(p)?;
    if modulus.degree() != m {
        return Err(Error::DegreeOutOfRange(format!(
            "modulus {p} has degree {}, expected {m}",
            modulus.degree()
        )));
    }
    modulus.laurent_truncate(n, q)
}

pub fn unit_group_generator(p: Gf2Poly) -> Result<Gf2Poly> {
    Ok(Modulus::new(p)?.unit_group_generator())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(bits: u64) -> Gf2Poly {
        Gf2Poly::from_bits(bits)
    }

    #[test]
    fn addition_cancels_in_characteristic_two() {
        assert_eq!(poly(0b111) + poly(0b11), poly(0b100));
        assert_eq!(poly(0b1011) + Gf2Poly::ZERO, poly(0b1011));
        assert_eq!(poly(0b1011).add(poly(0b1011)), Gf2Poly::ZERO);
    }

    #[test]
    fn degree_of_zero_is_sentinel() {
        assert_eq!(Gf2Poly::ZERO.degree(), None);
        assert_eq!(Gf2Poly::ONE.degree(), Some(0));
        assert_eq!(poly(0x13).degree(), Some(4));
    }

    #[test]
    fn mul_mod_examples() {
        let p = poly(0b111);
        assert_eq!(Gf2Poly::X.mul_mod(Gf2Poly::X, p).unwrap(), poly(0b11));
        assert_eq!(
            poly(0b1101).mul_mod(Gf2Poly::ONE, p).unwrap(),
            poly(0b1101).rem(p).unwrap()
        );
        assert_eq!(poly(0b1101).mul_mod(Gf2Poly::ZERO, p).unwrap(), Gf2Poly::ZERO);
        assert!(matches!(
            Gf2Poly::X.mul_mod(Gf2Poly::X, Gf2Poly::ZERO),
            Err(Error::ZeroModulus)
        ));
    }

    #[test]
    fn irreducibility_examples() {
        assert!(is_irreducible(poly(0b111)).unwrap());
        assert!(!is_irreducible(poly(0b101)).unwrap());
        assert!(is_irreducible(poly(0b10011)).unwrap());
        assert!(matches!(
            is_irreducible(Gf2Poly::ONE),
            Err(Error::ConstantPolynomial(_))
        ));
        assert!(matches!(
            is_irreducible(Gf2Poly::ZERO),
            Err(Error::ConstantPolynomial(_))
        ));
    }

    #[test]
    fn rabin_and_trial_division_agree() {
        for bits in 2u64..1 << 13 {
            let p = poly(bits);
            assert_eq!(is_irreducible(p).unwrap(), is_irreducible_trial(p).unwrap(), "{p}");
        }
    }

    fn mobius(n: u32) -> i64 {
        let f = prime_factors(n as u64);
        let squarefree = f.iter().all(|&r| !(n as u64).is_multiple_of(r * r));
        if !squarefree {
            0
        } else if f.len().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    #[test]
    fn irreducible_counts_match_necklace_formula() {
        for m in 1..=10u32 {
            let count = ((1u64 << m)..(1u64 << (m + 1)))
                .filter(|&b| is_irreducible(poly(b)).unwrap())
                .count() as i64;
            let necklace: i64 = (1..=m)
                .filter(|d| m % d == 0)
                .map(|d| mobius(d) * (1i64 << (m / d)))
                .sum::<i64>()
                / m as i64;
            assert_eq!(count, necklace, "m = {m}");
        }
    }

    #[test]
    fn smallest_irreducibles() {
        assert_eq!(find_irreducible(1).unwrap(), poly(0b10));
        assert_eq!(find_irreducible(2).unwrap(), poly(0b111));
        assert_eq!(find_irreducible(4).unwrap(), poly(0b10011));
        assert!(find_irreducible(0).is_err());
        assert!(find_irreducible(63).is_err());
        // spot check at the top of the range
        let p = find_irreducible(MAX_DEGREE).unwrap();
        assert_eq!(p.degree(), Some(MAX_DEGREE));
    }

    #[test]
    fn laurent_truncation_examples() {
        let p = poly(0b111);
        assert_eq!(laurent_truncate_vm(Gf2Poly::ZERO, Gf2Poly::ONE, p, 2).unwrap(), 0);
        assert_eq!(laurent_truncate_vm(Gf2Poly::X, Gf2Poly::ONE, p, 2).unwrap(), 3);
        assert_eq!(laurent_truncate_vm(Gf2Poly::ONE, Gf2Poly::ONE, p, 2).unwrap(), 1);
    }

    #[test]
    fn laurent_truncation_rejects_bad_input() {
        assert!(matches!(
            laurent_truncate_vm(Gf2Poly::ONE, Gf2Poly::ONE, poly(0b101), 2),
            Err(Error::Reducible(_))
        ));
        assert!(matches!(
            laurent_truncate_vm(poly(0b100), Gf2Poly::ONE, poly(0b111), 2),
            Err(Error::DegreeOutOfRange(_))
        ));
        assert!(laurent_truncate_vm(Gf2Poly::ONE, Gf2Poly::ONE, poly(0b111), 3).is_err());
    }

    #[test]
    fn laurent_truncation_is_a_bijection() {
        for m in 1..=12u32 {
            let modulus = Modulus::smallest(m).unwrap();
            for q in [1u64, (1 << m) - 1, 0b101 & ((1 << m) - 1) | 1] {
                let mut seen = vec![false; 1 << m];
                for n in 0..1u64 << m {
                    let v = modulus.laurent_truncate(poly(n), poly(q)).unwrap();
                    assert!(!seen[v as usize], "m={m} q={q:#x} repeats {v}");
                    seen[v as usize] = true;
                }
            }
        }
    }

    #[test]
    fn generators() {
        assert_eq!(unit_group_generator(poly(0b111)).unwrap(), Gf2Poly::X);
        let p = poly(0b10011);
        let g = unit_group_generator(p).unwrap();
        assert_eq!(g, Gf2Poly::X);
        assert_ne!(g.pow_mod(3, p).unwrap(), Gf2Poly::ONE);
        assert_ne!(g.pow_mod(5, p).unwrap(), Gf2Poly::ONE);
        assert_eq!(g.pow_mod(15, p).unwrap(), Gf2Poly::ONE);
        assert_eq!(unit_group_generator(poly(0b10)).unwrap(), Gf2Poly::ONE);
    }

    #[test]
    fn generator_powers_cover_the_group() {
        for m in 2..=10u32 {
            let modulus = Modulus::smallest(m).unwrap();
            let g = modulus.unit_group_generator();
            let mut seen = vec![false; 1 << m];
            let mut h = Gf2Poly::ONE;
            for _ in 0..modulus.group_order() {
                assert!(!seen[h.bits() as usize]);
                seen[h.bits() as usize] = true;
                h = modulus.mul(h, g);
            }
            assert_eq!(h, Gf2Poly::ONE);
        }
    }

    #[test]
    fn every_nonzero_residue_is_invertible() {
        for m in 1..=8u32 {
            let modulus = Modulus::smallest(m).unwrap();
            for a in 1..1u64 << m {
                let has_inverse = (1..1u64 << m).any(|b| modulus.mul(poly(a), poly(b)) == Gf2Poly::ONE);
                assert!(has_inverse, "m={m} a={a:#x}");
            }
        }
    }

    #[test]
    fn hex_round_trip() {
        assert_eq!(poly(0x13).to_string(), "0x13");
        assert_eq!("0x13".parse::<Gf2Poly>().unwrap(), poly(0x13));
        assert!("13".parse::<Gf2Poly>().is_err());
        let json = serde_json::to_string(&poly(0x25)).unwrap();
        assert_eq!(json, "\"0x25\"");
        assert_eq!(serde_json::from_str::<Gf2Poly>(&json).unwrap(), poly(0x25));
    }

    proptest! {
        #[test]
        fn mul_mod_is_associative(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), m in 1u32..=62) {
            let mask = (1u64 << m) - 1;
            let p = find_irreducible(m.min(20)).unwrap();
            let (a, b, c) = (poly(a & mask), poly(b & mask), poly(c & mask));
            let left = a.mul_mod(b, p).unwrap().mul_mod(c, p).unwrap();
            let right = a.mul_mod(b.mul_mod(c, p).unwrap(), p).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn mul_mod_associative_with_wide_modulus(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            // x^62 + x + 1 need not be irreducible; associativity holds for any modulus
            let p = poly((1u64 << 62) | 0b11);
            let mask = (1u64 << 62) - 1;
            let (a, b, c) = (poly(a & mask), poly(b & mask), poly(c & mask));
            prop_assert_eq!(
                a.mul_mod(b, p).unwrap().mul_mod(c, p).unwrap(),
                a.mul_mod(b.mul_mod(c, p).unwrap(), p).unwrap()
            );
        }
    }
}
