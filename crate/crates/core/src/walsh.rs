//! Dyadic Walsh functions and the Walsh coefficients of the squared
//! weighted L2 discrepancy.
//!
//! Everything here works on exact dyadic rationals: a Walsh sign is the
//! parity of the index digits ANDed with the bit-reversed coordinate digits.

use crate::error::{Error, Result};
use crate::lattice::PointSet;
use crate::weights::{Subset, WeightScheme};

/// `numerator / 2^bits`, a point of `[0,1)` with a finite binary expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dyadic {
    numerator: u64,
    bits: u32,
}

impl Dyadic {
    pub fn new(numerator: u64, bits: u32) -> Result<Dyadic> {
        if bits > 64 || (bits < 64 && numerator >> bits != 0) {
            return Err(Error::invalid(format!("{numerator}/2^{bits} is outside [0,1)")));
        }
        Ok(Dyadic { numerator, bits })
    }

    /// The first 64 binary digits of a double in `[0,1)`; Walsh functions
    /// with 64-bit indices never look further.
    pub fn from_f64(x: f64) -> Result<Dyadic> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::invalid(format!("{x} is outside [0,1)")));
        }
        Ok(Dyadic {
            numerator: (x * 2f64.powi(64)) as u64,
            bits: 64,
        })
    }

    /// Digit `x_i` sits at bit `i - 1` of the result.
    fn reversed_digits(self) -> u64 {
        if self.bits == 0 {
            0
        } else {
            self.numerator.reverse_bits() >> (64 - self.bits)
        }
    }
}

/// `wal_k(x) = (-1)^(x_1 k_0 + x_2 k_1 + ...)`.
pub fn wal(k: u64, x: Dyadic) -> i32 {
    1 - 2 * ((k & x.reversed_digits()).count_ones() & 1) as i32
}

/// `wal_k` of a point, the product over coordinates.
pub fn wal_vec(k: &[u64], x: &[Dyadic]) -> i32 {
    k.iter().zip(x).map(|(&kj, &xj)| wal(kj, xj)).product()
}

/// Position of the leading binary digit, 1-based (`a_1 = floor(log2 k) + 1`).
fn leading_position(k: u64) -> u32 {
    64 - k.leading_zeros()
}

/// `psi(0) = 1`, `psi(k) = 4^(-a_1)` otherwise.
pub fn psi(k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        (-2.0 * leading_position(k) as f64).exp2()
    }
}

pub fn psi_vec(k: &[u64]) -> f64 {
    k.iter().map(|&kj| psi(kj)).product()
}

/// The one-dimensional Walsh coefficient `r(k, l)` of the discrepancy
/// kernel. Symmetric in its arguments.
pub fn r_coeff(k: u64, l: u64) -> f64 {
    let (k, l) = if k >= l { (k, l) } else { (l, k) };
    if k == 0 {
        return 1.0 / 3.0;
    }
    let a1 = leading_position(k);
    if k == l {
        return 1.0 / (3.0 * (2.0 * a1 as f64).exp2());
    }
    let k_rest = k ^ (1 << (a1 - 1));
    let v = k.count_ones();
    if l == 0 {
        return match v {
            1 => (-(a1 as f64 + 2.0)).exp2(),
            2 => -(-((a1 + leading_position(k_rest)) as f64 + 2.0)).exp2(),
            _ => 0.0,
        };
    }
    let b1 = leading_position(l);
    let l_rest = l ^ (1 << (b1 - 1));
    // leading digits differ, lower digits agree
    if k_rest == l_rest && a1 != b1 {
        return (-((a1 + b1) as f64 + 2.0)).exp2();
    }
    // k equals l plus two extra leading digits
    if v == l.count_ones() + 2 && v > 2 {
        let a2 = leading_position(k_rest);
        if k_rest ^ (1 << (a2 - 1)) == l {
            return -(-((a1 + a2) as f64 + 2.0)).exp2();
        }
    }
    0.0
}

/// Exact sum of `|r(k, l)|` over pairs whose larger leading position is `a`.
fn abs_r_mass_at_level(a: u32) -> f64 {
    if a == 0 {
        return 1.0 / 3.0;
    }
    let af = a as f64;
    let h = (-(af + 1.0)).exp2();
    let tail = (1.0 - af).exp2();
    let mut inner = 1.0 / 3.0 + 1.0 + (1.0 - tail);
    if a >= 3 {
        inner += (af - 3.0) / 2.0 + tail;
    }
    h * inner + (af - 1.0) * (-(af + 2.0)).exp2()
}

/// `sum_{k,l >= 0} |r(k,l)|`.
pub fn abs_r_total() -> f64 {
    (0..=1100).map(abs_r_mass_at_level).sum()
}

/// `sum_{k,l < k_max} |r(k,l)|` by enumeration.
pub fn abs_r_truncated(k_max: u64) -> f64 {
    let mut total = 0.0;
    for k in 0..k_max {
        for l in 0..k_max {
            total += r_coeff(k, l).abs();
        }
    }
    total
}

/// Upper bound on `|l2_series_oracle(.., k_max) - L2^2|` that holds for any
/// point set: every dropped term is bounded by `prod |r(k_j, l_j)|`.
pub fn l2_series_tail_bound(w: &WeightScheme, k_max: u64) -> Result<f64> {
    let full = abs_r_total();
    let kept = abs_r_truncated(k_max);
    let s = w.dim();
    let mut bound = 0.0;
    for mask in 1u64..1 << s {
        let u = Subset(mask);
        let g = w.gamma(u)?;
        if g > 0.0 {
            let d = u.len() as i32;
            bound += g * (full.powi(d) - kept.powi(d));
        }
    }
    Ok(bound)
}

pub const ORACLE_MAX_DIM: usize = 3;
pub const ORACLE_MAX_POINTS: usize = 64;
pub const ORACLE_MAX_INDEX: u64 = 256;

/// The squared weighted L2 discrepancy from its double Walsh series,
/// truncated to indices `< k_max` in every coordinate. Validation oracle for
/// the closed-form evaluator; cost grows quickly, so inputs are capped at
/// `s <= 3`, `N <= 64`, `k_max <= 256`.
pub fn l2_series_oracle(ps: &PointSet, w: &WeightScheme, k_max: u64) -> Result<f64> {
    let s = ps.dim();
    let n = ps.n_points();
    if s > ORACLE_MAX_DIM || n > ORACLE_MAX_POINTS || k_max > ORACLE_MAX_INDEX || k_max == 0 {
        return Err(Error::invalid(format!(
            "series oracle limited to s <= {ORACLE_MAX_DIM}, N <= {ORACLE_MAX_POINTS}, 1 <= k_max <= {ORACLE_MAX_INDEX}"
        )));
    }
    if w.dim() != s {
        return Err(Error::invalid("weights and point set disagree on the dimension"));
    }
    let mut pairs = Vec::new();
    for k in 0..k_max {
        for l in 0..k_max {
            let r = r_coeff(k, l);
            if r != 0.0 {
                pairs.push((k as usize, l as usize, r));
            }
        }
    }
    let k_max = k_max as usize;
    // signs[(i * s + j) * k_max + k] = wal_k(x_{i,j})
    let mut signs = vec![0f64; n * s * k_max];
    for i in 0..n {
        for j in 0..s {
            let x = Dyadic::new(ps.numerator(i, j), ps.precision_bits())?;
            for k in 0..k_max {
                signs[(i * s + j) * k_max + k] = wal(k as u64, x) as f64;
            }
        }
    }
    let subsets: Vec<(Subset, f64)> = (1u64..1 << s)
        .map(|mask| w.gamma(Subset(mask)).map(|g| (Subset(mask), g)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, g)| *g != 0.0)
        .collect();
    let c: f64 = 1.0 / 3.0;
    let mut total = 0.0;
    for i in 0..n {
        for i2 in 0..n {
            // per coordinate: full double sum, and the two sums with one index pinned to 0
            let mut both = [0.0; ORACLE_MAX_DIM];
            let mut left_zero = [0.0; ORACLE_MAX_DIM];
            let mut right_zero = [0.0; ORACLE_MAX_DIM];
            for j in 0..s {
                let wa = &signs[(i * s + j) * k_max..(i * s + j + 1) * k_max];
                let wb = &signs[(i2 * s + j) * k_max..(i2 * s + j + 1) * k_max];
                for &(k, l, r) in &pairs {
                    both[j] += r * wa[k] * wb[l];
                    if k == 0 {
                        left_zero[j] += r * wb[l];
                    }
                    if l == 0 {
                        right_zero[j] += r * wa[k];
                    }
                }
            }
            for &(u, g) in &subsets {
                let prod = |v: &[f64; ORACLE_MAX_DIM]| u.coords().map(|j| v[j - 1]).product::<f64>();
                let zero = c.powi(u.len() as i32);
                total += g * (prod(&both) - prod(&left_zero) - prod(&right_zero) + zero);
            }
        }
    }
    Ok(total / (n * n) as f64)
}
