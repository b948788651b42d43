//! Weighted L2 discrepancy of a point set, and the mean square weighted L2
//! discrepancy of its Owen scrambles.

use rayon::prelude::*;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::lattice::PointSet;
use crate::scramble::{mix, scramble, OwenTree, ScrambleRandomness};
use crate::weights::{WeightScheme, MAX_GENERAL_DIM};

/// `2^{floor(log2 x)}` for `x = a / 2^bits`, as the exponent `-a'` with
/// `x in [2^{-a'}, 2^{-a'+1})`; `None` for `x = 0`.
fn level(a: u64, bits: u32) -> Option<u32> {
    if a == 0 {
        None
    } else {
        Some(bits - (64 - a.leading_zeros()) + 1)
    }
}

/// `(1 - 2^{floor(log2 x)}) / 2` at `x = a / 2^bits`, with `phi(0) = 1/2`.
pub fn phi(a: u64, bits: u32) -> f64 {
    match level(a, bits) {
        None => 0.5,
        Some(l) => (1.0 - (-(l as f64)).exp2()) / 2.0,
    }
}

/// `(1 - 3 * 2^{floor(log2 x)}) / 2` at `x = a / 2^bits`, with `phi_tilde(0) = 1/2`.
pub fn phi_tilde(a: u64, bits: u32) -> f64 {
    match level(a, bits) {
        None => 0.5,
        Some(l) => (1.0 - 3.0 * (-(l as f64)).exp2()) / 2.0,
    }
}

const ROWS_PER_TASK: usize = 16;

/// Sums `f(n)` for `n < count` in fixed blocks, so the rounding does not
/// depend on the thread count.
fn block_sum<F>(count: usize, f: F) -> TwoFloat
where
    F: Fn(usize) -> TwoFloat + Sync,
{
    let partials: Vec<TwoFloat> = (0..count.div_ceil(ROWS_PER_TASK))
        .into_par_iter()
        .map(|b| {
            let hi = ((b + 1) * ROWS_PER_TASK).min(count);
            (b * ROWS_PER_TASK..hi).fold(TwoFloat::from(0.0), |acc, n| acc + f(n))
        })
        .collect();
    partials.into_iter().fold(TwoFloat::from(0.0), |a, b| a + b)
}

fn check_points(ps: &PointSet, w: &WeightScheme) -> Result<()> {
    if ps.n_points() == 0 {
        return Err(Error::invalid("empty point set"));
    }
    if ps.dim() != w.dim() {
        return Err(Error::invalid(format!(
            "point set has {} coordinates, weights have {}",
            ps.dim(),
            w.dim()
        )));
    }
    Ok(())
}

/// Squared weighted L2 discrepancy by the Warnock-type formula
/// `sum_u gamma_u [3^{-|u|} - 2/N sum_n prod (1 - x^2)/2 + 1/N^2 sum_{n,n'} prod (1 - max)]`.
pub fn warnock_l2sq(ps: &PointSet, w: &WeightScheme) -> Result<f64> {
    check_points(ps, w)?;
    let x = ps.to_f64();
    let n = ps.n_points();
    let s = ps.dim();
    let nf = n as f64;
    let zero = TwoFloat::from(0.0);
    let one = TwoFloat::from(1.0);
    let value = match w {
        WeightScheme::Product(g) => {
            // the "-1" of the three empty-set terms cancel
            let lead = g.iter().fold(one, |acc, &gj| acc * (TwoFloat::from(gj) / 3.0 + 1.0));
            let single = block_sum(n, |i| {
                let row = &x[i * s..(i + 1) * s];
                row.iter().zip(g).fold(one, |acc, (&xj, &gj)| {
                    acc * ((one - TwoFloat::new_mul(xj, xj)) * gj / 2.0 + 1.0)
                })
            });
            let pairs = block_sum(n, |i| {
                let row = &x[i * s..(i + 1) * s];
                (0..n).fold(zero, |acc, i2| {
                    let row2 = &x[i2 * s..(i2 + 1) * s];
                    let p = row.iter().zip(row2).zip(g).fold(one, |p, ((&a, &b), &gj)| {
                        p * (TwoFloat::new_mul(gj, 1.0 - a.max(b)) + 1.0)
                    });
                    acc + p
                })
            });
            lead - single * 2.0 / nf + pairs / (nf * nf)
        }
        WeightScheme::General { .. } => {
            if s > MAX_GENERAL_DIM {
                return Err(Error::invalid(format!(
                    "general weights limited to s <= {MAX_GENERAL_DIM}"
                )));
            }
            let size = 1usize << s;
            let mut gammas = vec![0.0; size];
            for (mask, g) in gammas.iter_mut().enumerate().skip(1) {
                *g = w.gamma(crate::weights::Subset(mask as u64))?;
            }
            let lead = (1..size).fold(zero, |acc, mask| {
                acc + TwoFloat::from(gammas[mask]) / 3f64.powi(mask.count_ones() as i32)
            });
            let weighted_products = |factors: &[TwoFloat], table: &mut Vec<TwoFloat>| {
                table[0] = one;
                let mut acc = zero;
                for mask in 1..size {
                    let v = table[mask & (mask - 1)] * factors[mask.trailing_zeros() as usize];
                    table[mask] = v;
                    acc += v * gammas[mask];
                }
                acc
            };
            let single = block_sum(n, |i| {
                let row = &x[i * s..(i + 1) * s];
                let factors: Vec<TwoFloat> = row.iter().map(|&xj| (one - TwoFloat::new_mul(xj, xj)) / 2.0).collect();
                let mut table = vec![zero; size];
                weighted_products(&factors, &mut table)
            });
            let pairs = block_sum(n, |i| {
                let row = &x[i * s..(i + 1) * s];
                let mut table = vec![zero; size];
                let mut factors = vec![zero; s];
                (0..n).fold(zero, |acc, i2| {
                    let row2 = &x[i2 * s..(i2 + 1) * s];
                    for ((f, a), b) in factors.iter_mut().zip(row).zip(row2) {
                        *f = TwoFloat::from(1.0 - a.max(*b));
                    }
                    acc + weighted_products(&factors, &mut table)
                })
            });
            lead - single * 2.0 / nf + pairs / (nf * nf)
        }
    };
    Ok(f64::from(value).max(0.0))
}

/// Per-point running value of `prod_j (1 + gamma_j phi(x_j)) - prod_j (1 + gamma_j/3)`,
/// updated one coordinate at a time without forming the difference of the
/// two products.
#[derive(Clone, Debug)]
pub(crate) struct ProductExcess {
    excess: Vec<TwoFloat>,
    lead: TwoFloat,
}

impl ProductExcess {
    pub(crate) fn new(n_points: usize) -> ProductExcess {
        ProductExcess {
            excess: vec![TwoFloat::from(0.0); n_points],
            lead: TwoFloat::from(1.0),
        }
    }

    /// Appends a coordinate with weight `gamma` and numerators `column` at precision `bits`.
    pub(crate) fn push(&mut self, gamma: f64, column: &[u64], bits: u32) {
        let gamma = TwoFloat::from(gamma);
        let lead = self.lead;
        self.excess.par_iter_mut().zip(column).for_each(|(e, &a)| {
            let delta = gamma * phi_tilde(a, bits) / 3.0;
            *e = (gamma * phi(a, bits) + 1.0) * *e + delta * lead;
        });
        self.lead = lead * (gamma / 3.0 + 1.0);
    }

    pub(crate) fn mean(&self) -> f64 {
        let total = self.excess.iter().fold(TwoFloat::from(0.0), |acc, e| acc + *e);
        f64::from(total / self.excess.len() as f64)
    }
}

/// The mean square weighted L2 discrepancy `B` of the Owen-scrambled
/// version of `ps`, read off the digits of each point.
///
/// The expression is the scrambling expectation for digital nets over GF(2)
/// (polynomial lattice point sets, Sobol' points) with `2^m` points at
/// precision `m`; for other point sets it is just a number.
pub fn mean_square_criterion(ps: &PointSet, w: &WeightScheme) -> Result<f64> {
    check_points(ps, w)?;
    let bits = ps.precision_bits();
    let n = ps.n_points();
    match w {
        WeightScheme::Product(g) => {
            let mut acc = ProductExcess::new(n);
            for (j, &gj) in g.iter().enumerate() {
                acc.push(gj, &ps.column(j), bits);
            }
            Ok(acc.mean())
        }
        WeightScheme::General { .. } => {
            let gt = w.gamma_tilde_table()?;
            let size = gt.len();
            let total = block_sum(n, |i| {
                let row = ps.row(i);
                let mut table = vec![0.0; size];
                table[0] = 1.0;
                let mut acc = TwoFloat::from(0.0);
                for mask in 1..size {
                    let j = mask.trailing_zeros() as usize;
                    let v = table[mask & (mask - 1)] * phi_tilde(row[j], bits);
                    table[mask] = v;
                    acc += TwoFloat::from(gt[mask]) * v;
                }
                acc
            });
            Ok(f64::from(total / n as f64))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: usize,
}

/// Seed of replicate `r` derived from a run seed.
pub fn replicate_seed(seed: u64, r: u64) -> u64 {
    mix(mix(seed) ^ r)
}

/// Sample mean and standard error of `warnock_l2sq` over independent Owen
/// scrambles of `ps` at `depth` digits.
pub fn mc_mean_square_estimate(
    ps: &PointSet,
    w: &WeightScheme,
    replicates: usize,
    seed: u64,
    depth: u32,
) -> Result<McEstimate> {
    OwenTree::new(seed, depth)?;
    mc_mean_square_estimate_with(ps, w, replicates, |r| {
        OwenTree::new(replicate_seed(seed, r), depth).expect("depth checked")
    })
}

/// As [`mc_mean_square_estimate`], with the randomness of replicate `r` supplied by `make`.
pub fn mc_mean_square_estimate_with<R, F>(
    ps: &PointSet,
    w: &WeightScheme,
    replicates: usize,
    make: F,
) -> Result<McEstimate>
where
    R: ScrambleRandomness,
    F: Fn(u64) -> R + Sync,
{
    if replicates < 2 {
        return Err(Error::invalid(
            "at least two replicates are needed for a standard error",
        ));
    }
    check_points(ps, w)?;
    let values = (0..replicates as u64)
        .into_par_iter()
        .map(|r| warnock_l2sq(&scramble(ps, &make(r))?, w))
        .collect::<Result<Vec<f64>>>()?;
    let rf = replicates as f64;
    let mean = values.iter().sum::<f64>() / rf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rf - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / rf).sqrt(),
        replicates,
    })
}
