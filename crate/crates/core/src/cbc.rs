//! Component-by-component search for generating vectors, with the
//! theoretical error bounds the search is guaranteed to meet.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use twofloat::TwoFloat;

use crate::discrepancy::{mean_square_criterion, phi, phi_tilde, ProductExcess};
use crate::error::{Error, Result};
use crate::gf2poly::{find_irreducible, Gf2Poly, Modulus};
use crate::lattice::{coordinate_column, PolyLatticeRule};
use crate::weights::{Subset, WeightScheme, MAX_GENERAL_DIM};

/// Largest `m` the constructors accept; the per-point state has `2^m` entries.
pub const MAX_CBC_M: u32 = 30;
/// Largest dimension for general (subset-indexed) weights.
pub const MAX_GENERAL_CBC_DIM: usize = 12;
/// `Auto` sweeps naively up to this `m`.
pub const AUTO_NAIVE_MAX_M: u32 = 10;
/// Largest `(2^m - 1)^s` the exhaustive search will enumerate.
pub const EXHAUSTIVE_BUDGET: f64 = 1e7;
/// Scores within this relative distance of the minimum count as ties.
pub const TIE_BAND: f64 = 1e-14;
/// Candidates whose FFT score lies within this fraction of the score scale
/// of the FFT minimum are rescored exactly.
const FAST_RESCORE_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Naive,
    Fast,
    Auto,
}

impl SweepMode {
    fn use_fast(self, m: u32) -> bool {
        match self {
            SweepMode::Naive => false,
            SweepMode::Fast => true,
            SweepMode::Auto => m > AUTO_NAIVE_MAX_M,
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Naive => "naive",
            SweepMode::Fast => "fast",
            SweepMode::Auto => "auto",
        })
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepMode> {
        match s {
            "naive" => Ok(SweepMode::Naive),
            "fast" => Ok(SweepMode::Fast),
            "auto" => Ok(SweepMode::Auto),
            _ => Err(Error::invalid(format!("unknown sweep mode '{s}' (naive, fast, auto)"))),
        }
    }
}

/// A constructed rule and the criterion value after each component was fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct CbcOutcome {
    pub rule: PolyLatticeRule,
    pub criteria: Vec<f64>,
}

fn resolve_modulus(m: u32, p: Option<Gf2Poly>) -> Result<Modulus> {
    if m == 0 || m > MAX_CBC_M {
        return Err(Error::DegreeOutOfRange(format!("m = {m} outside 1..={MAX_CBC_M}")));
    }
    let modulus = Modulus::new(match p {
        Some(p) => p,
        None => find_irreducible(m)?,
    })?;
    if modulus.degree() != m {
        return Err(Error::DegreeOutOfRange(format!(
            "modulus {} has degree {}, expected {m}",
            modulus.poly(),
            modulus.degree()
        )));
    }
    Ok(modulus)
}

/// Smallest candidate whose score is within the tie band of the minimum.
/// `scores[i]` belongs to the candidate with bitmask `i + 1`.
fn pick(scores: impl Iterator<Item = (u64, f64)> + Clone) -> u64 {
    let best = scores.clone().map(|(_, v)| v).fold(f64::INFINITY, f64::min);
    let limit = best + TIE_BAND * best.abs();
    scores
        .filter(|&(_, v)| v <= limit)
        .map(|(q, _)| q)
        .min()
        .expect("candidate set is never empty")
}

/// `phi` of an `m`-digit numerator, through a table indexed by bit length.
fn phi_table(m: u32, f: fn(u64, u32) -> f64) -> Vec<f64> {
    (0..=m)
        .map(|len| f(if len == 0 { 0 } else { 1 << (len - 1) }, m))
        .collect()
}

fn bit_length(a: u64) -> usize {
    (64 - a.leading_zeros()) as usize
}

struct FastTables {
    /// `g^i` for `i < 2^m - 1`, `g` a generator of the unit group.
    powers: Vec<u64>,
    /// Transform of `phi(v_m(g^j / p))`.
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FastTables {
    fn new(modulus: &Modulus) -> FastTables {
        let m = modulus.degree();
        let order = (1usize << m) - 1;
        let g = modulus.unit_group_generator();
        let mut powers = Vec::with_capacity(order);
        let mut x = Gf2Poly::ONE;
        for _ in 0..order {
            powers.push(x.bits());
            x = modulus.mul(x, g);
        }
        // v_m(r / p) for a residue of degree d lies in [2^{d-m}, 2^{d-m+1})
        let by_len = phi_table(m, phi);
        let mut spectrum: Vec<Complex<f64>> = powers
            .iter()
            .map(|&r| Complex::new(by_len[bit_length(r)], 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(order);
        let inverse = planner.plan_fft_inverse(order);
        forward.process(&mut spectrum);
        FastTables {
            powers,
            spectrum,
            forward,
            inverse,
        }
    }

    /// `sum_{i} a[i] f[i + k]` for every shift `k`, as scores indexed by the
    /// candidate bitmask minus one.
    fn correlate(&self, prod: &[f64]) -> Vec<f64> {
        let order = self.powers.len();
        let mut a: Vec<Complex<f64>> = self
            .powers
            .iter()
            .map(|&n| Complex::new(prod[n as usize], 0.0))
            .collect();
        self.forward.process(&mut a);
        for (x, f) in a.iter_mut().zip(&self.spectrum) {
            *x = x.conj() * f;
        }
        self.inverse.process(&mut a);
        let mut scores = vec![0.0; order];
        for (k, c) in a.iter().enumerate() {
            scores[self.powers[k] as usize - 1] = c.re / order as f64;
        }
        scores
    }
}

/// Running state of the product-weight construction after `tau` components.
pub struct ProductCbc {
    modulus: Modulus,
    gammas: Vec<f64>,
    q: Vec<Gf2Poly>,
    /// `prod_{j <= tau} (1 + gamma_j phi(x_{n,j}))` per point.
    prod: Vec<f64>,
    excess: ProductExcess,
    criteria: Vec<f64>,
    phi_by_len: Vec<f64>,
    fast: Option<FastTables>,
}

impl ProductCbc {
    /// Starts a search for `gammas.len()` components; the first is fixed to `q_1 = 1`.
    pub fn new(modulus: Modulus, gammas: Vec<f64>) -> Result<ProductCbc> {
        WeightScheme::product(gammas.clone())?;
        let m = modulus.degree();
        if m > MAX_CBC_M {
            return Err(Error::DegreeOutOfRange(format!("m = {m} above {MAX_CBC_M}")));
        }
        let n = 1usize << m;
        let mut state = ProductCbc {
            modulus,
            gammas,
            q: Vec::new(),
            prod: vec![1.0; n],
            excess: ProductExcess::new(n),
            criteria: Vec::new(),
            phi_by_len: phi_table(m, phi),
            fast: None,
        };
        state.fix(Gf2Poly::ONE);
        Ok(state)
    }

    pub fn tau(&self) -> usize {
        self.q.len()
    }

    pub fn is_complete(&self) -> bool {
        self.q.len() == self.gammas.len()
    }

    pub fn criteria(&self) -> &[f64] {
        &self.criteria
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.prod
    }

    pub fn rule(&self) -> PolyLatticeRule {
        PolyLatticeRule::with_modulus(self.modulus, self.q.clone()).expect("components are valid")
    }

    /// The per-point products computed from the points of the current rule.
    pub fn recomputed_accumulator(&self) -> Vec<f64> {
        let ps = self.rule().generate_points();
        let m = self.modulus.degree();
        ps.rows()
            .map(|row| {
                row.iter()
                    .zip(&self.gammas)
                    .map(|(&a, g)| 1.0 + g * phi(a, m))
                    .product()
            })
            .collect()
    }

    fn next_gamma(&self) -> Result<f64> {
        self.gammas
            .get(self.q.len())
            .copied()
            .ok_or_else(|| Error::invalid("all components are already fixed"))
    }

    /// `gamma_{tau+1} sum_{n >= 1} prod_n phi(x_n(q))`, the part of the next
    /// step's criterion that depends on the candidate `q`, times `2^m`.
    pub fn score(&self, q: Gf2Poly) -> Result<f64> {
        let gamma = self.next_gamma()?;
        let col = coordinate_column(&self.modulus, q);
        Ok(gamma * self.weighted_sum(&col))
    }

    fn weighted_sum(&self, col: &[u64]) -> f64 {
        col.iter()
            .zip(&self.prod)
            .skip(1)
            .map(|(&a, p)| p * self.phi_by_len[bit_length(a)])
            .sum()
    }

    /// Exact scores of every candidate, indexed by bitmask minus one.
    pub fn candidate_scores(&self) -> Result<Vec<f64>> {
        let gamma = self.next_gamma()?;
        let count = (1u64 << self.modulus.degree()) - 1;
        Ok((1..=count)
            .into_par_iter()
            .map(|q| gamma * self.weighted_sum(&coordinate_column(&self.modulus, Gf2Poly::from_bits(q))))
            .collect())
    }

    /// Scores of every candidate from one cyclic correlation; accurate to
    /// rounding of the transform.
    pub fn fast_candidate_scores(&mut self) -> Result<Vec<f64>> {
        let gamma = self.next_gamma()?;
        let tables = self.fast.get_or_insert_with(|| FastTables::new(&self.modulus));
        let mut scores = tables.correlate(&self.prod);
        for s in &mut scores {
            *s *= gamma;
        }
        Ok(scores)
    }

    /// `theta(q)` for every candidate: the criterion increase over
    /// `(1 + gamma/3)` times the current value when `q` is appended.
    pub fn thetas(&self, scores: &[f64]) -> Result<Vec<f64>> {
        let gamma = self.next_gamma()?;
        let n = self.prod.len() as f64;
        let total: f64 = self.prod.iter().sum();
        let base = gamma * self.prod[0] * 0.5 - gamma / 3.0 * total;
        Ok(scores.iter().map(|s| (s + base) / n).collect())
    }

    /// Fixes the next component and returns it.
    pub fn step(&mut self, mode: SweepMode) -> Result<Gf2Poly> {
        self.next_gamma()?;
        let m = self.modulus.degree();
        let chosen = if mode.use_fast(m) {
            let approx = self.fast_candidate_scores()?;
            let gamma = self.gammas[self.q.len()];
            let lowest = approx.iter().copied().fold(f64::INFINITY, f64::min);
            let scale: f64 = self.prod.iter().skip(1).sum::<f64>() * 0.5 * gamma;
            let limit = lowest + FAST_RESCORE_BAND * scale;
            let near: Vec<u64> = approx
                .iter()
                .enumerate()
                .filter(|(_, &v)| v <= limit)
                .map(|(i, _)| i as u64 + 1)
                .collect();
            let exact: Vec<(u64, f64)> = near
                .par_iter()
                .map(|&q| self.score(Gf2Poly::from_bits(q)).map(|v| (q, v)))
                .collect::<Result<_>>()?;
            pick(exact.iter().copied())
        } else {
            let scores = self.candidate_scores()?;
            pick(scores.iter().enumerate().map(|(i, &v)| (i as u64 + 1, v)))
        };
        let q = Gf2Poly::from_bits(chosen);
        self.fix(q);
        Ok(q)
    }

    fn fix(&mut self, q: Gf2Poly) {
        let gamma = self.gammas[self.q.len()];
        let m = self.modulus.degree();
        let col = coordinate_column(&self.modulus, q);
        let table = &self.phi_by_len;
        self.prod
            .par_iter_mut()
            .zip(&col)
            .for_each(|(p, &a)| *p *= 1.0 + gamma * table[bit_length(a)]);
        self.excess.push(gamma, &col, m);
        self.criteria.push(self.excess.mean());
        self.q.push(q);
    }

    pub fn run(mut self, mode: SweepMode) -> Result<CbcOutcome> {
        while !self.is_complete() {
            self.step(mode)?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> CbcOutcome {
        CbcOutcome {
            rule: self.rule(),
            criteria: self.criteria,
        }
    }
}

/// Product-weight construction, extensible in the dimension: components
/// `1..tau` do not depend on `gamma_{tau+1}, ...`.
pub fn cbc_construct_product(m: u32, gammas: &[f64], p: Option<Gf2Poly>, mode: SweepMode) -> Result<CbcOutcome> {
    let modulus = resolve_modulus(m, p)?;
    ProductCbc::new(modulus, gammas.to_vec())?.run(mode)
}

/// General-weight construction. Scores use the derived weights of the full
/// dimension, so the vector found for `s` need not extend the one for `s - 1`.
pub fn cbc_construct_general(m: u32, w: &WeightScheme, p: Option<Gf2Poly>) -> Result<CbcOutcome> {
    if w.is_product() {
        return Err(Error::invalid(
            "product weights use the product construction; convert with to_general to force this path",
        ));
    }
    let s = w.dim();
    if s > MAX_GENERAL_CBC_DIM {
        return Err(Error::invalid(format!(
            "general-weight construction limited to s <= {MAX_GENERAL_CBC_DIM}, got {s}"
        )));
    }
    let modulus = resolve_modulus(m, p)?;
    let gt = w.gamma_tilde_table()?;
    let n = 1usize << m;
    let phi_by_len = phi_table(m, phi_tilde);
    // products of phi_tilde over every subset of the fixed coordinates, per point
    let mut subset_products: Vec<Vec<f64>> = vec![vec![1.0]; n];
    let mut q = Vec::with_capacity(s);
    let mut criteria = Vec::with_capacity(s);
    for tau in 0..s {
        let high = 1usize << tau;
        let chosen = if tau == 0 {
            Gf2Poly::ONE
        } else {
            let coupling: Vec<f64> = subset_products
                .par_iter()
                .map(|pv| pv.iter().enumerate().map(|(v, x)| gt[v | high] * x).sum())
                .collect();
            let scores: Vec<f64> = (1..n as u64)
                .into_par_iter()
                .map(|cand| {
                    let col = coordinate_column(&modulus, Gf2Poly::from_bits(cand));
                    col.iter()
                        .zip(&coupling)
                        .map(|(&a, c)| phi_by_len[bit_length(a)] * c)
                        .sum()
                })
                .collect();
            Gf2Poly::from_bits(pick(scores.iter().enumerate().map(|(i, &v)| (i as u64 + 1, v))))
        };
        let col = coordinate_column(&modulus, chosen);
        subset_products.par_iter_mut().zip(&col).for_each(|(pv, &a)| {
            let f = phi_by_len[bit_length(a)];
            let extended: Vec<f64> = pv.iter().map(|x| x * f).collect();
            pv.extend(extended);
        });
        let total = subset_products.iter().fold(TwoFloat::from(0.0), |acc, pv| {
            pv.iter()
                .enumerate()
                .skip(1)
                .fold(acc, |acc, (v, x)| acc + TwoFloat::new_mul(gt[v], *x))
        });
        criteria.push(f64::from(total / n as f64));
        q.push(chosen);
    }
    Ok(CbcOutcome {
        rule: PolyLatticeRule::with_modulus(modulus, q)?,
        criteria,
    })
}

/// Dispatches on the weight representation.
pub fn cbc_construct(m: u32, w: &WeightScheme, p: Option<Gf2Poly>, mode: SweepMode) -> Result<CbcOutcome> {
    match w.product_gammas() {
        Some(g) => cbc_construct_product(m, g, p, mode),
        None => cbc_construct_general(m, w, p),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.5 && lambda <= 1.0) {
        return Err(Error::invalid(format!("lambda = {lambda} outside (1/2, 1]")));
    }
    Ok(())
}

fn check_tau(w: &WeightScheme, tau: usize) -> Result<()> {
    if tau == 0 || tau > w.dim() {
        return Err(Error::invalid(format!("tau = {tau} outside 1..={}", w.dim())));
    }
    Ok(())
}

/// `2^{2 lambda} - 2`, the sum of `psi(k)^lambda` over `k >= 1`, inverted.
fn psi_power_denominator(lambda: f64) -> f64 {
    (2.0 * lambda).exp2() - 2.0
}

/// Guaranteed upper bound on the criterion of the first `tau` components of
/// a constructed rule with `2^m` points.
///
/// General weights: `(2^m-1)^{-1/l} [sum_{v <= I_tau} gt_v^l / (2^{2l}-2)^{|v|}]^{1/l}`.
/// Product weights: the relaxed closed product
/// `(2^m-1)^{-1/l} [prod (1 + c_l (g_j/3)^l) - prod (1 + g_j/3)^l]^{1/l}`,
/// `c_l = (2^{2l}-1)/(2^{2l}-2)`.
pub fn theorem_bound(w: &WeightScheme, tau: usize, m: u32, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_tau(w, tau)?;
    let d = psi_power_denominator(lambda);
    let inner = match w.product_gammas() {
        Some(g) => {
            let c = (2.0 * lambda).exp2() - 1.0;
            let relaxed: f64 = g[..tau]
                .iter()
                .map(|gj| 1.0 + c / d * (gj / 3.0).powf(lambda))
                .product();
            let lead: f64 = g[..tau].iter().map(|gj| (1.0 + gj / 3.0).powf(lambda)).product();
            relaxed - lead
        }
        None => subset_sum(w, tau, d, lambda)?,
    };
    Ok(bound_from_inner(inner, m, lambda))
}

/// The bound before the final relaxation: for product weights the exact
/// expansion `prod [(g_j/3)^l / (2^{2l}-2) + (1+g_j/3)^l] - prod (1+g_j/3)^l`
/// of the subset sum with the truncated derived weights; for general
/// weights identical to [`theorem_bound`].
pub fn theorem_bound_subset_form(w: &WeightScheme, tau: usize, m: u32, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_tau(w, tau)?;
    let d = psi_power_denominator(lambda);
    let inner = match w.product_gammas() {
        Some(g) => {
            let full: f64 = g[..tau]
                .iter()
                .map(|gj| (gj / 3.0).powf(lambda) / d + (1.0 + gj / 3.0).powf(lambda))
                .product();
            let lead: f64 = g[..tau].iter().map(|gj| (1.0 + gj / 3.0).powf(lambda)).product();
            full - lead
        }
        None => subset_sum(w, tau, d, lambda)?,
    };
    Ok(bound_from_inner(inner, m, lambda))
}

fn subset_sum(w: &WeightScheme, tau: usize, d: f64, lambda: f64) -> Result<f64> {
    if w.dim() > MAX_GENERAL_DIM {
        return Err(Error::invalid(format!(
            "subset enumeration limited to s <= {MAX_GENERAL_DIM}"
        )));
    }
    let gt = w.gamma_tilde_table()?;
    Ok((1usize..1 << tau)
        .map(|v| gt[v].powf(lambda) / d.powi(v.count_ones() as i32))
        .sum())
}

fn bound_from_inner(inner: f64, m: u32, lambda: f64) -> f64 {
    let points = (m as f64).exp2() - 1.0;
    (inner.max(0.0) / points).powf(1.0 / lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TractabilityForm {
    /// `[sum_u (g_u/3^|u|)^l (c_l^|u| - 1)]^{1/l} / sum_u g_u/3^|u|`.
    General,
    /// `[prod (1 + c_l (g_j/3)^l) - prod (1 + g_j/3)^l]^{1/l} / (prod (1 + g_j/3) - 1)`.
    Product,
}

/// The ratio bounding the relative error reduction, for `s = 1..=s_max` and
/// product weights `gamma(j)`; strong tractability holds when it stays bounded.
pub fn tractability_ratios(
    gamma: impl Fn(usize) -> f64,
    lambda: f64,
    s_max: usize,
    form: TractabilityForm,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if s_max == 0 {
        return Err(Error::invalid("s_max must be positive"));
    }
    let c = ((2.0 * lambda).exp2() - 1.0) / psi_power_denominator(lambda);
    let mut relaxed = 1.0;
    let mut powered = 1.0;
    let mut plain = 1.0;
    let mut ratios = Vec::with_capacity(s_max);
    for j in 1..=s_max {
        let g = gamma(j);
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::invalid(format!(
                "gamma_{j} = {g} is not a finite nonnegative number"
            )));
        }
        let t = g / 3.0;
        relaxed *= 1.0 + c * t.powf(lambda);
        plain *= 1.0 + t;
        powered *= match form {
            // sum_u t_u^l c^|u| - sum_u t_u^l
            TractabilityForm::General => 1.0 + t.powf(lambda),
            TractabilityForm::Product => (1.0 + t).powf(lambda),
        };
        ratios.push((relaxed - powered).max(0.0).powf(1.0 / lambda) / (plain - 1.0));
    }
    Ok(ratios)
}

/// Largest ratio over `s <= s_max`, a finite stand-in for the supremum.
pub fn tractability_constant(
    gamma: impl Fn(usize) -> f64,
    lambda: f64,
    s_max: usize,
    form: TractabilityForm,
) -> Result<f64> {
    Ok(tractability_ratios(gamma, lambda, s_max, form)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// The General-form ratio for one explicit weight scheme.
pub fn general_tractability_ratio(w: &WeightScheme, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let s = w.dim();
    if s > MAX_GENERAL_DIM {
        return Err(Error::invalid(format!(
            "subset enumeration limited to s <= {MAX_GENERAL_DIM}"
        )));
    }
    let c = ((2.0 * lambda).exp2() - 1.0) / psi_power_denominator(lambda);
    let mut num = 0.0;
    let mut den = 0.0;
    for mask in 1u64..1 << s {
        let u = Subset(mask);
        let t = w.gamma(u)? / 3f64.powi(u.len() as i32);
        num += t.powf(lambda) * (c.powi(u.len() as i32) - 1.0);
        den += t;
    }
    Ok(num.powf(1.0 / lambda) / den)
}

/// Global minimizer of the criterion over all generating vectors with
/// `q_1 = 1`; among near-equal values the lexicographically first wins.
#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustiveOutcome {
    pub rule: PolyLatticeRule,
    pub criterion: f64,
}

pub fn exhaustive_best(m: u32, w: &WeightScheme, p: Option<Gf2Poly>) -> Result<ExhaustiveOutcome> {
    let s = w.dim();
    let candidates = (m as f64).exp2() - 1.0;
    if m > MAX_CBC_M || candidates.powi(s as i32) > EXHAUSTIVE_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "(2^{m} - 1)^{s} candidate vectors exceed {EXHAUSTIVE_BUDGET:e}"
        )));
    }
    let modulus = resolve_modulus(m, p)?;
    let top = (1u64 << m) - 1;
    let mut q = vec![1u64; s];
    let mut best: Option<(f64, Vec<u64>)> = None;
    loop {
        let rule = PolyLatticeRule::with_modulus(modulus, q.iter().map(|&b| Gf2Poly::from_bits(b)).collect())?;
        let value = mean_square_criterion(&rule.generate_points(), w)?;
        let better = match &best {
            None => true,
            Some((b, _)) => value < b - TIE_BAND * b.abs(),
        };
        if better {
            best = Some((value, q.clone()));
        }
        // odometer over q_2..q_s, last component fastest
        let mut i = s;
        loop {
            if i <= 1 {
                let (criterion, q) = best.expect("at least one vector evaluated");
                return Ok(ExhaustiveOutcome {
                    rule: PolyLatticeRule::with_modulus(modulus, q.into_iter().map(Gf2Poly::from_bits).collect())?,
                    criterion,
                });
            }
            i -= 1;
            if q[i] < top {
                q[i] += 1;
                break;
            }
            q[i] = 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::Preset;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    const LAMBDAS: [f64; 10] = [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0];

    #[test]
    fn one_dimension_is_exact() {
        for m in 1..=15 {
            for g in [1.0, 0.9, 0.3] {
                let out = cbc_construct_product(m, &[g], None, SweepMode::Auto).unwrap();
                assert_eq!(out.rule.q(), &[Gf2Poly::ONE]);
                let expected = g / 3.0 / (2.0 * m as f64 + 1.0).exp2();
                assert!(
                    rel(out.criteria[0], expected) < 1e-13,
                    "m={m}: {} vs {expected}",
                    out.criteria[0]
                );
            }
        }
    }

    #[test]
    fn fast_and_naive_agree() {
        for m in 1..=9 {
            for preset in Preset::ALL {
                let w = WeightScheme::preset(preset, 8).unwrap();
                let g = w.product_gammas().unwrap();
                let naive = cbc_construct_product(m, g, None, SweepMode::Naive).unwrap();
                let fast = cbc_construct_product(m, g, None, SweepMode::Fast).unwrap();
                assert_eq!(naive.rule, fast.rule, "m={m} {preset}");
                for (a, b) in naive.criteria.iter().zip(&fast.criteria) {
                    assert!(rel(*a, *b) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fft_scores_track_exact_scores() {
        let modulus = Modulus::smallest(8).unwrap();
        let mut state = ProductCbc::new(modulus, vec![1.0, 0.8, 0.5]).unwrap();
        state.step(SweepMode::Naive).unwrap();
        let exact = state.candidate_scores().unwrap();
        let approx = state.fast_candidate_scores().unwrap();
        for (a, b) in exact.iter().zip(&approx) {
            assert!(rel(*b, *a) < 1e-12);
        }
    }

    #[test]
    fn steps_are_argmins_of_the_full_criterion() {
        for preset in Preset::ALL {
            let w = WeightScheme::preset(preset, 5).unwrap();
            let out = cbc_construct_product(6, w.product_gammas().unwrap(), None, SweepMode::Auto).unwrap();
            let modulus = out.rule.modulus();
            for tau in 2..=5 {
                let wt = w.truncate(tau).unwrap();
                let prefix = &out.rule.q()[..tau - 1];
                let value = |q: u64| {
                    let mut v = prefix.to_vec();
                    v.push(Gf2Poly::from_bits(q));
                    mean_square_criterion(
                        &PolyLatticeRule::with_modulus(modulus, v).unwrap().generate_points(),
                        &wt,
                    )
                    .unwrap()
                };
                let chosen = value(out.rule.q()[tau - 1].bits());
                let best = (1..64).map(value).fold(f64::INFINITY, f64::min);
                assert!(chosen <= best * (1.0 + 1e-12), "{preset} tau={tau}");
                assert!(rel(chosen, out.criteria[tau - 1]) < 1e-12);
            }
        }
    }

    #[test]
    fn accumulator_matches_recomputation() {
        let modulus = Modulus::smallest(9).unwrap();
        let mut state = ProductCbc::new(
            modulus,
            WeightScheme::preset(Preset::Geo09, 10)
                .unwrap()
                .product_gammas()
                .unwrap()
                .to_vec(),
        )
        .unwrap();
        while !state.is_complete() {
            state.step(SweepMode::Auto).unwrap();
            let fresh = state.recomputed_accumulator();
            for (a, b) in state.accumulator().iter().zip(&fresh) {
                assert!(rel(*a, *b) < 1e-12);
            }
        }
    }

    #[test]
    fn averaging_and_step_bounds() {
        for preset in Preset::ALL {
            let gammas = WeightScheme::preset(preset, 6)
                .unwrap()
                .product_gammas()
                .unwrap()
                .to_vec();
            let m = 7;
            let mut state = ProductCbc::new(Modulus::smallest(m).unwrap(), gammas.clone()).unwrap();
            while !state.is_complete() {
                let tau = state.tau();
                let thetas = state.thetas(&state.candidate_scores().unwrap()).unwrap();
                let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
                let before = *state.criteria().last().unwrap();
                state.step(SweepMode::Naive).unwrap();
                let after = *state.criteria().last().unwrap();
                let g = gammas[tau];
                let theta = after - (1.0 + g / 3.0) * before;
                assert!(theta <= mean + 1e-12 * mean.abs(), "{preset} tau={tau}");
                for lambda in LAMBDAS {
                    let d = (2.0 * lambda).exp2() - 2.0;
                    let rest: f64 = gammas[..tau]
                        .iter()
                        .map(|gj| (gj / 3.0).powf(lambda) / d + (1.0 + gj / 3.0).powf(lambda))
                        .product();
                    let bound = (g / 3.0).powf(lambda) / d * rest / ((m as f64).exp2() - 1.0);
                    assert!(theta.max(0.0).powf(lambda) <= bound * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn criteria_respect_theorem_bounds() {
        for preset in Preset::ALL {
            for m in [3, 6, 9] {
                let w = WeightScheme::preset(preset, 12).unwrap();
                let out = cbc_construct_product(m, w.product_gammas().unwrap(), None, SweepMode::Auto).unwrap();
                for (tau, b) in out.criteria.iter().enumerate() {
                    for lambda in LAMBDAS {
                        let exact = theorem_bound_subset_form(&w, tau + 1, m, lambda).unwrap();
                        let closed = theorem_bound(&w, tau + 1, m, lambda).unwrap();
                        assert!(*b <= exact * (1.0 + 1e-12));
                        assert!(exact <= closed * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn bound_examples() {
        let w = WeightScheme::product(vec![1.0]).unwrap();
        assert!(rel(theorem_bound(&w, 1, 4, 1.0).unwrap(), 1.0 / 90.0) < 1e-14);
        assert!(theorem_bound(&w, 1, 4, 0.5).is_err());
        assert!(theorem_bound(&w, 1, 4, 1.1).is_err());
        assert!(theorem_bound(&w, 2, 4, 1.0).is_err());
        assert!(theorem_bound(&w, 1, 4, 0.5 + 1e-9).unwrap() > 1e6);
        let g = WeightScheme::product(vec![1.0]).unwrap().to_general().unwrap();
        assert!(rel(theorem_bound(&g, 1, 4, 1.0).unwrap(), 1.0 / 90.0) < 1e-14);
    }

    #[test]
    fn subset_form_matches_enumeration() {
        for s in 1..=8 {
            let w = WeightScheme::preset(Preset::Invsq, s).unwrap();
            for lambda in LAMBDAS {
                let d = (2.0 * lambda).exp2() - 2.0;
                let sum: f64 = (1u64..1 << s)
                    .map(|mask| {
                        w.gamma_tilde_truncated(s, Subset(mask)).unwrap().powf(lambda)
                            / d.powi(mask.count_ones() as i32)
                    })
                    .sum();
                let direct = (sum / 15.0).powf(1.0 / lambda);
                assert!(rel(theorem_bound_subset_form(&w, s, 4, lambda).unwrap(), direct) < 1e-12);
                assert!(direct <= theorem_bound(&w, s, 4, lambda).unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn general_path_on_product_weights() {
        for s in 1..=6 {
            for preset in Preset::ALL {
                let w = WeightScheme::preset(preset, s).unwrap();
                let product = cbc_construct_product(5, w.product_gammas().unwrap(), None, SweepMode::Naive).unwrap();
                let general = cbc_construct_general(5, &w.to_general().unwrap(), None).unwrap();
                assert!(
                    rel(general.criteria[s - 1], product.criteria[s - 1]) < 1e-12,
                    "s={s} {preset}"
                );
                let ps = general.rule.generate_points();
                assert!(rel(mean_square_criterion(&ps, &w).unwrap(), general.criteria[s - 1]) < 1e-12);
            }
        }
        assert!(cbc_construct_general(4, &WeightScheme::product(vec![1.0]).unwrap(), None).is_err());
    }

    #[test]
    fn general_degenerate_inputs() {
        let one = WeightScheme::general(1, [(Subset(1), 0.6)]).unwrap();
        let out = cbc_construct_general(6, &one, None).unwrap();
        assert!(rel(out.criteria[0], 0.2 / (13f64).exp2()) < 1e-13);
        let zero = WeightScheme::general(4, []).unwrap();
        let out = cbc_construct_general(5, &zero, None).unwrap();
        assert!(out.rule.q().iter().all(|q| *q == Gf2Poly::ONE));
        assert!(out.criteria.iter().all(|&b| b == 0.0));
        let big = WeightScheme::general(13, [(Subset(1), 1.0)]).unwrap();
        assert!(cbc_construct_general(4, &big, None).is_err());
    }

    #[test]
    fn general_steps_are_argmins() {
        let w = WeightScheme::general(
            4,
            [
                (Subset::from_coords(&[1]).unwrap(), 1.0),
                (Subset::from_coords(&[2]).unwrap(), 0.7),
                (Subset::from_coords(&[1, 2]).unwrap(), 0.5),
                (Subset::from_coords(&[2, 3]).unwrap(), 0.9),
                (Subset::from_coords(&[1, 3, 4]).unwrap(), 0.4),
                (Subset::from_coords(&[4]).unwrap(), 0.2),
            ],
        )
        .unwrap();
        let out = cbc_construct_general(5, &w, None).unwrap();
        let modulus = out.rule.modulus();
        let gt = w.gamma_tilde_table().unwrap();
        // the step criterion: derived weights restricted to subsets of I_tau
        for tau in 2..=4 {
            let value = |q: u64| {
                let mut v = out.rule.q()[..tau - 1].to_vec();
                v.push(Gf2Poly::from_bits(q));
                let ps = PolyLatticeRule::with_modulus(modulus, v).unwrap().generate_points();
                let mut total = 0.0;
                for row in ps.rows() {
                    for (mask, g) in gt.iter().enumerate().take(1 << tau).skip(1) {
                        let p: f64 = Subset(mask as u64).coords().map(|j| phi_tilde(row[j - 1], 5)).product();
                        total += g * p;
                    }
                }
                total / 32.0
            };
            let chosen = value(out.rule.q()[tau - 1].bits());
            let best = (1..32).map(value).fold(f64::INFINITY, f64::min);
            assert!(chosen <= best + 1e-12 * best.abs());
            assert!((chosen - out.criteria[tau - 1]).abs() <= 1e-12 * chosen.abs());
        }
        for (tau, b) in out.criteria.iter().enumerate() {
            for lambda in LAMBDAS {
                assert!(*b <= theorem_bound(&w, tau + 1, 5, lambda).unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn exhaustive_versus_cbc() {
        for (m, s) in [(3, 2), (4, 2), (4, 3)] {
            for preset in Preset::ALL {
                let w = WeightScheme::preset(preset, s).unwrap();
                let cbc = cbc_construct(m, &w, None, SweepMode::Naive).unwrap();
                let best = exhaustive_best(m, &w, None).unwrap();
                let b = *cbc.criteria.last().unwrap();
                assert!(best.criterion <= b * (1.0 + 1e-12));
                for lambda in LAMBDAS {
                    assert!(b <= theorem_bound(&w, s, m, lambda).unwrap());
                }
            }
        }
        let w = WeightScheme::product(vec![1.0]).unwrap();
        let best = exhaustive_best(5, &w, None).unwrap();
        let cbc = cbc_construct(5, &w, None, SweepMode::Naive).unwrap();
        assert_eq!(best.rule, cbc.rule);
        assert_eq!(best.criterion, cbc.criteria[0]);
        assert!(matches!(
            exhaustive_best(8, &WeightScheme::preset(Preset::Geo09, 4).unwrap(), None),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn tractability() {
        let ratios = tractability_ratios(|j| 1.0 / (j * j) as f64, 1.0, 50, TractabilityForm::General).unwrap();
        assert!(ratios.iter().all(|r| r.is_finite()));
        let last = &ratios[40..];
        let hi = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = last.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((hi - lo) / lo < 0.01);
        let ratios = tractability_ratios(|j| 1.0 / (j * j) as f64, 0.8, 50, TractabilityForm::Product).unwrap();
        assert!(ratios.iter().all(|r| r.is_finite()));

        let flat = tractability_ratios(|_| 1.0, 1.0, 20, TractabilityForm::General).unwrap();
        assert!(flat.windows(2).all(|w| w[1] > w[0]));

        for lambda in LAMBDAS {
            let g = 0.7f64;
            let c = ((2.0 * lambda).exp2() - 1.0) / ((2.0 * lambda).exp2() - 2.0);
            let t = g / 3.0;
            let direct = (t.powf(lambda) * c - t.powf(lambda)).powf(1.0 / lambda) / t;
            let r = tractability_ratios(|_| g, lambda, 1, TractabilityForm::General).unwrap()[0];
            assert!(rel(r, direct) < 1e-12);
            let w = WeightScheme::product(vec![g, 0.3, 0.1]).unwrap().to_general().unwrap();
            let via_subsets = general_tractability_ratio(&w, lambda).unwrap();
            let closed =
                tractability_ratios(|j| [g, 0.3, 0.1][j - 1], lambda, 3, TractabilityForm::General).unwrap()[2];
            assert!(rel(via_subsets, closed) < 1e-12);
        }
        assert!(tractability_ratios(|_| 1.0, 0.5, 3, TractabilityForm::General).is_err());
    }

    #[test]
    fn modulus_handling() {
        let out = cbc_construct_product(4, &[1.0, 1.0], Some(Gf2Poly::from_bits(0x19)), SweepMode::Naive).unwrap();
        assert_eq!(out.rule.p(), Gf2Poly::from_bits(0x19));
        assert!(cbc_construct_product(4, &[1.0], Some(Gf2Poly::from_bits(0x15)), SweepMode::Naive).is_err());
        assert!(cbc_construct_product(5, &[1.0], Some(Gf2Poly::from_bits(0x13)), SweepMode::Naive).is_err());
        assert!(cbc_construct_product(4, &[1.0, -0.5], None, SweepMode::Naive).is_err());
        assert!(cbc_construct_product(0, &[1.0], None, SweepMode::Naive).is_err());
        assert_eq!("fast".parse::<SweepMode>().unwrap(), SweepMode::Fast);
        assert!("slow".parse::<SweepMode>().is_err());
    }

    #[test]
    fn extensible_in_dimension() {
        let g = WeightScheme::preset(Preset::Geo09, 12).unwrap();
        let gammas = g.product_gammas().unwrap();
        let long = cbc_construct_product(8, gammas, None, SweepMode::Auto).unwrap();
        let short = cbc_construct_product(8, &gammas[..5], None, SweepMode::Auto).unwrap();
        assert_eq!(&long.rule.q()[..5], short.rule.q());
        assert_eq!(&long.criteria[..5], &short.criteria[..]);
    }

    #[test]
    fn two_dimensional_rate() {
        // four-fold reduction per digit in one dimension, close to it in two
        for preset in Preset::ALL {
            let gammas = WeightScheme::preset(preset, 2)
                .unwrap()
                .product_gammas()
                .unwrap()
                .to_vec();
            let values: Vec<f64> = (8..=14)
                .map(|m| {
                    *cbc_construct_product(m, &gammas, None, SweepMode::Auto)
                        .unwrap()
                        .criteria
                        .last()
                        .unwrap()
                })
                .collect();
            let slope = log2_slope(8, &values);
            assert!((-2.15..=-1.6).contains(&slope), "{preset}: slope {slope}");
        }
    }

    fn log2_slope(m0: u32, values: &[f64]) -> f64 {
        let xs: Vec<f64> = (0..values.len()).map(|i| (m0 as usize + i) as f64).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.log2()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }
}
