//! Polynomial lattice point sets and their dual lattices.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2poly::{Gf2Poly, Modulus};

/// Highest precision a stored coordinate may carry.
pub const MAX_PRECISION_BITS: u32 = 63;

/// `N` points in `[0,1)^s`, each coordinate stored as an integer numerator
/// over `2^precision_bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    dim: usize,
    precision_bits: u32,
    coords: Vec<u64>,
}

impl PointSet {
    /// `coords` is row-major with `dim` entries per point.
    pub fn new(dim: usize, precision_bits: u32, coords: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point sets need at least one coordinate"));
        }
        if precision_bits > MAX_PRECISION_BITS {
            return Err(Error::invalid(format!(
                "precision {precision_bits} exceeds {MAX_PRECISION_BITS} bits"
            )));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} numerators do not split into rows of {dim}",
                coords.len()
            )));
        }
        if let Some(a) = coords.iter().find(|&&a| a >> precision_bits != 0) {
            return Err(Error::invalid(format!("numerator {a} is not below 2^{precision_bits}")));
        }
        Ok(PointSet {
            dim,
            precision_bits,
            coords,
        })
    }

    /// Points given as floating-point values; each must be exactly
    /// `a / 2^precision_bits` for an integer `a`.
    pub fn from_f64_rows(rows: &[Vec<f64>], precision_bits: u32) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let scale = (precision_bits as f64).exp2();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid(format!(
                    "row {n} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            for &x in row {
                if !(0.0..1.0).contains(&x) {
                    return Err(Error::invalid(format!("coordinate {x} outside [0,1)")));
                }
                let a = x * scale;
                if a.fract() != 0.0 {
                    return Err(Error::invalid(format!(
                        "coordinate {x} is not a dyadic rational with {precision_bits} digits"
                    )));
                }
                coords.push(a as u64);
            }
        }
        PointSet::new(dim, precision_bits, coords)
    }

    pub fn n_points(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn numerators(&self) -> &[u64] {
        &self.coords
    }

    pub fn row(&self, n: usize) -> &[u64] {
        &self.coords[n * self.dim..(n + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn numerator(&self, n: usize, j: usize) -> u64 {
        self.coords[n * self.dim + j]
    }

    pub fn value(&self, n: usize, j: usize) -> f64 {
        self.coords[n * self.dim + j] as f64 / (self.precision_bits as f64).exp2()
    }

    /// All coordinates as doubles, row-major. Exact for precision up to 53 bits.
    pub fn to_f64(&self) -> Vec<f64> {
        let scale = (-(self.precision_bits as f64)).exp2();
        self.coords.iter().map(|&a| a as f64 * scale).collect()
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// The projection onto the first `k` coordinates.
    pub fn leading(&self, k: usize) -> Result<PointSet> {
        if k == 0 || k > self.dim {
            return Err(Error::invalid(format!(
                "cannot project {} coordinates to {k}",
                self.dim
            )));
        }
        let coords = self.rows().flat_map(|r| r[..k].iter().copied()).collect();
        PointSet::new(k, self.precision_bits, coords)
    }

    /// The same values carried at a higher precision.
    pub fn widen(&self, precision_bits: u32) -> Result<PointSet> {
        if precision_bits < self.precision_bits {
            return Err(Error::invalid("widening cannot drop digits"));
        }
        let shift = precision_bits - self.precision_bits;
        PointSet::new(
            self.dim,
            precision_bits,
            self.coords.iter().map(|a| a << shift).collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            for (j, &a) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let x = a as f64 / (self.precision_bits as f64).exp2();
                let _ = write!(out, "{x:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses decimal CSV rows at the given precision; inexact values are rejected.
    pub fn from_csv(text: &str, precision_bits: u32) -> Result<PointSet> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Parse {
                        source_name: "csv".into(),
                        line: i + 1,
                        msg: format!("'{f}': {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        PointSet::from_f64_rows(&rows, precision_bits)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PointSetFile {
            precision_bits: self.precision_bits,
            dim: self.dim,
            numerators: self.rows().map(<[u64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<PointSet> {
        let doc: PointSetFile = serde_json::from_str(text)?;
        if doc.numerators.iter().any(|r| r.len() != doc.dim) {
            return Err(Error::invalid("point rows disagree with the declared dimension"));
        }
        PointSet::new(doc.dim, doc.precision_bits, doc.numerators.concat())
    }

    pub fn load(path: &Path) -> Result<PointSet> {
        PointSet::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PointSetFile {
    precision_bits: u32,
    dim: usize,
    numerators: Vec<Vec<u64>>,
}

/// A modulus `p` (irreducible, degree `m`) and a generating vector `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyLatticeRule {
    modulus: Modulus,
    q: Vec<Gf2Poly>,
}

impl PolyLatticeRule {
    pub fn new(p: Gf2Poly, q: Vec<Gf2Poly>) -> Result<Self> {
        PolyLatticeRule::with_modulus(Modulus::new(p)?, q)
    }

    pub fn with_modulus(modulus: Modulus, q: Vec<Gf2Poly>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("generating vector is empty"));
        }
        for (j, qj) in q.iter().enumerate() {
            match qj.degree() {
                None => return Err(Error::invalid(format!("q_{} is zero", j + 1))),
                Some(d) if d >= modulus.degree() => {
                    return Err(Error::DegreeOutOfRange(format!(
                        "q_{} = {qj} has degree {d}, must be < {}",
                        j + 1,
                        modulus.degree()
                    )))
                }
                _ => {}
            }
        }
        Ok(PolyLatticeRule { modulus, q })
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn p(&self) -> Gf2Poly {
        self.modulus.poly()
    }

    pub fn m(&self) -> u32 {
        self.modulus.degree()
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[Gf2Poly] {
        &self.q
    }

    pub fn n_points(&self) -> usize {
        1usize << self.m()
    }

    /// The point set `x_n = (v_m(n q_1 / p), ..., v_m(n q_s / p))`, rows in
    /// order `n = 0, ..., 2^m - 1`.
    pub fn generate_points(&self) -> PointSet {
        let n = self.n_points();
        let s = self.dim();
        let columns: Vec<Vec<u64>> = self.q.iter().map(|&q| coordinate_column(&self.modulus, q)).collect();
        let mut coords = vec![0u64; n * s];
        for (i, row) in coords.chunks_exact_mut(s).enumerate() {
            for (j, col) in columns.iter().enumerate() {
                row[j] = col[i];
            }
        }
        PointSet {
            dim: s,
            precision_bits: self.m(),
            coords,
        }
    }

    /// Streams rows without materializing the point matrix.
    pub fn rows(&self) -> impl Iterator<Item = Vec<u64>> + '_ {
        let basis: Vec<Vec<u64>> = self.q.iter().map(|&q| digit_basis(&self.modulus, q)).collect();
        (0..self.n_points()).map(move |n| {
            basis
                .iter()
                .map(|b| {
                    b.iter()
                        .enumerate()
                        .filter(|(i, _)| n >> i & 1 == 1)
                        .fold(0u64, |acc, (_, v)| acc ^ v)
                })
                .collect()
        })
    }

    pub fn to_file(&self) -> RuleFile {
        RuleFile {
            m: self.m(),
            p: self.p(),
            q: self.q.clone(),
            s: Some(self.dim()),
            weights: None,
            criteria: None,
            version: None,
        }
    }
}

/// `v_m(x^i q / p)` for `i = 0..m`: the images of the monomials, which span
/// the coordinate map `n -> v_m(n q / p)` over GF(2).
pub(crate) fn digit_basis(modulus: &Modulus, q: Gf2Poly) -> Vec<u64> {
    let mut basis = Vec::with_capacity(modulus.degree() as usize);
    let mut xi = Gf2Poly::ONE;
    for _ in 0..modulus.degree() {
        basis.push(modulus.truncate_residue(modulus.mul(xi, q).bits()));
        xi = modulus.mul(xi, Gf2Poly::X);
    }
    basis
}

/// Numerators `v_m(n q / p)` for every `n = 0..2^m`, natural order.
pub(crate) fn coordinate_column(modulus: &Modulus, q: Gf2Poly) -> Vec<u64> {
    let basis = digit_basis(modulus, q);
    let n = 1usize << modulus.degree();
    let mut col = vec![0u64; n];
    for i in 1..n {
        col[i] = col[i & (i - 1)] ^ basis[i.trailing_zeros() as usize];
    }
    col
}

/// Whether `sum_j tr_m(k_j) q_j = 0 mod p`, with `tr_m` keeping the lowest
/// `m` binary digits of each index as a polynomial.
pub fn in_dual_lattice(k: &[u64], rule: &PolyLatticeRule) -> Result<bool> {
    if k.len() != rule.dim() {
        return Err(Error::invalid(format!(
            "index vector has {} components, rule has {}",
            k.len(),
            rule.dim()
        )));
    }
    let mask = (1u64 << rule.m()) - 1;
    let modulus = rule.modulus();
    let sum = k.iter().zip(rule.q()).fold(Gf2Poly::ZERO, |acc, (&kj, &qj)| {
        acc + modulus.mul(Gf2Poly::from_bits(kj & mask), qj)
    });
    Ok(sum.is_zero())
}

/// On-disk form of a rule: `{"m":…, "p":"0x…", "q":["0x…",…]}` plus optional
/// provenance written by the constructor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    pub m: u32,
    pub p: Gf2Poly,
    pub q: Vec<Gf2Poly>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    /// Criterion value after each component was fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

impl RuleFile {
    pub fn to_rule(&self) -> Result<PolyLatticeRule> {
        let rule = PolyLatticeRule::new(self.p, self.q.clone())?;
        if rule.m() != self.m {
            return Err(Error::invalid(format!(
                "rule file declares m = {} but p = {} has degree {}",
                self.m,
                self.p,
                rule.m()
            )));
        }
        if let Some(s) = self.s {
            if s != rule.dim() {
                return Err(Error::invalid(format!(
                    "rule file declares s = {s} but lists {} polynomials",
                    rule.dim()
                )));
            }
        }
        Ok(rule)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<RuleFile> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<RuleFile> {
        RuleFile::from_json(&std::fs::read_to_string(path)?)
    }
}
