//! Coordinate weights `gamma_u` and the derived weights that appear once the
//! scrambling expectation is taken.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension for which a general (subset-indexed) scheme is accepted.
pub const MAX_GENERAL_DIM: usize = 20;

/// A subset of `{1, ..., s}` encoded as a bitmask, bit `j - 1` for coordinate `j`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(pub u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    /// Builds a subset from 1-based coordinate indices.
    pub fn from_coords(coords: &[usize]) -> Result<Subset> {
        let mut mask = 0u64;
        for &j in coords {
            if j == 0 || j > 64 {
                return Err(Error::invalid(format!("coordinate index {j} out of range 1..=64")));
            }
            mask |= 1 << (j - 1);
        }
        Ok(Subset(mask))
    }

    /// `{1, ..., s}`.
    pub fn full(s: usize) -> Subset {
        if s >= 64 {
            Subset(u64::MAX)
        } else {
            Subset((1u64 << s) - 1)
        }
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, j: usize) -> bool {
        (1..=64).contains(&j) && self.0 >> (j - 1) & 1 == 1
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    /// 1-based coordinates in increasing order.
    pub fn coords(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |b| self.0 >> b & 1 == 1).map(|b| b + 1)
    }

    fn check_within(self, s: usize) -> Result<()> {
        if self.is_subset_of(Subset::full(s)) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "subset {self:?} is not contained in {{1..{s}}}"
            )))
        }
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.coords()).finish()
    }
}

/// The weight sequence `gamma = (gamma_u)`.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightScheme {
    /// `gamma_u = prod_{j in u} gamma_j`; only the per-coordinate factors are stored.
    Product(Vec<f64>),
    /// Explicit subset weights; missing subsets weigh zero.
    General { s: usize, weights: BTreeMap<Subset, f64> },
}

impl WeightScheme {
    pub fn product(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::invalid("product weights need at least one coordinate"));
        }
        if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::invalid(format!("weight {g} is not a finite nonnegative number")));
        }
        Ok(WeightScheme::Product(gammas))
    }

    pub fn general(s: usize, entries: impl IntoIterator<Item = (Subset, f64)>) -> Result<Self> {
        if s == 0 || s > MAX_GENERAL_DIM {
            return Err(Error::invalid(format!(
                "general weights support 1 <= s <= {MAX_GENERAL_DIM}, got {s}"
            )));
        }
        let mut weights = BTreeMap::new();
        for (u, g) in entries {
            if u.is_empty() {
                return Err(Error::invalid("general weights are indexed by nonempty subsets"));
            }
            u.check_within(s)?;
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::invalid(format!("weight {g} is not a finite nonnegative number")));
            }
            weights.insert(u, g);
        }
        Ok(WeightScheme::General { s, weights })
    }

    pub fn preset(preset: Preset, s: usize) -> Result<Self> {
        WeightScheme::product((1..=s).map(|j| preset.gamma(j)).collect())
    }

    pub fn dim(&self) -> usize {
        match self {
            WeightScheme::Product(g) => g.len(),
            WeightScheme::General { s, .. } => *s,
        }
    }

    pub fn is_product(&self) -> bool {
        matches!(self, WeightScheme::Product(_))
    }

    pub fn product_gammas(&self) -> Option<&[f64]> {
        match self {
            WeightScheme::Product(g) => Some(g),
            WeightScheme::General { .. } => None,
        }
    }

    /// `gamma_u`, with `gamma_{} = 1`.
    pub fn gamma(&self, u: Subset) -> Result<f64> {
        u.check_within(self.dim())?;
        if u.is_empty() {
            return Ok(1.0);
        }
        Ok(match self {
            WeightScheme::Product(g) => u.coords().map(|j| g[j - 1]).product(),
            WeightScheme::General { weights, .. } => weights.get(&u).copied().unwrap_or(0.0),
        })
    }

    /// `sum_{v <= u <= I_s} gamma_u / 3^{|u|}`.
    pub fn gamma_tilde(&self, v: Subset) -> Result<f64> {
        if v.is_empty() {
            return Err(Error::invalid("gamma_tilde is defined for nonempty subsets only"));
        }
        v.check_within(self.dim())?;
        Ok(match self {
            WeightScheme::Product(g) => product_gamma_tilde(g, v),
            WeightScheme::General { weights, .. } => weights
                .iter()
                .filter(|(u, _)| v.is_subset_of(**u))
                .map(|(u, g)| g / 3f64.powi(u.len() as i32))
                .sum(),
        })
    }

    /// `prod_{j in v} gamma_j/3 * prod_{j in I_tau \ v} (1 + gamma_j/3)`,
    /// the dimension-truncated derived weight of the product-weight construction.
    pub fn gamma_tilde_truncated(&self, tau: usize, v: Subset) -> Result<f64> {
        let g = self
            .product_gammas()
            .ok_or_else(|| Error::invalid("truncated derived weights are only defined for product weights"))?;
        if tau == 0 || tau > g.len() {
            return Err(Error::invalid(format!("tau = {tau} outside 1..={}", g.len())));
        }
        if v.is_empty() {
            return Err(Error::invalid("gamma_tilde is defined for nonempty subsets only"));
        }
        v.check_within(tau)?;
        Ok(product_gamma_tilde(&g[..tau], v))
    }

    /// `gamma_tilde` for every subset of `I_s`, indexed by mask (entry 0 unused).
    /// General schemes use a superset-sum transform, O(s 2^s).
    pub fn gamma_tilde_table(&self) -> Result<Vec<f64>> {
        let s = self.dim();
        if s > MAX_GENERAL_DIM {
            return Err(Error::invalid(format!(
                "subset enumeration limited to s <= {MAX_GENERAL_DIM}, got {s}"
            )));
        }
        let size = 1usize << s;
        let mut table = vec![0.0; size];
        match self {
            WeightScheme::Product(g) => {
                for (mask, t) in table.iter_mut().enumerate().skip(1) {
                    *t = product_gamma_tilde(g, Subset(mask as u64));
                }
            }
            WeightScheme::General { weights, .. } => {
                for (u, g) in weights {
                    table[u.0 as usize] = g / 3f64.powi(u.len() as i32);
                }
                for bit in 0..s {
                    for mask in 0..size {
                        if mask >> bit & 1 == 0 {
                            table[mask] += table[mask | 1 << bit];
                        }
                    }
                }
            }
        }
        table[0] = 0.0;
        Ok(table)
    }

    /// The same weights stored subset by subset; product schemes are
    /// expanded over all `2^s - 1` nonempty subsets.
    pub fn to_general(&self) -> Result<WeightScheme> {
        match self {
            WeightScheme::General { .. } => Ok(self.clone()),
            WeightScheme::Product(g) => {
                let s = g.len();
                if s > MAX_GENERAL_DIM {
                    return Err(Error::invalid(format!(
                        "cannot expand s = {s} product weights into subsets"
                    )));
                }
                WeightScheme::general(
                    s,
                    (1u64..1 << s).map(|mask| {
                        let u = Subset(mask);
                        (u, u.coords().map(|j| g[j - 1]).product())
                    }),
                )
            }
        }
    }

    /// The first `s` coordinates of a product scheme.
    pub fn truncate(&self, s: usize) -> Result<WeightScheme> {
        match self {
            WeightScheme::Product(g) if s >= 1 && s <= g.len() => Ok(WeightScheme::Product(g[..s].to_vec())),
            WeightScheme::General { s: own, .. } if *own == s => Ok(self.clone()),
            _ => Err(Error::invalid(format!(
                "cannot restrict a {}-dimensional scheme to s = {s}",
                self.dim()
            ))),
        }
    }

    /// Every `gamma_u` multiplied by `c` (for product weights this is only
    /// expressible in general form).
    pub fn scaled(&self, c: f64) -> Result<WeightScheme> {
        let general = self.to_general()?;
        match general {
            WeightScheme::General { s, weights } => {
                WeightScheme::general(s, weights.into_iter().map(|(u, g)| (u, g * c)))
            }
            WeightScheme::Product(_) => unreachable!(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<WeightScheme> {
        let file: WeightsFile = serde_json::from_str(text)?;
        file.into_scheme()
    }

    pub fn load(path: &Path) -> Result<WeightScheme> {
        WeightScheme::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = match self {
            WeightScheme::Product(g) => WeightsFile::Product { gammas: g.clone() },
            WeightScheme::General { s, weights } => WeightsFile::General {
                s: *s,
                entries: weights
                    .iter()
                    .map(|(u, g)| SubsetWeight {
                        subset: u.coords().collect(),
                        gamma: *g,
                    })
                    .collect(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

fn product_gamma_tilde(g: &[f64], v: Subset) -> f64 {
    g.iter()
        .enumerate()
        .map(|(i, gj)| if v.contains(i + 1) { gj / 3.0 } else { 1.0 + gj / 3.0 })
        .product()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SubsetWeight {
    subset: Vec<usize>,
    gamma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum WeightsFile {
    Product { gammas: Vec<f64> },
    General { s: usize, entries: Vec<SubsetWeight> },
}

impl WeightsFile {
    fn into_scheme(self) -> Result<WeightScheme> {
        match self {
            WeightsFile::Product { gammas } => WeightScheme::product(gammas),
            WeightsFile::General { s, entries } => {
                let parsed = entries
                    .into_iter()
                    .map(|e| Subset::from_coords(&e.subset).map(|u| (u, e.gamma)))
                    .collect::<Result<Vec<_>>>()?;
                WeightScheme::general(s, parsed)
            }
        }
    }
}

/// The three product-weight families of the reference experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `gamma_j = 1`
    Unweighted,
    /// `gamma_j = 0.9^j`
    Geo09,
    /// `gamma_j = 1 / j^2`
    Invsq,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Unweighted, Preset::Geo09, Preset::Invsq];

    pub fn gamma(self, j: usize) -> f64 {
        match self {
            Preset::Unweighted => 1.0,
            Preset::Geo09 => 0.9f64.powi(j as i32),
            Preset::Invsq => 1.0 / (j as f64 * j as f64),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Unweighted => "unweighted",
            Preset::Geo09 => "geo09",
            Preset::Invsq => "invsq",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown weight preset '{s}'")))
    }
}
