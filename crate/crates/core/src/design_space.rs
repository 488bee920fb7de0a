//! Factors, levels and the discrete candidate grid.
//!
//! Every experiment in a campaign is addressed by a [`DesignPoint`], one level
//! index per factor. The full grid of such points is the universe from which
//! both strategies draw their training runs and held-out test cases.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level count used by the shipped preset.
pub const DEFAULT_LEVELS: usize = 5;

/// A process parameter varied over an ordered set of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub unit: String,
    pub levels: Vec<f64>,
}

impl Factor {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, levels: Vec<f64>) -> Result<Self> {
        let factor = Factor {
            name: name.into(),
            unit: unit.into(),
            levels,
        };
        factor.validate()?;
        Ok(factor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::validation(format!(
                "factor '{}' needs at least 2 levels, got {}",
                self.name,
                self.levels.len()
            )));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "factor '{}' has a non-finite level",
                self.name
            )));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "levels of factor '{}' must be strictly increasing",
                self.name
            )));
        }
        Ok(())
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn min(&self) -> f64 {
        self.levels[0]
    }

    pub fn max(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Index of the level closest to `value`; ties go to the lower level.
    pub fn nearest_level(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, level) in self.levels.iter().enumerate() {
            let dist = (level - value).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        best
    }
}

/// Ordered collection of factors spanning the candidate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub factors: Vec<Factor>,
}

/// One level index per factor, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(pub Vec<usize>);

/// Coordinates of a design point in factor units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealPoint(pub Vec<f64>);

impl DesignPoint {
    pub fn new(level_indices: Vec<usize>) -> Self {
        DesignPoint(level_indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

impl FromStr for DesignPoint {
    type Err = Error;

    /// Parses the `i,j,k` form used on the command line.
    fn from_str(s: &str) -> Result<Self> {
        let indices = s
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::validation(format!("invalid point '{s}': expected i,j,k")))
            })
            .collect::<Result<Vec<_>>>()?;
        if indices.is_empty() {
            return Err(Error::validation("empty point"));
        }
        Ok(DesignPoint(indices))
    }
}

impl RealPoint {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl DesignSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let space = DesignSpace { factors };
        space.validate()?;
        Ok(space)
    }

    /// Current (A), weld speed (mm/s) and contact-tip-to-work distance (mm),
    /// five levels each.
    pub fn waam_default() -> Self {
        DesignSpace {
            factors: vec![
                Factor {
                    name: "current".into(),
                    unit: "A".into(),
                    levels: vec![100.0, 120.0, 140.0, 160.0, 180.0],
                },
                Factor {
                    name: "weld_speed".into(),
                    unit: "mm/s".into(),
                    levels: vec![4.0, 6.0, 8.0, 10.0, 12.0],
                },
                Factor {
                    name: "ctwd".into(),
                    unit: "mm".into(),
                    levels: vec![10.0, 12.0, 14.0, 16.0, 18.0],
                },
            ],
        }
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "waam-default" => Ok(Self::waam_default()),
            other => Err(Error::validation(format!(
                "unknown space preset '{other}' (available: waam-default)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::validation("design space needs at least one factor"));
        }
        let mut names = BTreeSet::new();
        for factor in &self.factors {
            factor.validate()?;
            if !names.insert(factor.name.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate factor name '{}'",
                    factor.name
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.factors.len()
    }

    pub fn grid_size(&self) -> usize {
        self.factors.iter().map(Factor::level_count).product()
    }

    /// All index tuples in lexicographic order (last factor varies fastest).
    pub fn enumerate_grid(&self) -> Vec<DesignPoint> {
        let counts: Vec<usize> = self.factors.iter().map(Factor::level_count).collect();
        let mut out = Vec::with_capacity(self.grid_size());
        let mut current = vec![0usize; counts.len()];
        loop {
            out.push(DesignPoint(current.clone()));
            // odometer increment
            let mut k = counts.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                current[k] += 1;
                if current[k] < counts[k] {
                    break;
                }
                current[k] = 0;
            }
        }
    }

    pub fn check_point(&self, p: &DesignPoint) -> Result<()> {
        if p.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: p.dims(),
            });
        }
        for (k, (&idx, factor)) in p.0.iter().zip(&self.factors).enumerate() {
            if idx >= factor.level_count() {
                return Err(Error::IndexOutOfRange {
                    factor: k,
                    index: idx,
                    levels: factor.level_count(),
                });
            }
        }
        Ok(())
    }

    pub fn to_real(&self, p: &DesignPoint) -> Result<RealPoint> {
        self.check_point(p)?;
        Ok(RealPoint(
            p.0.iter()
                .zip(&self.factors)
                .map(|(&idx, factor)| factor.levels[idx])
                .collect(),
        ))
    }

    /// Nearest-level snapping of a real point back onto the grid.
    pub fn snap_real(&self, x: &RealPoint) -> Result<DesignPoint> {
        if x.0.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: x.0.len(),
            });
        }
        Ok(DesignPoint(
            x.0.iter()
                .zip(&self.factors)
                .map(|(&v, factor)| factor.nearest_level(v))
                .collect(),
        ))
    }

    /// Real coordinates min-max normalized to `[0, 1]` per factor.
    pub fn to_unit(&self, p: &DesignPoint) -> Result<Vec<f64>> {
        let real = self.to_real(p)?;
        Ok(real
            .0
            .iter()
            .zip(&self.factors)
            .map(|(&v, f)| (v - f.min()) / (f.max() - f.min()))
            .collect())
    }

    /// Uniform random draw of `n` distinct grid points outside `excluded`,
    /// returned in lexicographic order.
    pub fn select_test_set(
        &self,
        n: usize,
        seed: u64,
        excluded: &BTreeSet<DesignPoint>,
    ) -> Result<Vec<DesignPoint>> {
        let mut pool: Vec<DesignPoint> = self
            .enumerate_grid()
            .into_iter()
            .filter(|p| !excluded.contains(p))
            .collect();
        if n > pool.len() {
            return Err(Error::Infeasible(format!(
                "cannot select {n} test points: only {} grid points remain after exclusions",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        pool.truncate(n);
        pool.sort();
        Ok(pool)
    }
}
