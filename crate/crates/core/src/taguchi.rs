//! Orthogonal arrays and the additive main-effects predictor.
//!
//! Arrays are built over the prime field GF(p): with `a = row / p` and
//! `b = row % p`, the columns are `a`, `b`, then `a + m·b (mod p)` for
//! `m = 1..p-1`. Any two of these columns hit every level pair exactly once,
//! so the `p²` rows form a strength-2 array with up to `p + 1` columns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, DesignSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthogonalArray {
    pub rows: usize,
    pub columns: usize,
    pub levels: usize,
    pub cells: Vec<Vec<usize>>,
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

impl OrthogonalArray {
    pub fn build(levels: usize, columns: usize) -> Result<Self> {
        if !is_prime(levels) {
            return Err(Error::Unsupported(format!(
                "orthogonal arrays need a prime level count, got {levels}"
            )));
        }
        if columns == 0 || columns > levels + 1 {
            return Err(Error::Unsupported(format!(
                "a {levels}-level strength-2 array supports 1..={} columns, got {columns}",
                levels + 1
            )));
        }
        let rows = levels * levels;
        let cells = (0..rows)
            .map(|row| {
                let a = row / levels;
                let b = row % levels;
                (0..columns)
                    .map(|c| match c {
                        0 => a,
                        1 => b,
                        m => (a + (m - 1) * b) % levels,
                    })
                    .collect()
            })
            .collect();
        Ok(OrthogonalArray {
            rows,
            columns,
            levels,
            cells,
        })
    }

    /// Array whose columns map one-to-one onto the factors of `space`.
    pub fn for_space(space: &DesignSpace) -> Result<Self> {
        let levels = space.factors[0].level_count();
        if space.factors.iter().any(|f| f.level_count() != levels) {
            return Err(Error::Unsupported(
                "taguchi design needs the same level count for every factor".into(),
            ));
        }
        Self::build(levels, space.dims())
    }

    pub fn design_points(&self) -> Vec<DesignPoint> {
        self.cells.iter().cloned().map(DesignPoint).collect()
    }

    /// Every level appears `rows / levels` times in each column.
    pub fn is_balanced(&self) -> bool {
        let expected = self.rows / self.levels;
        (0..self.columns).all(|c| {
            let mut counts = vec![0usize; self.levels];
            for row in &self.cells {
                counts[row[c]] += 1;
            }
            counts.iter().all(|&n| n == expected)
        })
    }

    /// Every ordered level pair appears `rows / levels²` times in each column pair.
    pub fn has_strength_two(&self) -> bool {
        let expected = self.rows / (self.levels * self.levels);
        for c1 in 0..self.columns {
            for c2 in (c1 + 1)..self.columns {
                let mut counts = vec![0usize; self.levels * self.levels];
                for row in &self.cells {
                    counts[row[c1] * self.levels + row[c2]] += 1;
                }
                if counts.iter().any(|&n| n != expected) {
                    return false;
                }
            }
        }
        true
    }
}

/// Additive predictor `μ + Σ effect(factor, level)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEffectsModel {
    pub overall_mean: f64,
    /// `effects[factor][level]`
    pub effects: Vec<Vec<f64>>,
}

/// Fits the main-effects model. Replicated design cells are first averaged,
/// then cell means are pooled by level.
pub fn fit_main_effects(
    space: &DesignSpace,
    design: &[DesignPoint],
    responses: &[f64],
) -> Result<MainEffectsModel> {
    if design.len() != responses.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            got: responses.len(),
        });
    }
    if design.is_empty() {
        return Err(Error::validation("main effects need at least one run"));
    }
    let mut cells: BTreeMap<&DesignPoint, (f64, usize)> = BTreeMap::new();
    for (p, &y) in design.iter().zip(responses) {
        space.check_point(p)?;
        let slot = cells.entry(p).or_insert((0.0, 0));
        slot.0 += y;
        slot.1 += 1;
    }
    let cell_means: Vec<(&DesignPoint, f64)> = cells
        .into_iter()
        .map(|(p, (sum, n))| (p, sum / n as f64))
        .collect();
    let overall_mean = cell_means.iter().map(|(_, m)| m).sum::<f64>() / cell_means.len() as f64;

    let mut effects = Vec::with_capacity(space.dims());
    for (k, factor) in space.factors.iter().enumerate() {
        let mut sums = vec![0.0; factor.level_count()];
        let mut counts = vec![0usize; factor.level_count()];
        for (p, m) in &cell_means {
            sums[p.0[k]] += m;
            counts[p.0[k]] += 1;
        }
        let mut row = Vec::with_capacity(factor.level_count());
        for level in 0..factor.level_count() {
            if counts[level] == 0 {
                return Err(Error::MissingCoverage {
                    factor: k,
                    name: factor.name.clone(),
                    level,
                });
            }
            row.push(sums[level] / counts[level] as f64 - overall_mean);
        }
        effects.push(row);
    }
    Ok(MainEffectsModel {
        overall_mean,
        effects,
    })
}

impl MainEffectsModel {
    pub fn predict(&self, p: &DesignPoint) -> Result<f64> {
        if p.dims() != self.effects.len() {
            return Err(Error::DimensionMismatch {
                expected: self.effects.len(),
                got: p.dims(),
            });
        }
        let mut y = self.overall_mean;
        for (k, (&level, effects)) in p.0.iter().zip(&self.effects).enumerate() {
            let e = effects.get(level).ok_or(Error::IndexOutOfRange {
                factor: k,
                index: level,
                levels: effects.len(),
            })?;
            y += e;
        }
        Ok(y)
    }

    pub fn analyze(&self) -> FactorAnalysis {
        analyze_factors(self)
    }
}

/// Mean-of-means summary of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorAnalysis {
    pub level_means: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    /// 1 = most influential; ties keep declaration order.
    pub rank: Vec<usize>,
}

pub fn analyze_factors(model: &MainEffectsModel) -> FactorAnalysis {
    let level_means: Vec<Vec<f64>> = model
        .effects
        .iter()
        .map(|row| row.iter().map(|e| model.overall_mean + e).collect())
        .collect();
    let delta: Vec<f64> = level_means
        .iter()
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
            max - min
        })
        .collect();
    let mut order: Vec<usize> = (0..delta.len()).collect();
    // sort_by is stable, so equal deltas keep factor order
    order.sort_by(|&a, &b| delta[b].total_cmp(&delta[a]));
    let mut rank = vec![0; delta.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r + 1;
    }
    FactorAnalysis {
        level_means,
        delta,
        rank,
    }
}
