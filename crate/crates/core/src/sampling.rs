//! Latin hypercube sampling, with maximin restarts and snapping onto the grid.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design_space::{DesignPoint, DesignSpace};
use crate::error::{Error, Result};
use crate::seed;

/// Default number of LHS draws compared by [`lhs_maximin`].
pub const DEFAULT_RESTARTS: usize = 64;

/// Re-draw budget when snapped points collide.
pub const MAX_SNAP_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LhsDesign {
    pub n: usize,
    pub dims: usize,
    /// `n` rows of `dims` values in `[0, 1)`.
    pub unit_points: Vec<Vec<f64>>,
    pub snapped: Option<Vec<DesignPoint>>,
    pub seed: u64,
    /// Infinite when `n < 2`.
    pub min_pairwise_distance: f64,
}

impl LhsDesign {
    /// Stratum index of every coordinate, `strata[i][d]`.
    pub fn strata(&self) -> Vec<Vec<usize>> {
        self.unit_points
            .iter()
            .map(|row| row.iter().map(|&u| stratum(u, self.n)).collect())
            .collect()
    }
}

fn stratum(u: f64, n: usize) -> usize {
    ((u * n as f64).floor() as usize).min(n - 1)
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d2: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d2.sqrt());
        }
    }
    best
}

/// One point per stratum per dimension, jittered uniformly inside the stratum.
pub fn lhs(n: usize, dims: usize, seed: u64) -> Result<LhsDesign> {
    if n == 0 || dims == 0 {
        return Err(Error::validation("lhs needs n >= 1 and dims >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit_points = vec![vec![0.0; dims]; n];
    let width = 1.0 / n as f64;
    for d in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (i, &s) in perm.iter().enumerate() {
            let jitter: f64 = rng.random();
            let mut u = (s as f64 + jitter) * width;
            // rounding can push a value into the next stratum
            if stratum(u, n) != s || u >= 1.0 {
                u = (s as f64 + 0.5) * width;
            }
            unit_points[i][d] = u;
        }
    }
    let min_pairwise_distance = min_pairwise_distance(&unit_points);
    Ok(LhsDesign {
        n,
        dims,
        unit_points,
        snapped: None,
        seed,
        min_pairwise_distance,
    })
}

fn restart_seed(base: u64, restart: usize) -> u64 {
    if restart == 0 {
        base
    } else {
        seed::derive(base, restart as u64)
    }
}

/// Best of `restarts` LHS draws by minimal pairwise distance; the earliest
/// restart wins ties. Restart 0 uses `seed` itself.
pub fn lhs_maximin(n: usize, dims: usize, seed: u64, restarts: usize) -> Result<LhsDesign> {
    if restarts == 0 {
        return Err(Error::validation("lhs_maximin needs restarts >= 1"));
    }
    let mut best = lhs(n, dims, seed)?;
    for r in 1..restarts {
        let candidate = lhs(n, dims, restart_seed(seed, r))?;
        if candidate.min_pairwise_distance > best.min_pairwise_distance {
            best = candidate;
        }
    }
    Ok(best)
}

/// The candidate pool [`lhs_maximin`] chooses from, in restart order.
pub fn maximin_candidates(n: usize, dims: usize, seed: u64, restarts: usize) -> Result<Vec<LhsDesign>> {
    (0..restarts)
        .map(|r| lhs(n, dims, restart_seed(seed, r)))
        .collect()
}

fn snap_row(row: &[f64], space: &DesignSpace) -> DesignPoint {
    DesignPoint(
        row.iter()
            .zip(&space.factors)
            .map(|(&u, f)| stratum(u, f.level_count()))
            .collect(),
    )
}

/// Maps each unit coordinate onto the level whose slice of `[0, 1)` contains
/// it. A point colliding with an earlier one is re-drawn from
/// `lhs(n, dims, seed + attempt)` until distinct.
pub fn snap_to_grid(design: &LhsDesign, space: &DesignSpace) -> Result<Vec<DesignPoint>> {
    if design.dims != space.dims() {
        return Err(Error::DimensionMismatch {
            expected: space.dims(),
            got: design.dims,
        });
    }
    if design.n > space.grid_size() {
        return Err(Error::Infeasible(format!(
            "cannot place {} distinct points on a grid of {}",
            design.n,
            space.grid_size()
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(design.n);
    for (i, row) in design.unit_points.iter().enumerate() {
        let mut point = snap_row(row, space);
        let mut attempt = 0;
        while seen.contains(&point) {
            attempt += 1;
            if attempt > MAX_SNAP_ATTEMPTS {
                return Err(Error::Infeasible(format!(
                    "could not de-duplicate snapped point {i} within {MAX_SNAP_ATTEMPTS} attempts"
                )));
            }
            let redraw = lhs(design.n, design.dims, design.seed.wrapping_add(attempt))?;
            point = snap_row(&redraw.unit_points[i], space);
        }
        seen.insert(point.clone());
        out.push(point);
    }
    Ok(out)
}

/// Default initializer: maximin LHS in the unit cube, snapped onto the grid.
pub fn grid_initializer(
    space: &DesignSpace,
    n: usize,
    seed: u64,
    restarts: usize,
) -> Result<LhsDesign> {
    let mut design = lhs_maximin(n, space.dims(), seed, restarts)?;
    design.snapped = Some(snap_to_grid(&design, space)?);
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::Factor;
    use proptest::prelude::*;

    #[test]
    fn single_point() {
        let d = lhs(1, 4, 11).unwrap();
        assert_eq!(d.unit_points.len(), 1);
        assert!(d.unit_points[0].iter().all(|&u| (0.0..1.0).contains(&u)));
        assert!(d.min_pairwise_distance.is_infinite());
    }

    #[test]
    fn five_by_three_strata_are_permutations() {
        let d = lhs(5, 3, 2024).unwrap();
        let strata = d.strata();
        for dim in 0..3 {
            let mut col: Vec<usize> = strata.iter().map(|r| r[dim]).collect();
            col.sort();
            assert_eq!(col, vec![0, 1, 2, 3, 4]);
        }
        assert_eq!(d, lhs(5, 3, 2024).unwrap());
    }

    #[test]
    fn maximin_degenerate_and_dominant() {
        assert_eq!(lhs_maximin(5, 3, 9, 1).unwrap(), lhs(5, 3, 9).unwrap());
        let best = lhs_maximin(5, 3, 9, 64).unwrap();
        let pool = maximin_candidates(5, 3, 9, 64).unwrap();
        assert_eq!(pool.len(), 64);
        assert!(pool
            .iter()
            .all(|c| best.min_pairwise_distance >= c.min_pairwise_distance));
        let first_max = pool
            .iter()
            .find(|c| c.min_pairwise_distance == best.min_pairwise_distance)
            .unwrap();
        assert_eq!(first_max, &best);
    }

    #[test]
    fn two_points_split_halves() {
        for seed in 0..50 {
            let d = lhs(2, 1, seed).unwrap();
            let (a, b) = (d.unit_points[0][0], d.unit_points[1][0]);
            assert!((a < 0.5) != (b < 0.5));
        }
    }

    #[test]
    fn snapping_nearest_stratum() {
        let space = DesignSpace::new(vec![Factor::new("x", "", vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()]).unwrap();
        let d = LhsDesign {
            n: 1,
            dims: 1,
            unit_points: vec![vec![0.99]],
            snapped: None,
            seed: 0,
            min_pairwise_distance: f64::INFINITY,
        };
        assert_eq!(snap_to_grid(&d, &space).unwrap(), vec![DesignPoint(vec![4])]);
    }

    #[test]
    fn snapped_five_cover_all_levels() {
        let space = DesignSpace::waam_default();
        for seed in 0..100 {
            let design = grid_initializer(&space, 5, seed, DEFAULT_RESTARTS).unwrap();
            let pts = design.snapped.unwrap();
            let unique: BTreeSet<_> = pts.iter().cloned().collect();
            assert_eq!(unique.len(), 5);
            for k in 0..3 {
                let mut col: Vec<usize> = pts.iter().map(|p| p.0[k]).collect();
                col.sort();
                assert_eq!(col, vec![0, 1, 2, 3, 4]);
            }
        }
    }

    #[test]
    fn collisions_are_resolved() {
        // 10 points onto a 2x2 grid cannot fit
        let space = DesignSpace::new(vec![
            Factor::new("a", "", vec![0.0, 1.0]).unwrap(),
            Factor::new("b", "", vec![0.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let d = lhs(10, 2, 1).unwrap();
        assert!(snap_to_grid(&d, &space).is_err());
        let d = lhs(4, 2, 5).unwrap();
        let pts = snap_to_grid(&d, &space).unwrap();
        let unique: BTreeSet<_> = pts.into_iter().collect();
        assert_eq!(unique.len(), 4);
    }

    proptest! {
        #[test]
        fn marginal_one_per_stratum(n in 1usize..40, dims in 1usize..6, seed in any::<u64>()) {
            let d = lhs(n, dims, seed).unwrap();
            let strata = d.strata();
            for dim in 0..dims {
                let mut col: Vec<usize> = strata.iter().map(|r| r[dim]).collect();
                col.sort();
                prop_assert_eq!(col, (0..n).collect::<Vec<_>>());
            }
            prop_assert!(d.unit_points.iter().flatten().all(|&u| (0.0..1.0).contains(&u)));
        }
    }
}
