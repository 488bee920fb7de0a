//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use doe_core::campaign::oracle_seed;
use doe_core::gpr;
use doe_core::linalg::{self, Matrix};
use doe_core::oracle::WAAM_LIKE_V1;
use doe_core::report::{compare, export_csv, ExportKind};
use doe_core::sampling;
use doe_core::taguchi::fit_main_effects;
use doe_core::{
    init_campaign, AlConfig, CampaignState, DesignPoint, DesignSpace, InitOptions, KernelParams,
    OracleSpec, OrthogonalArray, SearchSpec, Strategy,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// Counted directly from the cells, independent of the array's own checks.
fn pair_counts_equal(oa: &OrthogonalArray) -> bool {
    let p = oa.levels;
    for c in 0..oa.columns {
        let mut counts = vec![0usize; p];
        for row in &oa.cells {
            counts[row[c]] += 1;
        }
        if counts.iter().any(|&k| k * p != oa.rows) {
            return false;
        }
        for c2 in (c + 1)..oa.columns {
            let mut pairs = vec![0usize; p * p];
            for row in &oa.cells {
                pairs[row[c] * p + row[c2]] += 1;
            }
            if pairs.iter().any(|&k| k * p * p != oa.rows) {
                return false;
            }
        }
    }
    true
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for p in [2usize, 3, 5] {
        for cols in 1..=p + 1 {
            let oa = match OrthogonalArray::build(p, cols) {
                Ok(oa) => oa,
                Err(e) => return outcome(false, format!("build({p}, {cols}) failed: {e}")),
            };
            if oa.rows != p * p || !oa.is_balanced() || !oa.has_strength_two() || !pair_counts_equal(&oa) {
                return outcome(false, format!("invariants fail for levels {p}, columns {cols}"));
            }
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(secs < 1.0, format!("{checked} arrays exact, {secs:.3}s (limit 1s)"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let space = DesignSpace::waam_default();
    let design = OrthogonalArray::for_space(&space).unwrap().design_points();
    let grid = space.enumerate_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.random_range(-20.0..20.0)).collect())
            .collect();
        let truth = |p: &DesignPoint| 90.0 + (0..3).map(|k| f[k][p.0[k]]).sum::<f64>();
        let ys: Vec<f64> = design.iter().map(truth).collect();
        let model = fit_main_effects(&space, &design, &ys).unwrap();
        let se: f64 = grid
            .iter()
            .map(|p| (model.predict(p).unwrap() - truth(p)).powi(2))
            .sum();
        worst = worst.max((se / grid.len() as f64).sqrt());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 5.0,
        format!("worst RMSE over 100 surfaces {worst:.3e} (limit 1e-9), {secs:.3}s (limit 5s)"),
    )
}

/// Dense Gaussian elimination with partial pivoting, solving `a x = b` for several right-hand sides.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let factor = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            for k in 0..b[r].len() {
                b[r][k] -= factor * b[col][k];
            }
        }
    }
    let m = b[0].len();
    let mut x = vec![vec![0.0; m]; n];
    for r in (0..n).rev() {
        for k in 0..m {
            let s: f64 = ((r + 1)..n).map(|c| a[r][c] * x[c][k]).sum();
            x[r][k] = (b[r][k] - s) / a[r][r];
        }
    }
    x
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=10usize);
        let d = rng.random_range(1..=3usize);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let params = KernelParams::new(
            10f64.powf(rng.random_range(-0.5..0.5)),
            10f64.powf(rng.random_range(-1.0..1.0)),
            10f64.powf(rng.random_range(-3.0..0.0)),
        )
        .unwrap();
        let model = gpr::fit(&x, &y, params).unwrap();

        let mean: Vec<f64> = (0..d).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
        let sd: Vec<f64> = (0..d)
            .map(|k| (x.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n as f64).sqrt())
            .collect();
        let z = |r: &[f64]| -> Vec<f64> { (0..d).map(|k| (r[k] - mean[k]) / sd[k]).collect() };
        let kern = |a: &[f64], b: &[f64]| {
            let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
            params.signal_variance * (-d2 / (2.0 * params.length_scale.powi(2))).exp()
        };
        let xs: Vec<Vec<f64>> = x.iter().map(|r| z(r)).collect();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let noise = params.noise_variance + model.jitter_used;
        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| kern(&xs[i], &xs[j]) + if i == j { noise } else { 0.0 })
                    .collect()
            })
            .collect();

        for _ in 0..5 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
            let qs = z(&q);
            let kstar: Vec<f64> = xs.iter().map(|r| kern(r, &qs)).collect();
            let rhs: Vec<Vec<f64>> = (0..n).map(|i| vec![y[i] - ybar, kstar[i]]).collect();
            let sol = gauss_solve(gram.clone(), rhs);
            let m_oracle = ybar + (0..n).map(|i| kstar[i] * sol[i][0]).sum::<f64>();
            let v_oracle = (params.signal_variance - (0..n).map(|i| kstar[i] * sol[i][1]).sum::<f64>()).max(0.0);
            let (m, s) = model.predict(&q).unwrap();
            let em = (m - m_oracle).abs() / m_oracle.abs().max(1.0);
            let ev = (s * s - v_oracle).abs() / params.signal_variance;
            worst = worst.max(em).max(ev);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 10.0,
        format!("worst relative error {worst:.3e} over 200 instances (limit 1e-8), {secs:.3}s (limit 10s)"),
    )
}

fn criterion_4() -> Outcome {
    let space = DesignSpace::waam_default();
    let grid = space.enumerate_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_err, mut worst_std) = (0.0f64, 0.0f64);
    let mut fitted = 0;
    while fitted < 100 {
        let n = rng.random_range(2..=10usize);
        let mut picked = BTreeSet::new();
        while picked.len() < n {
            picked.insert(rng.random_range(0..grid.len()));
        }
        let x: Vec<Vec<f64>> = picked.iter().map(|&i| space.to_real(&grid[i]).unwrap().0).collect();
        // a constant column is a standardization error, not an interpolation case
        if (0..3).any(|k| x.iter().all(|r| r[k] == x[0][k])) {
            continue;
        }
        fitted += 1;
        let y: Vec<f64> = x
            .iter()
            .map(|r| 90.0 + (r[0] / 40.0).sin() + r[1] * 0.3 - (r[2] / 10.0).powi(2))
            .collect();
        let params = KernelParams::new(1.0, 1.0, 1e-8).unwrap();
        let model = gpr::fit(&x, &y, params).unwrap();
        for (r, &t) in x.iter().zip(&y) {
            let (m, s) = model.predict(r).unwrap();
            worst_err = worst_err.max((m - t).abs());
            worst_std = worst_std.max(s);
        }
    }
    outcome(
        worst_err < 1e-4 && worst_std < 1e-3,
        format!("max |pred - target| {worst_err:.3e} (limit 1e-4), max std {worst_std:.3e} (limit 1e-3)"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (ell, sf2, sn2) = (1.5, 1.0, 0.01);
    let mut hits = 0;
    let mut recovered = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let xs: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut k = Matrix::zeros(40);
        for i in 0..40 {
            for j in 0..40 {
                k.set(i, j, sf2 * (-(xs[i] - xs[j]).powi(2) / (2.0 * ell * ell)).exp());
            }
        }
        k.add_diagonal(sn2 + 1e-9);
        let l = linalg::cholesky(&k).unwrap();
        let e: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..40).map(|i| (0..=i).map(|j| l.get(i, j) * e[j]).sum()).collect();
        let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let (params, _) = gpr::optimize_hyperparameters(&x, &y, &SearchSpec::default()).unwrap();
        let mean = xs.iter().sum::<f64>() / 40.0;
        let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0).sqrt();
        let raw = params.length_scale * sd;
        recovered.push(raw);
        if raw / ell <= 2.0 && ell / raw <= 2.0 {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    recovered.sort_by(f64::total_cmp);
    outcome(
        hits >= 18 && secs < 60.0,
        format!(
            "length scale within x2 in {hits}/20 seeds (need 18), median {:.3} vs {ell}, {secs:.1}s (limit 60s)",
            recovered[10]
        ),
    )
}

fn finished(strategy: Strategy, seed: u64) -> CampaignState {
    let mut s = init_campaign(
        DesignSpace::waam_default(),
        strategy,
        OracleSpec::synthetic(WAAM_LIKE_V1, 0.1, oracle_seed(seed)),
        AlConfig::default(),
        seed,
        InitOptions::default(),
    )
    .unwrap();
    s.run_to_completion().unwrap();
    s
}

struct PairedRun {
    taguchi_rmse: f64,
    gpr_rmse: f64,
    taguchi_bias: f64,
    gpr_bias: f64,
    crossover: Option<usize>,
}

fn paired_runs() -> (Vec<PairedRun>, f64) {
    let start = Instant::now();
    let runs = (0..30u64)
        .map(|seed| {
            let t = finished(Strategy::Taguchi, seed);
            let g = finished(Strategy::GprAl, seed);
            let r = compare(&t, &g).unwrap();
            let ts = r.section(Strategy::Taguchi).unwrap();
            let gs = r.section(Strategy::GprAl).unwrap();
            assert_eq!(gs.training_size, 20);
            assert_eq!(ts.training_size, 25);
            PairedRun {
                taguchi_rmse: ts.metrics.rmse,
                gpr_rmse: gs.metrics.rmse,
                taguchi_bias: ts.mean_signed_error,
                gpr_bias: gs.mean_signed_error,
                crossover: r.crossover_size,
            }
        })
        .collect();
    (runs, start.elapsed().as_secs_f64())
}

fn criterion_6(runs: &[PairedRun], secs: f64) -> Outcome {
    let wins = runs.iter().filter(|r| r.gpr_rmse < r.taguchi_rmse).count();
    // a seed without a crossover counts as never crossing
    let mut cross: Vec<usize> = runs.iter().map(|r| r.crossover.unwrap_or(usize::MAX)).collect();
    cross.sort_unstable();
    let median = (cross[14] as f64 + cross[15] as f64) / 2.0;
    let median_txt = if median.is_finite() && cross[15] != usize::MAX {
        format!("{median}")
    } else {
        "none".to_string()
    };
    let mut gpr: Vec<f64> = runs.iter().map(|r| r.gpr_rmse).collect();
    let mut tag: Vec<f64> = runs.iter().map(|r| r.taguchi_rmse).collect();
    gpr.sort_by(f64::total_cmp);
    tag.sort_by(f64::total_cmp);
    let a = wins >= 24;
    let b = cross[15] != usize::MAX && median < 25.0;
    outcome(
        a && b && secs < 120.0,
        format!(
            "(a) gpr wins {wins}/30 (need 24) {}, (b) median crossover {median_txt} (limit 25) {}, median rmse gpr {:.3} taguchi {:.3}, {secs:.1}s",
            if a { "ok" } else { "fail" },
            if b { "ok" } else { "fail" },
            gpr[15],
            tag[15],
        ),
    )
}

fn criterion_7(runs: &[PairedRun]) -> Outcome {
    let count = runs
        .iter()
        .filter(|r| r.taguchi_bias.abs() >= r.gpr_bias.abs())
        .count();
    outcome(
        count >= 24,
        format!("|taguchi bias| >= |gpr bias| in {count}/30 seeds (need 24)"),
    )
}

fn artifacts(seed: u64, dir: &std::path::Path) -> Vec<Vec<u8>> {
    let t = finished(Strategy::Taguchi, seed);
    let g = finished(Strategy::GprAl, seed);
    let tp = dir.join("taguchi.json");
    let gp = dir.join("gpr.json");
    t.save(&tp).unwrap();
    g.save(&gp).unwrap();
    let report = compare(&t, &g).unwrap();
    let mut out = vec![std::fs::read(&tp).unwrap(), std::fs::read(&gp).unwrap()];
    for kind in ExportKind::ALL {
        out.push(export_csv(&report, kind).unwrap().into_bytes());
    }
    // a reload must serialize to the same bytes
    out.push(CampaignState::load(&gp).unwrap().to_canonical_json().unwrap().into_bytes());
    out
}

fn criterion_8() -> Outcome {
    let mut identical = true;
    let mut files = 0;
    for seed in [0u64, 7, 123] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = artifacts(seed, a.path());
        let second = artifacts(seed, b.path());
        identical &= first == second && first[1] == first[first.len() - 1];
        files += first.len();
    }
    outcome(identical, format!("{files} artifacts byte-identical across two runs"))
}

fn criterion_9() -> Outcome {
    let mut cases = 0;
    for n in [1usize, 2, 3, 5, 8, 13, 25] {
        for dims in 1..=4 {
            for seed in 0..25u64 {
                let design = sampling::lhs_maximin(n, dims, seed, 4).unwrap();
                let strata = design.strata();
                for d in 0..dims {
                    let mut sorted: Vec<usize> = strata.iter().map(|row| row[d]).collect();
                    sorted.sort_unstable();
                    if sorted != (0..n).collect::<Vec<_>>() {
                        return outcome(false, format!("strata not a permutation for n={n} d={dims} seed={seed}"));
                    }
                }
                cases += 1;
            }
        }
    }
    let space = DesignSpace::waam_default();
    for seed in 0..100u64 {
        let pts = sampling::grid_initializer(&space, 5, seed, sampling::DEFAULT_RESTARTS)
            .unwrap()
            .snapped
            .unwrap();
        for k in 0..3 {
            let levels: BTreeSet<usize> = pts.iter().map(|p| p.0[k]).collect();
            if levels.len() != 5 {
                return outcome(false, format!("seed {seed} factor {k} covers {} levels", levels.len()));
            }
        }
    }
    outcome(true, format!("{cases} (n, d, seed) marginals ok, 100 snapped seeds cover all levels"))
}

fn main() {
    let (runs, secs) = paired_runs();
    let results = [
        ("orthogonal arrays", criterion_1()),
        ("main-effects exactness", criterion_2()),
        ("gpr dense-solve oracle", criterion_3()),
        ("gpr interpolation", criterion_4()),
        ("hyperparameter recovery", criterion_5()),
        ("gpr-al beats taguchi", criterion_6(&runs, secs)),
        ("bias direction", criterion_7(&runs)),
        ("determinism", criterion_8()),
        ("lhs", criterion_9()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {tag}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
