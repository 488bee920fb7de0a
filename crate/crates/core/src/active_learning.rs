//! Uncertainty sampling over the candidate grid.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, DesignSpace};
use crate::error::{Error, Result};
use crate::gpr::{self, FitReport, GprModel, KernelParams, SearchSpec};
use crate::response::{composite_response, metric_pair, BeadGeometry, MetricPair};
use crate::sampling;

/// Hyperparameters used when there are too few points to optimize.
pub const FALLBACK_PARAMS: KernelParams = KernelParams {
    length_scale: 1.0,
    signal_variance: 1.0,
    noise_variance: 1e-2,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub init_samples: usize,
    pub max_iterations: usize,
    pub reoptimize_every: usize,
    #[serde(default = "default_restarts")]
    pub lhs_restarts: usize,
    #[serde(default)]
    pub search: SearchSpec,
}

fn default_restarts() -> usize {
    sampling::DEFAULT_RESTARTS
}

impl Default for AlConfig {
    fn default() -> Self {
        AlConfig {
            init_samples: 5,
            max_iterations: 15,
            reoptimize_every: 1,
            lhs_restarts: sampling::DEFAULT_RESTARTS,
            search: SearchSpec::default(),
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_samples == 0 || self.reoptimize_every == 0 || self.lhs_restarts == 0 {
            return Err(Error::validation(
                "init_samples, reoptimize_every and lhs_restarts must be >= 1",
            ));
        }
        Ok(())
    }

    pub fn final_training_size(&self) -> usize {
        self.init_samples + self.max_iterations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionResult {
    pub chosen: DesignPoint,
    pub chosen_index: usize,
    /// Predictive standard deviation per candidate, in supplied order.
    pub scores: Vec<f64>,
}

/// Candidate with the largest latent predictive std; ties go to the earliest.
pub fn acquire(
    model: &GprModel,
    candidates: &[DesignPoint],
    space: &DesignSpace,
) -> Result<AcquisitionResult> {
    if candidates.is_empty() {
        return Err(Error::validation("acquisition needs at least one candidate"));
    }
    let scores = candidates
        .iter()
        .map(|p| Ok(model.predict(space.to_real(p)?.values())?.1))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(AcquisitionResult {
        chosen: candidates[best].clone(),
        chosen_index: best,
        scores,
    })
}

/// Grid points not in `taken`, in grid order.
pub fn candidate_pool(space: &DesignSpace, taken: &BTreeSet<DesignPoint>) -> Vec<DesignPoint> {
    space
        .enumerate_grid()
        .into_iter()
        .filter(|p| !taken.contains(p))
        .collect()
}

/// A fitted surrogate with the hyperparameters that produced it.
#[derive(Debug, Clone)]
pub struct SurrogateFit {
    pub model: GprModel,
    pub params: KernelParams,
    pub report: Option<FitReport>,
}

/// Fits the GPR on observed `(point, y)` pairs. Hyperparameters are
/// re-optimized when `reoptimize` is set or none are supplied.
pub fn fit_surrogate(
    space: &DesignSpace,
    observed: &[(DesignPoint, f64)],
    previous: Option<KernelParams>,
    reoptimize: bool,
    search: &SearchSpec,
) -> Result<SurrogateFit> {
    let x = observed
        .iter()
        .map(|(p, _)| Ok(space.to_real(p)?.0))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
    let (params, report) = match previous {
        Some(p) if !reoptimize => (p, None),
        _ if x.len() >= 3 => {
            let (p, r) = gpr::optimize_hyperparameters(&x, &y, search)?;
            (p, Some(r))
        }
        _ => (previous.unwrap_or(FALLBACK_PARAMS), None),
    };
    let model = gpr::fit(&x, &y, params)?;
    Ok(SurrogateFit {
        model,
        params,
        report,
    })
}

/// Test-set metrics of a fitted surrogate, plus per-point predictions.
pub fn evaluate_surrogate(
    model: &GprModel,
    space: &DesignSpace,
    test: &[(DesignPoint, f64)],
) -> Result<(MetricPair, Vec<f64>)> {
    let pred = test
        .iter()
        .map(|(p, _)| Ok(model.predict(space.to_real(p)?.values())?.0))
        .collect::<Result<Vec<f64>>>()?;
    let actual: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
    Ok((metric_pair(&pred, &actual)?, pred))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0 for the initial design, then one per acquired point.
    pub iteration: usize,
    pub training_size: usize,
    pub metrics: MetricPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<KernelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_marginal_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    PoolExhausted,
    Paused { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRun {
    pub point: DesignPoint,
    pub geometry: BeadGeometry,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignTrace {
    pub runs: Vec<ObservedRun>,
    pub entries: Vec<TraceEntry>,
    pub stop: StopReason,
}

impl CampaignTrace {
    pub fn observed(&self) -> Vec<(DesignPoint, f64)> {
        self.runs.iter().map(|r| (r.point.clone(), r.y)).collect()
    }
}

/// Whether the model at `model_index` (0 = first model) re-optimizes.
pub fn reoptimize_at(config: &AlConfig, model_index: usize) -> bool {
    model_index % config.reoptimize_every == 0
}

/// Runs the full sequential loop against an in-process oracle.
///
/// The oracle receives each queried point and the number of prior queries.
/// Test points are never queried and never leave the held-out set.
pub fn run_al_loop<F>(
    space: &DesignSpace,
    mut oracle: F,
    config: &AlConfig,
    test_set: &[(DesignPoint, f64)],
    seed: u64,
) -> Result<CampaignTrace>
where
    F: FnMut(&DesignPoint, u64) -> Result<BeadGeometry>,
{
    config.validate()?;
    let held_out: BTreeSet<DesignPoint> = test_set.iter().map(|(p, _)| p.clone()).collect();
    let init = sampling::grid_initializer(space, config.init_samples, seed, config.lhs_restarts)?;
    let mut trace = CampaignTrace {
        runs: Vec::new(),
        entries: Vec::new(),
        stop: StopReason::Completed,
    };
    let mut taken = held_out.clone();

    let mut query = |p: &DesignPoint, trace: &mut CampaignTrace| -> Result<bool> {
        debug_assert!(!held_out.contains(p));
        match oracle(p, trace.runs.len() as u64) {
            Ok(g) => {
                let y = composite_response(&g)?.value();
                trace.runs.push(ObservedRun {
                    point: p.clone(),
                    geometry: g,
                    y,
                });
                Ok(true)
            }
            Err(e) => {
                trace.stop = StopReason::Paused {
                    reason: e.to_string(),
                };
                Ok(false)
            }
        }
    };

    for p in init.snapped.as_deref().unwrap_or_default() {
        if held_out.contains(p) {
            return Err(Error::Infeasible(format!(
                "initial point {p} collides with the test set"
            )));
        }
        taken.insert(p.clone());
        if !query(p, &mut trace)? {
            return Ok(trace);
        }
    }

    let mut params: Option<KernelParams> = None;
    for iteration in 0..=config.max_iterations {
        let fit = fit_surrogate(
            space,
            &trace.observed(),
            params,
            reoptimize_at(config, iteration),
            &config.search,
        )?;
        params = Some(fit.params);
        let (metrics, _) = evaluate_surrogate(&fit.model, space, test_set)?;
        trace.entries.push(TraceEntry {
            iteration,
            training_size: trace.runs.len(),
            metrics,
            params: Some(fit.params),
            log_marginal_likelihood: Some(fit.model.log_marginal_likelihood()),
            cv_rmse: fit.report.and_then(|r| r.cv_rmse),
        });
        if iteration == config.max_iterations {
            break;
        }
        let pool = candidate_pool(space, &taken);
        if pool.is_empty() {
            trace.stop = StopReason::PoolExhausted;
            break;
        }
        let choice = acquire(&fit.model, &pool, space)?;
        taken.insert(choice.chosen.clone());
        if !query(&choice.chosen, &mut trace)? {
            return Ok(trace);
        }
    }
    Ok(trace)
}
