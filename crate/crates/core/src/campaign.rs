//! Campaign lifecycle: planning, run log, held-out evaluation, comparison
//! reports and persistence.
//!
//! A campaign owns one strategy over one design space. Suggestions come from
//! the fixed orthogonal-array plan (Taguchi) or from the LHS initializer
//! followed by uncertainty sampling (GPR). Synthetic oracles execute
//! suggestions immediately; manual oracles park them as a pending measurement
//! until an operator records the result.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::active_learning::{
    self, acquire, candidate_pool, evaluate_surrogate, fit_surrogate, reoptimize_at, AlConfig,
    TraceEntry,
};
use crate::design_space::{DesignPoint, DesignSpace};
use crate::error::{Error, Result};
use crate::gpr::KernelParams;
use crate::oracle::{query_synthetic, OracleSpec, PendingMeasurement};
use crate::response::{composite_response, metric_pair, BeadGeometry, MetricPair};
use crate::sampling;
use crate::seed;
use crate::taguchi::{fit_main_effects, OrthogonalArray};

pub const SCHEMA_VERSION: u32 = 1;

/// Held-out test cases per campaign.
pub const DEFAULT_TEST_SIZE: usize = 15;

/// Query indices at or above this value belong to test-set measurements.
pub const TEST_QUERY_OFFSET: u64 = 1 << 32;

const LHS_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const ORACLE_STREAM: u64 = 3;

/// Seed for the synthetic oracle derived from a campaign seed.
pub fn oracle_seed(seed: u64) -> u64 {
    seed::derive(seed, ORACLE_STREAM)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Taguchi,
    GprAl,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Taguchi => "taguchi",
            Strategy::GprAl => "gpr_al",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taguchi" => Ok(Strategy::Taguchi),
            "gpr_al" | "gpr-al" => Ok(Strategy::GprAl),
            other => Err(Error::validation(format!(
                "unknown strategy '{other}' (expected taguchi or gpr-al)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Created,
    Running,
    AwaitingMeasurement,
    Complete,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Created => "created",
            Status::Running => "running",
            Status::AwaitingMeasurement => "awaiting_measurement",
            Status::Complete => "complete",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub point: DesignPoint,
    pub geometry: BeadGeometry,
    pub y: f64,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub point: DesignPoint,
    pub geometry: Option<BeadGeometry>,
    pub y: Option<f64>,
}

/// Hyperparameters of the surrogate fitted at a given training size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCache {
    pub training_size: usize,
    pub params: KernelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub schema_version: u32,
    pub id: String,
    pub seed: u64,
    pub space: DesignSpace,
    pub strategy: Strategy,
    pub oracle: OracleSpec,
    /// GPR campaigns only.
    pub config: Option<AlConfig>,
    /// Orthogonal-array rows (Taguchi) or the LHS initializer (GPR).
    pub plan: Vec<DesignPoint>,
    pub runs: Vec<RunRecord>,
    pub test_set: Vec<TestCase>,
    pub trace: Vec<TraceEntry>,
    pub status: Status,
    pub pending: Option<PendingMeasurement>,
    pub surrogate: Option<SurrogateCache>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Suggestion {
    Point(DesignPoint),
    Complete,
}

#[derive(Debug, Clone)]
pub struct InitOptions {
    pub id: Option<String>,
    pub test_size: usize,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            id: None,
            test_size: DEFAULT_TEST_SIZE,
        }
    }
}

/// Fixed epoch for the logical clock of synthetic campaigns.
fn logical_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()
}

/// Builds a campaign. The held-out test set avoids both the orthogonal-array
/// rows and the LHS initializer for `seed`, so Taguchi and GPR campaigns
/// created with the same seed share their test set.
pub fn init_campaign(
    space: DesignSpace,
    strategy: Strategy,
    oracle: OracleSpec,
    config: AlConfig,
    seed: u64,
    options: InitOptions,
) -> Result<CampaignState> {
    space.validate()?;
    oracle.validate()?;
    config.validate()?;

    let rows = OrthogonalArray::for_space(&space).map(|oa| oa.design_points());
    let init = sampling::grid_initializer(
        &space,
        config.init_samples,
        seed::derive(seed, LHS_STREAM),
        config.lhs_restarts,
    )?
    .snapped
    .unwrap_or_default();

    let mut excluded: BTreeSet<DesignPoint> = init.iter().cloned().collect();
    let plan = match (strategy, rows) {
        (Strategy::Taguchi, rows) => {
            let rows = rows?;
            excluded.extend(rows.iter().cloned());
            rows
        }
        (Strategy::GprAl, Ok(rows)) => {
            excluded.extend(rows);
            init
        }
        (Strategy::GprAl, Err(_)) => init,
    };
    let test_points = space
        .select_test_set(options.test_size, seed::derive(seed, TEST_STREAM), &excluded)?;

    let mut state = CampaignState {
        schema_version: SCHEMA_VERSION,
        id: options.id.unwrap_or_else(|| format!("{strategy}-{seed}")),
        seed,
        space,
        strategy,
        oracle,
        config: (strategy == Strategy::GprAl).then_some(config),
        plan,
        runs: Vec::new(),
        test_set: test_points
            .into_iter()
            .map(|point| TestCase {
                point,
                geometry: None,
                y: None,
            })
            .collect(),
        trace: Vec::new(),
        status: Status::Created,
        pending: None,
        surrogate: None,
    };
    if let OracleSpec::Synthetic(spec) = &state.oracle {
        for (i, case) in state.test_set.iter_mut().enumerate() {
            let x = state.space.to_real(&case.point)?;
            let g = query_synthetic(spec, &state.space, &x, TEST_QUERY_OFFSET + i as u64, spec.noisy_test)?;
            case.y = Some(composite_response(&g)?.value());
            case.geometry = Some(g);
        }
    }
    Ok(state)
}

impl CampaignState {
    fn al_config(&self) -> AlConfig {
        self.config.clone().unwrap_or_default()
    }

    /// Synthetic campaigns use a logical clock (one second per run) so replays
    /// are byte-identical; manual campaigns use wall time.
    fn timestamp(&self) -> DateTime<Utc> {
        if self.oracle.is_manual() {
            Utc::now()
        } else {
            logical_epoch() + chrono::Duration::seconds(self.runs.len() as i64)
        }
    }

    fn transition(&mut self, to: Status) -> Result<()> {
        use Status::*;
        let ok = matches!(
            (self.status, to),
            (Created, Running)
                | (Running, AwaitingMeasurement)
                | (AwaitingMeasurement, Running)
                | (Running, Complete)
        ) || self.status == to;
        if !ok {
            return Err(Error::Conflict(format!(
                "illegal status transition {:?} -> {:?}",
                self.status, to
            )));
        }
        self.status = to;
        Ok(())
    }

    pub fn run_points(&self) -> BTreeSet<DesignPoint> {
        self.runs.iter().map(|r| r.point.clone()).collect()
    }

    pub fn test_points(&self) -> Vec<DesignPoint> {
        self.test_set.iter().map(|c| c.point.clone()).collect()
    }

    pub fn observed(&self) -> Vec<(DesignPoint, f64)> {
        self.runs.iter().map(|r| (r.point.clone(), r.y)).collect()
    }

    /// Test cases with `(point, y)`, or `None` until every case is measured.
    pub fn measured_test_set(&self) -> Option<Vec<(DesignPoint, f64)>> {
        self.test_set
            .iter()
            .map(|c| c.y.map(|y| (c.point.clone(), y)))
            .collect()
    }

    fn target_size(&self) -> usize {
        match self.strategy {
            Strategy::Taguchi => self.plan.len(),
            Strategy::GprAl => self.al_config().final_training_size(),
        }
    }

    fn surrogate_params_for(
        &self,
        observed: &[(DesignPoint, f64)],
        previous: Option<SurrogateCache>,
    ) -> Result<active_learning::SurrogateFit> {
        let config = self.al_config();
        let n = observed.len();
        if let Some(c) = previous.filter(|c| c.training_size == n) {
            return fit_surrogate(&self.space, observed, Some(c.params), false, &config.search);
        }
        let model_index = n.saturating_sub(config.init_samples);
        fit_surrogate(
            &self.space,
            observed,
            previous.map(|c| c.params),
            reoptimize_at(&config, model_index),
            &config.search,
        )
    }

    /// Next point to run, without side effects on the run log.
    fn plan_next(&mut self) -> Result<Option<DesignPoint>> {
        let done = self.run_points();
        if let Some(p) = self.plan.iter().find(|p| !done.contains(p)) {
            return Ok(Some(p.clone()));
        }
        if self.strategy == Strategy::Taguchi || self.runs.len() >= self.target_size() {
            return Ok(None);
        }
        let mut taken = done;
        taken.extend(self.test_points());
        let pool = candidate_pool(&self.space, &taken);
        if pool.is_empty() {
            return Ok(None);
        }
        let observed = self.observed();
        let fit = self.surrogate_params_for(&observed, self.surrogate)?;
        self.surrogate = Some(SurrogateCache {
            training_size: observed.len(),
            params: fit.params,
        });
        Ok(Some(acquire(&fit.model, &pool, &self.space)?.chosen))
    }

    /// Advances the campaign by one suggestion. Synthetic oracles execute it
    /// immediately; manual ones mark it pending.
    pub fn next_suggestion(&mut self) -> Result<Suggestion> {
        match self.status {
            Status::Complete => return Ok(Suggestion::Complete),
            Status::AwaitingMeasurement => {
                return Err(Error::Conflict(
                    "a measurement is already pending".into(),
                ))
            }
            _ => {}
        }
        let Some(point) = self.plan_next()? else {
            self.transition(Status::Running)?;
            self.transition(Status::Complete)?;
            return Ok(Suggestion::Complete);
        };
        self.query_manual(point.clone())?;
        if let OracleSpec::Synthetic(spec) = self.oracle.clone() {
            let x = self.space.to_real(&point)?;
            let g = query_synthetic(&spec, &self.space, &x, self.runs.len() as u64, true)?;
            self.record_result(&point, g)?;
        }
        Ok(Suggestion::Point(point))
    }

    /// Like [`next_suggestion`](Self::next_suggestion) but returns the
    /// outstanding pending point instead of failing, so repeated calls agree.
    pub fn suggest(&mut self) -> Result<Suggestion> {
        if let Some(p) = &self.pending {
            return Ok(Suggestion::Point(p.point.clone()));
        }
        self.next_suggestion()
    }

    /// Marks `point` as awaiting measurement.
    pub fn query_manual(&mut self, point: DesignPoint) -> Result<PendingMeasurement> {
        if self.pending.is_some() {
            return Err(Error::Conflict("a measurement is already pending".into()));
        }
        self.space.check_point(&point)?;
        let pending = PendingMeasurement {
            point,
            requested_at: self.timestamp(),
        };
        self.transition(Status::Running)?;
        self.transition(Status::AwaitingMeasurement)?;
        self.pending = Some(pending.clone());
        Ok(pending)
    }

    /// Runs a synthetic campaign until no suggestions remain.
    pub fn run_to_completion(&mut self) -> Result<()> {
        if self.oracle.is_manual() {
            return Err(Error::Unsupported(
                "manual campaigns cannot run unattended".into(),
            ));
        }
        while let Suggestion::Point(_) = self.next_suggestion()? {}
        Ok(())
    }

    /// Records a measurement against a run suggestion or a test case.
    pub fn record_result(&mut self, point: &DesignPoint, geometry: BeadGeometry) -> Result<()> {
        geometry.validate()?;
        self.space.check_point(point)?;
        let y = composite_response(&geometry)?.value();

        if let Some(idx) = self.test_set.iter().position(|c| &c.point == point) {
            if self.test_set[idx].y.is_some() {
                return Err(Error::validation(format!(
                    "test point {point} is already measured"
                )));
            }
            self.test_set[idx].geometry = Some(geometry);
            self.test_set[idx].y = Some(y);
            if self.measured_test_set().is_some() {
                self.rebuild_trace()?;
            }
            return Ok(());
        }

        if self.status == Status::Complete {
            return Err(Error::Conflict("campaign is complete".into()));
        }
        if self.run_points().contains(point) {
            return Err(Error::validation(format!("point {point} was already run")));
        }
        let is_pending = self.pending.as_ref().map(|p| &p.point) == Some(point);
        match self.strategy {
            Strategy::Taguchi => {
                if !self.plan.contains(point) {
                    return Err(Error::validation(format!(
                        "point {point} is not in the taguchi plan"
                    )));
                }
            }
            Strategy::GprAl => {
                if !is_pending {
                    return Err(Error::validation(format!(
                        "point {point} is not the pending suggestion"
                    )));
                }
            }
        }

        let timestamp = self.timestamp();
        self.runs.push(RunRecord {
            point: point.clone(),
            geometry,
            y,
            timestamp,
        });
        if is_pending {
            self.pending = None;
            self.transition(Status::Running)?;
        } else if self.status == Status::Created {
            self.transition(Status::Running)?;
        }

        if let Some(entry) = self.evaluate_current()? {
            self.trace.push(entry);
        }
        if self.pending.is_none() && self.runs.len() >= self.target_size() {
            self.transition(Status::Complete)?;
        }
        Ok(())
    }

    /// Trace entry for the current run log, if the test set is measured and
    /// the model can be fitted.
    fn evaluate_current(&mut self) -> Result<Option<TraceEntry>> {
        let observed = self.observed();
        let entry = self.evaluate_prefix(&observed, self.surrogate)?;
        if let Some((entry, cache)) = entry {
            if cache.is_some() {
                self.surrogate = cache;
            }
            return Ok(Some(entry));
        }
        Ok(None)
    }

    fn evaluate_prefix(
        &self,
        observed: &[(DesignPoint, f64)],
        previous: Option<SurrogateCache>,
    ) -> Result<Option<(TraceEntry, Option<SurrogateCache>)>> {
        let Some(test) = self.measured_test_set() else {
            return Ok(None);
        };
        let n = observed.len();
        match self.strategy {
            Strategy::Taguchi => {
                let points: Vec<DesignPoint> = observed.iter().map(|(p, _)| p.clone()).collect();
                let ys: Vec<f64> = observed.iter().map(|(_, y)| *y).collect();
                let model = match fit_main_effects(&self.space, &points, &ys) {
                    Ok(m) => m,
                    Err(Error::MissingCoverage { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let pred = test
                    .iter()
                    .map(|(p, _)| model.predict(p))
                    .collect::<Result<Vec<_>>>()?;
                let actual: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
                let entry = TraceEntry {
                    iteration: n,
                    training_size: n,
                    metrics: metric_pair(&pred, &actual)?,
                    params: None,
                    log_marginal_likelihood: None,
                    cv_rmse: None,
                };
                Ok(Some((entry, None)))
            }
            Strategy::GprAl => {
                let init = self.al_config().init_samples;
                if n < init {
                    return Ok(None);
                }
                let fit = self.surrogate_params_for(observed, previous)?;
                let (metrics, _) = evaluate_surrogate(&fit.model, &self.space, &test)?;
                let entry = TraceEntry {
                    iteration: n - init,
                    training_size: n,
                    metrics,
                    params: Some(fit.params),
                    log_marginal_likelihood: Some(fit.model.log_marginal_likelihood()),
                    cv_rmse: fit.report.and_then(|r| r.cv_rmse),
                };
                Ok(Some((
                    entry,
                    Some(SurrogateCache {
                        training_size: n,
                        params: fit.params,
                    }),
                )))
            }
        }
    }

    /// Recomputes the trace over every prefix of the run log.
    fn rebuild_trace(&mut self) -> Result<()> {
        let observed = self.observed();
        let mut trace = Vec::new();
        let mut cache = None;
        for k in 1..=observed.len() {
            if let Some((entry, c)) = self.evaluate_prefix(&observed[..k], cache)? {
                trace.push(entry);
                if c.is_some() {
                    cache = c;
                }
            }
        }
        self.trace = trace;
        if cache.is_some() {
            self.surrogate = cache;
        }
        Ok(())
    }

    /// Test-set metrics of the model trained on all runs.
    pub fn evaluate(&self) -> Result<MetricPair> {
        Ok(self.predict_test_set()?.0)
    }

    /// Metrics together with per-test-point predictions and actuals.
    pub fn predict_test_set(&self) -> Result<(MetricPair, Vec<f64>, Vec<f64>)> {
        let test = self.measured_test_set().ok_or_else(|| {
            Error::NotReady("test set is not fully measured".into())
        })?;
        let pred = self.predict_points(&test.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>())?;
        let actual: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
        Ok((metric_pair(&pred, &actual)?, pred, actual))
    }

    /// Predictions of the model trained on all runs.
    pub fn predict_points(&self, points: &[DesignPoint]) -> Result<Vec<f64>> {
        let observed = self.observed();
        if observed.is_empty() {
            return Err(Error::NotReady("no runs recorded".into()));
        }
        match self.strategy {
            Strategy::Taguchi => {
                let pts: Vec<DesignPoint> = observed.iter().map(|(p, _)| p.clone()).collect();
                let ys: Vec<f64> = observed.iter().map(|(_, y)| *y).collect();
                let model = fit_main_effects(&self.space, &pts, &ys)?;
                points.iter().map(|p| model.predict(p)).collect()
            }
            Strategy::GprAl => {
                let fit = self.surrogate_params_for(&observed, self.surrogate)?;
                points
                    .iter()
                    .map(|p| Ok(fit.model.predict(self.space.to_real(p)?.values())?.0))
                    .collect()
            }
        }
    }

    /// Noise-free metrics over every grid point not used for training.
    /// Synthetic oracles only.
    pub fn evaluate_remaining(&self) -> Result<MetricPair> {
        let OracleSpec::Synthetic(spec) = &self.oracle else {
            return Err(Error::Unsupported(
                "ground truth for the whole grid needs a synthetic oracle".into(),
            ));
        };
        let done = self.run_points();
        let points: Vec<DesignPoint> = self
            .space
            .enumerate_grid()
            .into_iter()
            .filter(|p| !done.contains(p))
            .collect();
        let actual = points
            .iter()
            .map(|p| {
                let g = query_synthetic(spec, &self.space, &self.space.to_real(p)?, 0, false)?;
                Ok(composite_response(&g)?.value())
            })
            .collect::<Result<Vec<f64>>>()?;
        metric_pair(&self.predict_points(&points)?, &actual)
    }

    /// Checks every persisted invariant.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                supported: SCHEMA_VERSION.to_string(),
            });
        }
        self.space.validate()?;
        self.oracle.validate()?;
        if let Some(c) = &self.config {
            c.validate()?;
        }
        if self.strategy == Strategy::GprAl && self.config.is_none() {
            return Err(Error::validation("gpr_al campaign is missing its config"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.runs {
            self.space.check_point(&r.point)?;
            r.geometry.validate()?;
            if !seen.insert(r.point.clone()) {
                return Err(Error::validation(format!("duplicate run point {}", r.point)));
            }
        }
        let mut tests = BTreeSet::new();
        for c in &self.test_set {
            self.space.check_point(&c.point)?;
            if let Some(g) = &c.geometry {
                g.validate()?;
            }
            if c.geometry.is_some() != c.y.is_some() {
                return Err(Error::validation(format!(
                    "test point {} has inconsistent measurement fields",
                    c.point
                )));
            }
            if !tests.insert(c.point.clone()) {
                return Err(Error::validation(format!("duplicate test point {}", c.point)));
            }
        }
        if let Some(p) = seen.intersection(&tests).next() {
            return Err(Error::validation(format!("run point {p} is also a test point")));
        }
        if let Some(p) = self.plan.iter().find(|p| tests.contains(p)) {
            return Err(Error::validation(format!("planned point {p} is also a test point")));
        }
        match (&self.pending, self.status) {
            (Some(p), Status::AwaitingMeasurement) => {
                self.space.check_point(&p.point)?;
                if seen.contains(&p.point) || tests.contains(&p.point) {
                    return Err(Error::validation(format!(
                        "pending point {} is already used",
                        p.point
                    )));
                }
            }
            (None, Status::AwaitingMeasurement) => {
                return Err(Error::validation("status awaiting_measurement without a pending point"))
            }
            (Some(_), _) => return Err(Error::validation("pending point outside awaiting_measurement")),
            (None, _) => {}
        }
        Ok(())
    }

    /// Canonical JSON: fixed key order, floats with 17 significant digits.
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter::new());
        self.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::validation("campaign file has no schema_version"))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: version.min(u64::from(u32::MAX)) as u32,
                supported: SCHEMA_VERSION.to_string(),
            });
        }
        let state: CampaignState = serde_json::from_value(raw)?;
        state.validate()?;
        Ok(state)
    }

    /// Writes the canonical form atomically (temp file in the same directory, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_canonical_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Exclusive advisory lock on `<path>.lock`, held until dropped.
#[derive(Debug)]
pub struct FileLock {
    _file: std::fs::File,
}

impl FileLock {
    /// Blocks until the lock for `path` is acquired.
    pub fn acquire(path: &Path) -> Result<Self> {
        let file = Self::open(path)?;
        file.lock()?;
        Ok(FileLock { _file: file })
    }

    /// Fails with a conflict instead of blocking.
    pub fn try_acquire(path: &Path) -> Result<Self> {
        let file = Self::open(path)?;
        match file.try_lock() {
            Ok(()) => Ok(FileLock { _file: file }),
            Err(std::fs::TryLockError::WouldBlock) => Err(Error::Conflict(format!(
                "{} is locked by another process",
                path.display()
            ))),
            Err(std::fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    fn open(path: &Path) -> Result<std::fs::File> {
        let mut name = path.as_os_str().to_owned();
        name.push(".lock");
        Ok(std::fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(name)?)
    }
}

/// Pretty JSON whose floats always carry 17 significant digits.
struct CanonicalFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl CanonicalFormatter {
    fn new() -> Self {
        CanonicalFormatter {
            inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}
