//! Comparison reports and their CSV exports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::active_learning::TraceEntry;
use crate::campaign::{CampaignState, Strategy};
use crate::design_space::DesignPoint;
use crate::error::{Error, Result};
use crate::response::MetricPair;
use crate::taguchi::{fit_main_effects, FactorAnalysis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityPair {
    pub point: DesignPoint,
    pub predicted_y: f64,
    pub actual_y: f64,
}

impl ParityPair {
    /// Predicted minus actual; negative means underprediction.
    pub fn signed_error(&self) -> f64 {
        self.predicted_y - self.actual_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub campaign_id: String,
    pub strategy: Strategy,
    pub training_size: usize,
    pub metrics: MetricPair,
    pub mean_signed_error: f64,
    pub parity: Vec<ParityPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_curve: Option<Vec<TraceEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_analysis: Option<NamedFactorAnalysis>,
}

/// Mean-of-means with the factor names and level values attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFactorAnalysis {
    pub factors: Vec<String>,
    pub level_values: Vec<Vec<f64>>,
    pub analysis: FactorAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test_set: Vec<DesignPoint>,
    pub sections: Vec<StrategyReport>,
    /// Smallest GPR training size whose test RMSE beats the final Taguchi RMSE.
    pub crossover_size: Option<usize>,
}

impl ComparisonReport {
    pub fn section(&self, strategy: Strategy) -> Option<&StrategyReport> {
        self.sections.iter().find(|s| s.strategy == strategy)
    }
}

fn strategy_report(state: &CampaignState) -> Result<StrategyReport> {
    let (metrics, pred, actual) = state.predict_test_set()?;
    let parity: Vec<ParityPair> = state
        .test_points()
        .into_iter()
        .zip(pred.iter().zip(&actual))
        .map(|(point, (&p, &a))| ParityPair {
            point,
            predicted_y: p,
            actual_y: a,
        })
        .collect();
    let mean_signed_error =
        parity.iter().map(ParityPair::signed_error).sum::<f64>() / parity.len() as f64;
    let factor_analysis = match state.strategy {
        Strategy::Taguchi => {
            let pts: Vec<DesignPoint> = state.runs.iter().map(|r| r.point.clone()).collect();
            let ys: Vec<f64> = state.runs.iter().map(|r| r.y).collect();
            let model = fit_main_effects(&state.space, &pts, &ys)?;
            Some(NamedFactorAnalysis {
                factors: state.space.factors.iter().map(|f| f.name.clone()).collect(),
                level_values: state.space.factors.iter().map(|f| f.levels.clone()).collect(),
                analysis: model.analyze(),
            })
        }
        Strategy::GprAl => None,
    };
    Ok(StrategyReport {
        campaign_id: state.id.clone(),
        strategy: state.strategy,
        training_size: state.runs.len(),
        metrics,
        mean_signed_error,
        parity,
        learning_curve: (state.strategy == Strategy::GprAl).then(|| state.trace.clone()),
        factor_analysis,
    })
}

/// Report covering a single campaign.
pub fn report_single(state: &CampaignState) -> Result<ComparisonReport> {
    Ok(ComparisonReport {
        test_set: state.test_points(),
        sections: vec![strategy_report(state)?],
        crossover_size: None,
    })
}

/// Side-by-side report of two campaigns sharing space, oracle and test set.
pub fn compare(first: &CampaignState, second: &CampaignState) -> Result<ComparisonReport> {
    if first.space != second.space {
        return Err(Error::validation("campaigns use different design spaces"));
    }
    if first.oracle != second.oracle {
        return Err(Error::validation("campaigns use different oracle specs"));
    }
    if first.test_points() != second.test_points() {
        return Err(Error::validation("campaigns use different test sets"));
    }
    let sections = vec![strategy_report(first)?, strategy_report(second)?];
    let crossover_size = crossover(&sections);
    Ok(ComparisonReport {
        test_set: first.test_points(),
        sections,
        crossover_size,
    })
}

fn crossover(sections: &[StrategyReport]) -> Option<usize> {
    let taguchi = sections.iter().find(|s| s.strategy == Strategy::Taguchi)?;
    let gpr = sections.iter().find(|s| s.strategy == Strategy::GprAl)?;
    gpr.learning_curve
        .as_ref()?
        .iter()
        .find(|e| e.metrics.rmse < taguchi.metrics.rmse)
        .map(|e| e.training_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    Parity,
    LearningCurve,
    ErrorDistribution,
    MeanOfMeans,
}

impl ExportKind {
    pub const ALL: [ExportKind; 4] = [
        ExportKind::Parity,
        ExportKind::LearningCurve,
        ExportKind::ErrorDistribution,
        ExportKind::MeanOfMeans,
    ];

    pub fn header(self) -> &'static [&'static str] {
        match self {
            ExportKind::Parity => &["strategy", "point", "predicted_y", "actual_y"],
            ExportKind::LearningCurve => &["iteration", "training_size", "rmse", "r2"],
            ExportKind::ErrorDistribution => &["strategy", "point", "signed_error"],
            ExportKind::MeanOfMeans => &["factor", "level_value", "mean_y"],
        }
    }
}

impl fmt::Display for ExportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportKind::Parity => "parity",
            ExportKind::LearningCurve => "learning_curve",
            ExportKind::ErrorDistribution => "error_distribution",
            ExportKind::MeanOfMeans => "mean_of_means",
        })
    }
}

impl FromStr for ExportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "parity" => Ok(ExportKind::Parity),
            "learning_curve" => Ok(ExportKind::LearningCurve),
            "error_distribution" => Ok(ExportKind::ErrorDistribution),
            "mean_of_means" => Ok(ExportKind::MeanOfMeans),
            _ => Err(Error::validation(format!(
                "unknown export kind '{s}' (parity, learning_curve, error_distribution, mean_of_means)"
            ))),
        }
    }
}

/// RFC-4180 CSV with a header row. Floats use the shortest round-trip form.
pub fn export_csv(report: &ComparisonReport, kind: ExportKind) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(kind.header())?;
    match kind {
        ExportKind::Parity => {
            for s in &report.sections {
                for p in &s.parity {
                    w.write_record([
                        s.strategy.to_string(),
                        p.point.to_string(),
                        p.predicted_y.to_string(),
                        p.actual_y.to_string(),
                    ])?;
                }
            }
        }
        ExportKind::ErrorDistribution => {
            for s in &report.sections {
                for p in &s.parity {
                    w.write_record([
                        s.strategy.to_string(),
                        p.point.to_string(),
                        p.signed_error().to_string(),
                    ])?;
                }
            }
        }
        ExportKind::LearningCurve => {
            let curve = report
                .sections
                .iter()
                .find_map(|s| s.learning_curve.as_ref())
                .ok_or_else(|| Error::validation("report has no learning curve section"))?;
            for e in curve {
                w.write_record([
                    e.iteration.to_string(),
                    e.training_size.to_string(),
                    e.metrics.rmse.to_string(),
                    e.metrics.r2.to_string(),
                ])?;
            }
        }
        ExportKind::MeanOfMeans => {
            let fa = report
                .sections
                .iter()
                .find_map(|s| s.factor_analysis.as_ref())
                .ok_or_else(|| Error::validation("report has no mean-of-means section"))?;
            for (k, name) in fa.factors.iter().enumerate() {
                for (v, mean) in fa.level_values[k].iter().zip(&fa.analysis.level_means[k]) {
                    w.write_record([name.clone(), v.to_string(), mean.to_string()])?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
