//! Evaluation of a scene against a dataset, and the training log format.

use motionfield_core::fit::{evaluate_losses, model_rank, per_point_rmse, residual_sum_squares, FitConfig, LogRecord};
use motionfield_core::testkit::svd_rank_residual;
use motionfield_core::TrajectoryDataset;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_file::{Losses, SceneFile};

/// Equal-width bins of the second/first coefficient-magnitude ratio over
/// `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseStats {
    pub mean: f64,
    pub max: f64,
    pub per_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceStats {
    /// Counts per ratio bin; the last bin includes 1.
    pub histogram: Vec<usize>,
    /// Points whose coefficients are all zero.
    pub zero_rows: usize,
    /// Fraction of nonzero rows with ratio below 0.1.
    pub fraction_below_0_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    /// Largest centered-trajectory rank the model can express.
    pub model_rank: usize,
    /// Best residual energy of any approximation of that rank.
    pub svd_bound: f64,
    pub model_residual: f64,
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_points: usize,
    pub num_frames: usize,
    pub rmse: RmseStats,
    /// Unweighted loss terms, with the total under default weights.
    pub losses: Losses,
    pub dominance: DominanceStats,
    /// Absent when the dataset has missing observations.
    pub rank: Option<RankStats>,
}

pub fn evaluate(scene: &SceneFile, dataset: &TrajectoryDataset) -> Result<EvalReport> {
    let (cloud, basis) = (&scene.cloud, &scene.basis);
    if cloud.len() != dataset.num_points() {
        return Err(Error::invalid(format!(
            "scene has {} points but the dataset has {}",
            cloud.len(),
            dataset.num_points()
        )));
    }
    if cloud.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty scene"));
    }
    let per_point = per_point_rmse(cloud, basis, dataset)?;
    let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
    let max = per_point.iter().copied().fold(0.0, f64::max);
    let config = FitConfig::default();
    let losses = Losses::from(&evaluate_losses(cloud, basis, dataset, &config)?);

    let c = &cloud.coefficients;
    let mut histogram = vec![0; HISTOGRAM_BINS];
    let (mut zero_rows, mut below) = (0, 0);
    for i in 0..cloud.len() {
        match c.dominance_ratio(i) {
            Some(r) => {
                histogram[((r * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
                below += usize::from(r < 0.1);
            }
            None => zero_rows += 1,
        }
    }
    let nonzero = cloud.len() - zero_rows;
    let fraction_below_0_1 = if nonzero == 0 { 0.0 } else { below as f64 / nonzero as f64 };

    let rank = if dataset.is_fully_observed() {
        let rank = model_rank(c.layout(), c.num_basis());
        let svd_bound = svd_rank_residual(dataset)?.residual(rank);
        let model_residual = residual_sum_squares(cloud, basis, dataset)?;
        Some(RankStats { model_rank: rank, svd_bound, model_residual, bound_holds: svd_bound <= model_residual + 1e-9 })
    } else {
        None
    };
    Ok(EvalReport {
        num_points: cloud.len(),
        num_frames: dataset.num_frames(),
        rmse: RmseStats { mean, max, per_point },
        losses,
        dominance: DominanceStats { histogram, zero_rows, fraction_below_0_1 },
        rank,
    })
}

/// One line of the newline-delimited JSON training log. The last line of a
/// completed fit has `kind` `final` and carries `final_rmse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub kind: String,
    pub iteration: usize,
    pub reconstruction: f64,
    pub l1: f64,
    pub sparsity: f64,
    pub rigidity: f64,
    pub total: f64,
    pub lr_basis: f64,
    pub lr_coefficients: f64,
    pub lr_means: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_rmse: Option<f64>,
}

impl LogLine {
    pub fn step(r: &LogRecord) -> Self {
        let l = &r.losses;
        Self {
            kind: "step".into(),
            iteration: r.iteration,
            reconstruction: l.reconstruction,
            l1: l.l1,
            sparsity: l.sparsity,
            rigidity: l.rigidity,
            total: l.total,
            lr_basis: r.lr_basis,
            lr_coefficients: r.lr_coefficients,
            lr_means: r.lr_means,
            final_rmse: None,
        }
    }
}

/// The full log as NDJSON: every step, then the final summary.
pub fn log_ndjson(log: &[LogRecord], final_losses: &Losses, final_rmse: f64) -> String {
    let mut out = String::new();
    for r in log {
        out.push_str(&serde_json::to_string(&LogLine::step(r)).expect("log line serializes"));
        out.push('\n');
    }
    let last = log.last();
    let summary = LogLine {
        kind: "final".into(),
        iteration: last.map_or(0, |r| r.iteration + 1),
        reconstruction: final_losses.reconstruction,
        l1: final_losses.l1,
        sparsity: final_losses.sparsity,
        rigidity: final_losses.rigidity,
        total: final_losses.total,
        lr_basis: last.map_or(0.0, |r| r.lr_basis),
        lr_coefficients: last.map_or(0.0, |r| r.lr_coefficients),
        lr_means: last.map_or(0.0, |r| r.lr_means),
        final_rmse: Some(final_rmse),
    };
    out.push_str(&serde_json::to_string(&summary).expect("log line serializes"));
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use motionfield_core::synth::{bundled_scene, exact_rank_model, generate};
    use motionfield_core::{MotionBasis, TimeDomain};

    #[test]
    fn ground_truth_scene_reports_zero_error_and_a_holding_bound() {
        let spec = bundled_scene("rank3").unwrap();
        let ds = generate(&spec).unwrap();
        let (cloud, basis) = exact_rank_model(&spec).unwrap();
        let scene =
            SceneFile { cloud, basis: MotionBasis::Fourier(basis), domain: ds.domain().clone(), provenance: None };
        let report = evaluate(&scene, &ds).unwrap();
        assert!(report.rmse.max < 1e-12, "{}", report.rmse.max);
        let rank = report.rank.unwrap();
        assert!(rank.bound_holds && rank.svd_bound <= rank.model_residual + 1e-9);
        assert_eq!(report.dominance.histogram[0], 150);
        assert_eq!(report.dominance.fraction_below_0_1, 1.0);
    }

    #[test]
    fn mismatched_point_counts_are_rejected() {
        let ds = generate(&bundled_scene("rank1").unwrap()).unwrap();
        let (cloud, basis) = exact_rank_model(&bundled_scene("rank3").unwrap()).unwrap();
        let scene = SceneFile {
            cloud,
            basis: MotionBasis::Fourier(basis),
            domain: TimeDomain::uniform(1.0, 2).unwrap(),
            provenance: None,
        };
        assert!(evaluate(&scene, &ds).is_err());
    }

    #[test]
    fn log_lines_parse_back() {
        let text =
            log_ndjson(&[], &Losses { reconstruction: 1.0, l1: 2.0, sparsity: 3.0, rigidity: 4.0, total: 5.0 }, 0.25);
        let line: LogLine = serde_json::from_str(text.trim()).unwrap();
        assert_eq!((line.kind.as_str(), line.final_rmse), ("final", Some(0.25)));
    }
}
