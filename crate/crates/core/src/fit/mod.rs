//! Fitting a cloud and motion basis to observed point trajectories.
//!
//! Training runs in two stages: a warmup in which only canonical means move,
//! then joint optimization of means, motion coefficients and basis
//! parameters. L1 and sparsity switch on after a further delay; L1 is
//! applied as a proximal step so unused coefficients become exact zeros.
//! An optional prune-and-polish tail hard-zeroes minor coefficient blocks
//! and refits the rest with L1 and sparsity off.

pub mod adam;
pub mod check;
pub mod loss;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use adam::{adam_prox_l1, adam_step, AdamState};
pub use check::{loss_gradients_check, loss_gradients_check_with, GradientCheckOptions, GradientCheckReport};
pub use loss::{loss_l1, loss_recon, loss_rigid, loss_sparsity, ReconLoss, RigidGraph};

use crate::basis::{BasisFamily, FourierBasis, MlpBasis, MlpShape, MotionBasis};
use crate::error::{Error, Result};
use crate::scene::{deform_point_mean, CoefficientLayout, Coefficients, GaussianCloud};
use crate::synth::TrajectoryDataset;

/// Where canonical means start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanInit {
    /// Each point's first observed position.
    FirstObservation,
    /// Uniform in the bounding box of all observations.
    Random,
}

impl MeanInit {
    pub const fn name(self) -> &'static str {
        match self {
            MeanInit::FirstObservation => "first-observation",
            MeanInit::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "first-observation" => Some(MeanInit::FirstObservation),
            "random" => Some(MeanInit::Random),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub family: BasisFamily,
    pub num_basis: usize,
    /// Positional-encoding frequencies of the MLP basis.
    pub freqs: usize,
    pub mlp_width: usize,
    /// Number of hidden layers.
    pub mlp_depth: usize,
    /// `None` picks shared coefficients for the MLP and per-coordinate ones
    /// for the Fourier basis.
    pub layout: Option<CoefficientLayout>,
    pub iterations: usize,
    /// Iterations before coefficients and basis start training.
    pub warmup: usize,
    pub basis_lr_start: f64,
    pub basis_lr_end: f64,
    pub coefficient_lr: f64,
    pub means_lr_start: f64,
    pub means_lr_end: f64,
    pub lambda_l1: f64,
    pub lambda_sparse: f64,
    pub lambda_rigid: f64,
    pub lambda_w: f64,
    pub knn: usize,
    /// Post-warmup iterations before the L1 and sparsity terms switch on.
    pub regularizer_delay: usize,
    /// Apply L1 as a proximal step after each coefficient update instead of
    /// adding its subgradient, which lets unused coefficients reach zero.
    pub proximal_l1: bool,
    /// Keep every MLP basis at unit RMS translation over the training times
    /// by moving its scale into the coefficients.
    pub normalize_basis: bool,
    pub coefficient_init_std: f64,
    pub mean_init: MeanInit,
    /// Blocks whose magnitude is below this fraction of their row maximum
    /// are zeroed and frozen for the last `polish_iterations` iterations,
    /// during which L1 and sparsity no longer apply. Zero turns the tail off.
    pub prune_ratio: Option<f64>,
    pub polish_iterations: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            family: BasisFamily::Mlp,
            num_basis: 10,
            freqs: 26,
            mlp_width: 256,
            mlp_depth: 3,
            layout: None,
            iterations: 30_000,
            warmup: 3_000,
            basis_lr_start: 8e-4,
            basis_lr_end: 8e-6,
            coefficient_lr: 8e-3,
            means_lr_start: 1e-3,
            means_lr_end: 1e-5,
            lambda_l1: 0.1,
            lambda_sparse: 0.1,
            lambda_rigid: 0.05,
            lambda_w: 2000.0,
            knn: 8,
            regularizer_delay: 3_000,
            proximal_l1: true,
            normalize_basis: true,
            coefficient_init_std: 0.01,
            mean_init: MeanInit::FirstObservation,
            prune_ratio: Some(0.1),
            polish_iterations: 3_000,
            checkpoint_every: 100,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Defaults with `iterations` total and warmup, regularizer delay and
    /// polish each a tenth of the run, the default proportions.
    pub fn with_iterations(iterations: usize) -> Self {
        let tenth = iterations / 10;
        Self { iterations, warmup: tenth, regularizer_delay: tenth, polish_iterations: tenth, ..Self::default() }
    }

    pub fn resolved_layout(&self) -> CoefficientLayout {
        self.layout.unwrap_or(match self.family {
            BasisFamily::Mlp => CoefficientLayout::Shared,
            BasisFamily::Fourier => CoefficientLayout::PerCoordinate,
        })
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { l1: self.lambda_l1, sparse: self.lambda_sparse, rigid: self.lambda_rigid }
    }

    pub fn mlp_shape(&self) -> MlpShape {
        MlpShape { freqs: self.freqs, width: self.mlp_width, depth: self.mlp_depth, num_basis: self.num_basis }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_basis == 0 {
            return bad("num_basis must be at least 1".into());
        }
        if self.iterations <= self.warmup {
            return bad(format!("iterations ({}) must exceed warmup ({})", self.iterations, self.warmup));
        }
        for (name, lr) in [
            ("basis_lr_start", self.basis_lr_start),
            ("basis_lr_end", self.basis_lr_end),
            ("coefficient_lr", self.coefficient_lr),
            ("means_lr_start", self.means_lr_start),
            ("means_lr_end", self.means_lr_end),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {lr}"));
            }
        }
        for (name, v) in [
            ("lambda_l1", self.lambda_l1),
            ("lambda_sparse", self.lambda_sparse),
            ("lambda_rigid", self.lambda_rigid),
            ("lambda_w", self.lambda_w),
            ("coefficient_init_std", self.coefficient_init_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if self.knn == 0 {
            return bad("knn must be at least 1".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        if self.family == BasisFamily::Mlp {
            self.mlp_shape().validate()?;
        }
        match self.prune_ratio {
            Some(r) if !(r > 0.0 && r < 1.0) => return bad(format!("prune_ratio must lie in (0, 1), got {r}")),
            Some(_) if self.polish_iterations >= self.iterations - self.warmup => {
                return bad("polish_iterations must be shorter than the post-warmup span".into())
            }
            None if self.polish_iterations != 0 => return bad("polish_iterations needs prune_ratio".into()),
            _ => {}
        }
        Ok(())
    }

    /// Basis learning rate at post-warmup step `s`: geometric from start to
    /// end over the post-warmup span.
    pub fn basis_lr(&self, s: usize) -> f64 {
        geometric(self.basis_lr_start, self.basis_lr_end, s, self.iterations - self.warmup)
    }

    pub fn means_lr(&self, iteration: usize) -> f64 {
        geometric(self.means_lr_start, self.means_lr_end, iteration, self.iterations)
    }
}

fn geometric(start: f64, end: f64, step: usize, span: usize) -> f64 {
    if span <= 1 {
        return start;
    }
    let frac = step.min(span - 1) as f64 / (span - 1) as f64;
    start * libm::pow(end / start, frac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub l1: f64,
    pub sparse: f64,
    pub rigid: f64,
}

/// Loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub reconstruction: f64,
    pub l1: f64,
    pub sparsity: f64,
    pub rigidity: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(reconstruction: f64, l1: f64, sparsity: f64, rigidity: f64, weights: &LossWeights) -> Self {
        let total = reconstruction + weights.l1 * l1 + weights.sparse * sparsity + weights.rigid * rigidity;
        Self { reconstruction, l1, sparsity, rigidity, total }
    }

    pub fn is_finite(&self) -> bool {
        [self.reconstruction, self.l1, self.sparsity, self.rigidity, self.total].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub losses: LossReport,
    /// Zero while the parameter group is frozen.
    pub lr_basis: f64,
    pub lr_coefficients: f64,
    pub lr_means: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Number of completed iterations.
    pub iteration: usize,
    pub cloud: GaussianCloud,
    pub basis: MotionBasis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub cloud: GaussianCloud,
    pub basis: MotionBasis,
    pub log: Vec<LogRecord>,
    /// Losses of the returned model.
    pub final_losses: LossReport,
    pub final_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String, checkpoint: Box<Checkpoint> },
}

/// Effective rank of the centered trajectory matrix any model with this
/// layout and basis count can produce.
pub fn model_rank(layout: CoefficientLayout, num_basis: usize) -> usize {
    match layout {
        CoefficientLayout::Shared => num_basis,
        CoefficientLayout::PerCoordinate => 3 * num_basis,
    }
}

/// `sqrt(mean over observed frames of |pred - obs|^2)` for every point.
pub fn per_point_rmse(cloud: &GaussianCloud, basis: &MotionBasis, dataset: &TrajectoryDataset) -> Result<Vec<f64>> {
    let (sums, counts) = squared_errors(cloud, basis, dataset)?;
    Ok(sums.iter().zip(&counts).map(|(s, c)| if *c == 0 { 0.0 } else { libm::sqrt(s / *c as f64) }).collect())
}

/// Mean of [`per_point_rmse`] over all points.
pub fn mean_rmse(cloud: &GaussianCloud, basis: &MotionBasis, dataset: &TrajectoryDataset) -> Result<f64> {
    let rmse = per_point_rmse(cloud, basis, dataset)?;
    if rmse.is_empty() {
        return Err(Error::UndefinedLoss("no points"));
    }
    Ok(rmse.iter().sum::<f64>() / rmse.len() as f64)
}

/// Sum of squared position errors over all observed entries.
pub fn residual_sum_squares(cloud: &GaussianCloud, basis: &MotionBasis, dataset: &TrajectoryDataset) -> Result<f64> {
    Ok(squared_errors(cloud, basis, dataset)?.0.iter().sum())
}

fn squared_errors(
    cloud: &GaussianCloud,
    basis: &MotionBasis,
    dataset: &TrajectoryDataset,
) -> Result<(Vec<f64>, Vec<usize>)> {
    loss::check_congruent(cloud, basis, dataset)?;
    let samples = basis.sample_batch(&dataset.normalized_times())?;
    let mut sums = vec![0.0; cloud.len()];
    let mut counts = vec![0usize; cloud.len()];
    for i in 0..cloud.len() {
        for (k, sample) in samples.iter().enumerate() {
            if dataset.observed(i, k) {
                let p = deform_point_mean(cloud, i, sample);
                let o = dataset.track(i)[k];
                sums[i] +=
                    (p[0] - o[0]) * (p[0] - o[0]) + (p[1] - o[1]) * (p[1] - o[1]) + (p[2] - o[2]) * (p[2] - o[2]);
                counts[i] += 1;
            }
        }
    }
    Ok((sums, counts))
}

/// Initial cloud and basis for `dataset` under `config`.
pub fn initialize(dataset: &TrajectoryDataset, config: &FitConfig) -> Result<(GaussianCloud, MotionBasis)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means = match config.mean_init {
        MeanInit::FirstObservation => dataset.first_observations(),
        MeanInit::Random => {
            let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
            for (p, m) in dataset.positions().iter().zip(dataset.mask()) {
                if *m {
                    for d in 0..3 {
                        lo[d] = lo[d].min(p[d]);
                        hi[d] = hi[d].max(p[d]);
                    }
                }
            }
            (0..dataset.num_points())
                .map(|_| core::array::from_fn(|d| if hi[d] > lo[d] { rng.random_range(lo[d]..=hi[d]) } else { lo[d] }))
                .collect()
        }
    };
    let layout = config.resolved_layout();
    let mut cloud = GaussianCloud::from_means(means, config.num_basis, layout);
    if config.coefficient_init_std > 0.0 {
        let normal = Normal::new(0.0, config.coefficient_init_std).map_err(|_| Error::invalid("coefficient init"))?;
        // Rotation-only entries get no reconstruction signal, so they stay zero.
        let w = layout.width();
        for (idx, c) in cloud.coefficients.entries_mut().iter_mut().enumerate() {
            if layout == CoefficientLayout::Shared || idx % w < 3 {
                *c = normal.sample(&mut rng);
            }
        }
    }
    let basis = match config.family {
        BasisFamily::Fourier => MotionBasis::Fourier(FourierBasis::new(config.num_basis)?),
        BasisFamily::Mlp => MotionBasis::Mlp(MlpBasis::new(config.mlp_shape(), rng.next_u64())),
    };
    Ok((cloud, basis))
}

/// Losses of a model, with the rigidity graph built from its own means.
pub fn evaluate_losses(
    cloud: &GaussianCloud,
    basis: &MotionBasis,
    dataset: &TrajectoryDataset,
    config: &FitConfig,
) -> Result<LossReport> {
    let recon = loss::recon_with_options(cloud, basis, dataset, false)?;
    let rigidity = if config.lambda_rigid > 0.0 && config.knn < cloud.len() {
        let graph = RigidGraph::build(&cloud.means, config.knn, config.lambda_w)?;
        loss_rigid(&cloud.coefficients, &graph)?.0
    } else {
        0.0
    };
    Ok(LossReport::new(
        recon.value,
        loss_l1(&cloud.coefficients).0,
        loss_sparsity(&cloud.coefficients).0,
        rigidity,
        &config.weights(),
    ))
}

/// Fits a cloud and motion basis to `dataset`. Fully sequential, so equal
/// inputs give bitwise-equal results.
pub fn fit(dataset: &TrajectoryDataset, config: &FitConfig) -> core::result::Result<FitOutcome, FitError> {
    fit_from(dataset, config, None)
}

/// Like [`fit`], calling `observer` after every logged step.
pub fn fit_from(
    dataset: &TrajectoryDataset,
    config: &FitConfig,
    mut observer: Option<&mut dyn FnMut(&LogRecord)>,
) -> core::result::Result<FitOutcome, FitError> {
    config.validate()?;
    let n = dataset.num_points();
    if n == 0 || dataset.observed_count() == 0 {
        return Err(Error::invalid("dataset has no observations").into());
    }
    if config.lambda_rigid > 0.0 && config.knn >= n {
        return Err(Error::invalid(format!("rigidity needs knn < N, got knn = {} with N = {n}", config.knn)).into());
    }
    let (mut cloud, mut basis) = initialize(dataset, config)?;
    let weights = config.weights();
    let is_mlp = matches!(basis, MotionBasis::Mlp(_));

    let mut means_state = AdamState::new(3 * n);
    let mut coef_state = AdamState::new(cloud.coefficients.entries().len());
    let mut basis_state = match &basis {
        MotionBasis::Mlp(m) => AdamState::new(m.params().len()),
        MotionBasis::Fourier(_) => AdamState::new(0),
    };
    let mut graph: Option<RigidGraph> = None;
    let mut frozen: Option<Vec<bool>> = None;
    let polish_start = config
        .prune_ratio
        .filter(|_| config.polish_iterations > 0)
        .map(|_| config.iterations - config.polish_iterations);
    let mut checkpoint = Checkpoint { iteration: 0, cloud: cloud.clone(), basis: basis.clone() };
    let mut log = Vec::with_capacity(config.iterations);
    let times = dataset.normalized_times();

    for it in 0..config.iterations {
        let diverged = |reason: String, checkpoint: &Checkpoint| FitError::Diverged {
            iteration: it,
            reason,
            checkpoint: Box::new(checkpoint.clone()),
        };
        let joint = it >= config.warmup;
        // The polish tail refits the kept support without the shrinkage terms.
        let sparse_on = it >= config.warmup + config.regularizer_delay && polish_start.is_none_or(|s| it < s);
        if it == config.warmup && config.lambda_rigid > 0.0 {
            graph = Some(RigidGraph::build(&cloud.means, config.knn, config.lambda_w)?);
        }
        if let (Some(start), Some(ratio)) = (polish_start, config.prune_ratio) {
            if it == start {
                let mask = prune(&mut cloud, ratio);
                frozen = Some(mask);
            }
        }

        if let (MotionBasis::Mlp(mlp), true) = (&mut basis, joint && config.normalize_basis) {
            if let Err(e) = rebalance(mlp, &mut cloud.coefficients, &times, &mut basis_state, &mut coef_state) {
                return Err(diverged(format!("{e}"), &checkpoint));
            }
        }
        let recon = match loss::recon_with_options(&cloud, &basis, dataset, joint && is_mlp) {
            Ok(r) => r,
            Err(e) => return Err(diverged(format!("{e}"), &checkpoint)),
        };
        let (l1, g_l1) = loss_l1(&cloud.coefficients);
        let (sparsity, g_sparse) = loss_sparsity(&cloud.coefficients);
        let (rigidity, g_rigid) = match &graph {
            Some(g) => loss_rigid(&cloud.coefficients, g)?,
            None => (0.0, Vec::new()),
        };
        let losses = LossReport::new(recon.value, l1, sparsity, rigidity, &weights);
        if !losses.is_finite() {
            return Err(diverged(format!("non-finite loss {losses:?}"), &checkpoint));
        }
        let record = LogRecord {
            iteration: it,
            losses,
            lr_basis: if joint && is_mlp { config.basis_lr(it - config.warmup) } else { 0.0 },
            lr_coefficients: if joint { config.coefficient_lr } else { 0.0 },
            lr_means: config.means_lr(it),
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs(&record);
        }
        log.push(record);

        let step = (|| -> Result<()> {
            adam_step(
                cloud.means.as_flattened_mut(),
                recon.grads.means.as_flattened(),
                &mut means_state,
                record.lr_means,
            )?;
            if !joint {
                return Ok(());
            }
            let mut g = recon.grads.coefficients;
            let l1_weight = weights.l1 / (n * config.num_basis) as f64;
            let proximal = sparse_on && config.proximal_l1 && l1_weight > 0.0;
            if sparse_on {
                for (idx, gv) in g.iter_mut().enumerate() {
                    *gv += weights.sparse * g_sparse[idx];
                    if !config.proximal_l1 {
                        *gv += weights.l1 * g_l1[idx];
                    }
                }
            }
            for (gv, r) in g.iter_mut().zip(&g_rigid) {
                *gv += weights.rigid * r;
            }
            if let Some(mask) = &frozen {
                g.iter_mut().zip(mask).filter(|(_, f)| **f).for_each(|(gv, _)| *gv = 0.0);
            }
            adam_step(cloud.coefficients.entries_mut(), &g, &mut coef_state, record.lr_coefficients)?;
            if proximal {
                adam_prox_l1(cloud.coefficients.entries_mut(), &coef_state, record.lr_coefficients, l1_weight)?;
            }
            if let Some(mask) = &frozen {
                let entries = cloud.coefficients.entries_mut();
                entries.iter_mut().zip(mask).filter(|(_, f)| **f).for_each(|(c, _)| *c = 0.0);
            }
            if let (MotionBasis::Mlp(mlp), Some(gb)) = (&mut basis, &recon.grads.basis) {
                adam_step(mlp.params_mut(), gb.values(), &mut basis_state, record.lr_basis)?;
            }
            Ok(())
        })();
        if let Err(e) = step {
            return Err(diverged(format!("{e}"), &checkpoint));
        }
        if (it + 1) % config.checkpoint_every == 0 {
            checkpoint = Checkpoint { iteration: it + 1, cloud: cloud.clone(), basis: basis.clone() };
        }
    }

    let recon = loss::recon_with_options(&cloud, &basis, dataset, false)?;
    let rigidity = match &graph {
        Some(g) => loss_rigid(&cloud.coefficients, g)?.0,
        None => 0.0,
    };
    let final_losses = LossReport::new(
        recon.value,
        loss_l1(&cloud.coefficients).0,
        loss_sparsity(&cloud.coefficients).0,
        rigidity,
        &weights,
    );
    if !final_losses.is_finite() {
        return Err(FitError::Diverged {
            iteration: config.iterations,
            reason: format!("non-finite final loss {final_losses:?}"),
            checkpoint: Box::new(checkpoint),
        });
    }
    let final_rmse = mean_rmse(&cloud, &basis, dataset)?;
    Ok(FitOutcome { cloud, basis, log, final_losses, final_rmse })
}

/// Divides each basis by its RMS translation norm over `times` and
/// multiplies its coefficients by the same factor, carrying the optimizer
/// moments along. The deformation is unchanged up to rounding.
fn rebalance(
    mlp: &mut MlpBasis,
    coefficients: &mut Coefficients,
    times: &[f64],
    basis_state: &mut AdamState,
    coef_state: &mut AdamState,
) -> Result<()> {
    let trace = mlp.forward_batch(times)?;
    let (b, w) = (mlp.num_basis(), coefficients.layout().width());
    let shape = mlp.shape();
    for j in 0..b {
        let sum: f64 = (0..times.len())
            .flat_map(|k| trace.translation[(k * b + j) * 3..(k * b + j) * 3 + 3].iter())
            .map(|v| v * v)
            .sum();
        let s = libm::sqrt(sum / times.len() as f64);
        if !(s > 1e-12 && s.is_finite()) {
            continue;
        }
        let params = mlp.params_mut();
        for idx in shape.head_ranges(j).into_iter().flatten() {
            params[idx] /= s;
            basis_state.first[idx] /= s;
            basis_state.second[idx] /= s * s;
        }
        let entries = coefficients.entries_mut();
        for i in 0..entries.len() / (b * w) {
            for e in (i * b + j) * w..(i * b + j + 1) * w {
                entries[e] *= s;
                coef_state.first[e] *= s;
                coef_state.second[e] *= s * s;
            }
        }
    }
    Ok(())
}

/// Zeroes every block below `ratio` of its row's largest block and returns
/// the per-entry frozen mask.
fn prune(cloud: &mut GaussianCloud, ratio: f64) -> Vec<bool> {
    let c = &mut cloud.coefficients;
    let (b, w) = (c.num_basis(), c.layout().width());
    let mut mask = vec![false; c.entries().len()];
    for i in 0..c.num_points() {
        let mags: Vec<f64> = (0..b).map(|j| c.magnitude(i, j)).collect();
        let max = mags.iter().copied().fold(0.0, f64::max);
        for (j, m) in mags.iter().enumerate() {
            if *m < ratio * max || max == 0.0 {
                let start = (i * b + j) * w;
                c.entries_mut()[start..start + w].fill(0.0);
                mask[start..start + w].fill(true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = FitConfig::default();
        c.validate().unwrap();
        assert_eq!((c.iterations, c.warmup, c.num_basis, c.freqs), (30_000, 3_000, 10, 26));
        assert_eq!(c.resolved_layout(), CoefficientLayout::Shared);
        let f = FitConfig { family: BasisFamily::Fourier, ..c.clone() };
        assert_eq!(f.resolved_layout(), CoefficientLayout::PerCoordinate);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = FitConfig::default();
        let cases = [
            FitConfig { iterations: 10, warmup: 10, ..base.clone() },
            FitConfig { coefficient_lr: 0.0, ..base.clone() },
            FitConfig { lambda_l1: -1.0, ..base.clone() },
            FitConfig { knn: 0, ..base.clone() },
            FitConfig { num_basis: 0, ..base.clone() },
            FitConfig { polish_iterations: 27_000, ..base.clone() },
            FitConfig { prune_ratio: Some(1.5), ..base.clone() },
            FitConfig { prune_ratio: None, ..base.clone() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn schedules_hit_endpoints() {
        let c = FitConfig::default();
        assert_eq!(c.basis_lr(0), 8e-4);
        assert!((c.basis_lr(c.iterations - c.warmup - 1) - 8e-6).abs() < 1e-18);
        let mid = c.basis_lr((c.iterations - c.warmup - 1) / 2);
        assert!(mid < 8e-4 && mid > 8e-6);
        assert!((1..100).all(|s| c.basis_lr(s) < c.basis_lr(s - 1)));
        assert_eq!(c.means_lr(0), 1e-3);
    }

    #[test]
    fn loss_report_total() {
        let w = LossWeights { l1: 0.01, sparse: 0.1, rigid: 0.05 };
        let r = LossReport::new(0.3, 2.0, 0.5, 4.0, &w);
        assert!((r.total - (0.3 + 0.02 + 0.05 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn prune_keeps_large_blocks() {
        let mut cloud = GaussianCloud::from_means(vec![[0.0; 3]; 2], 3, CoefficientLayout::Shared);
        cloud.coefficients.entries_mut().copy_from_slice(&[1.0, 0.05, -0.5, 0.0, 0.0, 0.0]);
        let mask = prune(&mut cloud, 0.1);
        assert_eq!(cloud.coefficients.entries(), &[1.0, 0.0, -0.5, 0.0, 0.0, 0.0]);
        assert_eq!(mask, vec![false, true, false, true, true, true]);
    }

    #[test]
    fn model_rank_per_layout() {
        assert_eq!(model_rank(CoefficientLayout::Shared, 4), 4);
        assert_eq!(model_rank(CoefficientLayout::PerCoordinate, 4), 12);
    }

    #[test]
    fn rebalance_preserves_deformation() {
        use crate::scene::deform_means;
        let shape = MlpShape { freqs: 3, width: 8, depth: 2, num_basis: 3 };
        let mut mlp = MlpBasis::new(shape, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        mlp.params_mut().iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
        let times = [0.0, 0.3, 0.7, 1.0];
        for layout in [CoefficientLayout::Shared, CoefficientLayout::PerCoordinate] {
            let mut cloud = GaussianCloud::from_means(vec![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]], 3, layout);
            cloud.coefficients.entries_mut().iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
            let basis = MotionBasis::Mlp(mlp.clone());
            let before: Vec<_> =
                times.iter().map(|&u| deform_means(&cloud, &basis.sample(u).unwrap()).unwrap()).collect();
            let mut moved = mlp.clone();
            let mut bs = AdamState::new(moved.params().len());
            let mut cs = AdamState::new(cloud.coefficients.entries().len());
            rebalance(&mut moved, &mut cloud.coefficients, &times, &mut bs, &mut cs).unwrap();
            let basis = MotionBasis::Mlp(moved.clone());
            for (u, b) in times.iter().zip(&before) {
                let after = deform_means(&cloud, &basis.sample(*u).unwrap()).unwrap();
                for (x, y) in after.as_flattened().iter().zip(b.as_flattened()) {
                    assert!((x - y).abs() < 1e-12, "{layout:?} {x} {y}");
                }
            }
            let trace = moved.forward_batch(&times).unwrap();
            for j in 0..3 {
                let tr = &trace.translation;
                let at = |k: usize, d: usize| tr[(k * 3 + j) * 3 + d];
                let ms: f64 = (0..4).flat_map(|k| (0..3).map(move |d| at(k, d).powi(2))).sum::<f64>() / 4.0;
                assert!((ms - 1.0).abs() < 1e-12);
            }
        }
    }
}
