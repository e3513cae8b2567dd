//! Reconstruction surrogate and coefficient regularizers, each returning its
//! value together with an exact (sub)gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{MlpGradient, MlpTrace, MotionBasis};
use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::scene::{deform_point_mean, BasisSample, Coefficients, GaussianCloud};
use crate::synth::TrajectoryDataset;

/// Rows whose largest coefficient magnitude is below this contribute
/// nothing to the sparsity loss.
pub const SPARSITY_GUARD: f64 = 1e-8;

/// Gradients of the reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconGradients {
    pub means: Vec<[f64; 3]>,
    /// Same layout as [`Coefficients::entries`].
    pub coefficients: Vec<f64>,
    /// Present for MLP bases when requested.
    pub basis: Option<MlpGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconLoss {
    pub value: f64,
    /// Sum of squared position errors over observed entries.
    pub sum_squares: f64,
    pub grads: ReconGradients,
}

/// Mean squared coordinate error between posed means and observations over
/// every observed (point, frame) pair, with gradients for canonical means,
/// coefficients and MLP parameters.
pub fn loss_recon(cloud: &GaussianCloud, basis: &MotionBasis, dataset: &TrajectoryDataset) -> Result<ReconLoss> {
    recon_with_options(cloud, basis, dataset, true)
}

pub(crate) fn recon_with_options(
    cloud: &GaussianCloud,
    basis: &MotionBasis,
    dataset: &TrajectoryDataset,
    want_basis_grad: bool,
) -> Result<ReconLoss> {
    check_congruent(cloud, basis, dataset)?;
    let observed = dataset.observed_count();
    if observed == 0 {
        return Err(Error::UndefinedLoss("no observed entries"));
    }
    let times = dataset.normalized_times();
    let (samples, trace) = sample_frames(basis, &times)?;
    let coeffs = &cloud.coefficients;
    let layout = coeffs.layout();
    let (n, k_frames, b, w) = (cloud.len(), times.len(), coeffs.num_basis(), layout.width());

    let scale = 2.0 / (3.0 * observed as f64);
    let mut sum_squares = 0.0;
    let mut g_means = vec![[0.0; 3]; n];
    let mut g_coef = vec![0.0; coeffs.entries().len()];
    let vector_basis = trace.is_some() && want_basis_grad;
    let mut d_translation = if vector_basis { vec![0.0; k_frames * 3 * b] } else { Vec::new() };

    for i in 0..n {
        for (k, sample) in samples.iter().enumerate() {
            if !dataset.observed(i, k) {
                continue;
            }
            let pred = deform_point_mean(cloud, i, sample);
            let obs = dataset.track(i)[k];
            let r = [pred[0] - obs[0], pred[1] - obs[1], pred[2] - obs[2]];
            sum_squares += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            let g = r.map(|v| v * scale);
            for d in 0..3 {
                g_means[i][d] += g[d];
            }
            for j in 0..b {
                let base = (i * b + j) * w;
                for d in 0..3 {
                    g_coef[base + layout.translation_offset(d)] += g[d] * sample.translation(j, d);
                }
                if vector_basis {
                    let row = &mut d_translation[(k * b + j) * 3..(k * b + j) * 3 + 3];
                    for d in 0..3 {
                        row[d] += coeffs.translation(i, j, d) * g[d];
                    }
                }
            }
        }
    }

    let basis_grad = match (basis, trace) {
        (MotionBasis::Mlp(mlp), Some(trace)) if want_basis_grad => {
            let mut grad = MlpGradient::zeros(mlp.shape());
            mlp.backward_batch(&trace, &d_translation, None, &mut grad)?;
            Some(grad)
        }
        _ => None,
    };
    Ok(ReconLoss {
        value: sum_squares / (3.0 * observed as f64),
        sum_squares,
        grads: ReconGradients { means: g_means, coefficients: g_coef, basis: basis_grad },
    })
}

fn sample_frames(basis: &MotionBasis, times: &[f64]) -> Result<(Vec<BasisSample>, Option<MlpTrace>)> {
    match basis {
        MotionBasis::Fourier(_) => Ok((basis.sample_batch(times)?, None)),
        MotionBasis::Mlp(mlp) => {
            let trace = mlp.forward_batch(times)?;
            let samples = (0..times.len()).map(|k| trace.sample(k, mlp.num_basis())).collect();
            Ok((samples, Some(trace)))
        }
    }
}

pub(crate) fn check_congruent(cloud: &GaussianCloud, basis: &MotionBasis, dataset: &TrajectoryDataset) -> Result<()> {
    if dataset.num_points() != cloud.len() {
        return Err(Error::DimensionMismatch {
            context: "dataset point count",
            expected: cloud.len(),
            actual: dataset.num_points(),
        });
    }
    if basis.num_basis() != cloud.num_basis() {
        return Err(Error::DimensionMismatch {
            context: "basis count",
            expected: cloud.num_basis(),
            actual: basis.num_basis(),
        });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1 / (N B)) sum |c|` over every coefficient entry.
pub fn loss_l1(coefficients: &Coefficients) -> (f64, Vec<f64>) {
    let norm = (coefficients.num_points() * coefficients.num_basis()) as f64;
    if norm == 0.0 {
        return (0.0, Vec::new());
    }
    let value = coefficients.entries().iter().map(|c| libm::fabs(*c)).sum::<f64>() / norm;
    let grad = coefficients.entries().iter().map(|c| sign(*c) / norm).collect();
    (value, grad)
}

/// `(1 / (N B)) sum_i sum_j |c_ij| / max_j |c_ij|`, over each point's entries.
///
/// Gradient flows through both the numerator and the max; ties in the max
/// route to the lowest index.
pub fn loss_sparsity(coefficients: &Coefficients) -> (f64, Vec<f64>) {
    let norm = (coefficients.num_points() * coefficients.num_basis()) as f64;
    let mut grad = vec![0.0; coefficients.entries().len()];
    if norm == 0.0 {
        return (0.0, grad);
    }
    let row_len = coefficients.row_len();
    let mut value = 0.0;
    for i in 0..coefficients.num_points() {
        let row = coefficients.row(i);
        let mut arg = 0;
        let mut max = 0.0;
        let mut sum = 0.0;
        for (j, c) in row.iter().enumerate() {
            let a = libm::fabs(*c);
            sum += a;
            if a > max {
                max = a;
                arg = j;
            }
        }
        if max < SPARSITY_GUARD {
            continue;
        }
        value += sum / max;
        let g = &mut grad[i * row_len..(i + 1) * row_len];
        for (gj, c) in g.iter_mut().zip(row) {
            *gj = sign(*c) / (max * norm);
        }
        g[arg] -= sign(row[arg]) * sum / (max * max * norm);
    }
    (value / norm, grad)
}

/// Neighbor graph with fixed Gaussian weights for the rigidity loss.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidGraph {
    k: usize,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl RigidGraph {
    /// `k` nearest neighbors of every mean, weighted by
    /// `exp(-lambda_w * |mu_i - mu_j|^2)`.
    pub fn build(means: &[[f64; 3]], k: usize, lambda_w: f64) -> Result<Self> {
        if k == 0 || k >= means.len() {
            return Err(Error::invalid(alloc::format!(
                "rigidity needs 1 <= k < N, got k = {k} with N = {}",
                means.len()
            )));
        }
        let tree = KdTree::build(means);
        let mut neighbors = Vec::with_capacity(means.len() * k);
        let mut weights = Vec::with_capacity(means.len() * k);
        for i in 0..means.len() {
            for (j, d2) in tree.nearest_excluding(i, k) {
                neighbors.push(j);
                weights.push(libm::exp(-lambda_w * d2));
            }
        }
        Ok(Self { k, neighbors, weights })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_points(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.k..(i + 1) * self.k]
    }
}

/// `(1 / (N k)) sum_i sum_{j in knn(i)} w_ij |c_i - c_j|_2`.
pub fn loss_rigid(coefficients: &Coefficients, graph: &RigidGraph) -> Result<(f64, Vec<f64>)> {
    let n = coefficients.num_points();
    if graph.num_points() != n {
        return Err(Error::DimensionMismatch { context: "rigidity graph", expected: n, actual: graph.num_points() });
    }
    let norm = (n * graph.k) as f64;
    let row_len = coefficients.row_len();
    let mut grad = vec![0.0; coefficients.entries().len()];
    let mut value = 0.0;
    let mut diff = vec![0.0; row_len];
    for i in 0..n {
        for (&j, &w) in graph.neighbors(i).iter().zip(graph.weights(i)) {
            let (ci, cj) = (coefficients.row(i), coefficients.row(j));
            let mut sq = 0.0;
            for ((d, a), b) in diff.iter_mut().zip(ci).zip(cj) {
                *d = a - b;
                sq += *d * *d;
            }
            let dist = libm::sqrt(sq);
            value += w * dist;
            if dist == 0.0 || w == 0.0 {
                continue;
            }
            let s = w / (dist * norm);
            for (c, d) in diff.iter().enumerate() {
                grad[i * row_len + c] += s * d;
                grad[j * row_len + c] -= s * d;
            }
        }
    }
    Ok((value / norm, grad))
}
