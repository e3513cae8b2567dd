//! Analytic gradients of every loss compared against central differences.

use alloc::vec::Vec;

use super::loss::{loss_l1, loss_recon, loss_rigid, loss_sparsity, RigidGraph};
use crate::basis::MotionBasis;
use crate::error::Result;
use crate::scene::{Coefficients, GaussianCloud};
use crate::synth::TrajectoryDataset;
use crate::testkit::finite_difference;

/// Relative error of analytic `a` against numeric `n`, floored so that
/// both being tiny is not reported as a mismatch.
pub fn relative_error(a: f64, n: f64) -> f64 {
    libm::fabs(a - n) / libm::fabs(a).max(libm::fabs(n)).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckOptions {
    pub step: f64,
    /// Neighbor count for the rigidity check, clamped to `N - 1`.
    pub knn: usize,
    pub lambda_w: f64,
}

impl Default for GradientCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, knn: 8, lambda_w: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub name: &'static str,
    pub compared: usize,
    /// Entries at a kink of the loss, excluded from comparison.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub paths: Vec<PathReport>,
}

impl GradientCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.paths.iter().map(|p| p.max_relative_error).fold(0.0, f64::max)
    }

    pub fn max_abs_gradient(&self) -> f64 {
        self.paths.iter().map(|p| p.max_abs_gradient).fold(0.0, f64::max)
    }

    pub fn compared(&self) -> usize {
        self.paths.iter().map(|p| p.compared).sum()
    }

    pub fn path(&self, name: &str) -> Option<&PathReport> {
        self.paths.iter().find(|p| p.name == name)
    }
}

fn compare(name: &'static str, analytic: &[f64], numeric: &[f64], skip: impl Fn(usize) -> bool) -> PathReport {
    let mut report = PathReport { name, compared: 0, skipped: 0, max_relative_error: 0.0, max_abs_gradient: 0.0 };
    for (idx, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if skip(idx) {
            report.skipped += 1;
            continue;
        }
        report.compared += 1;
        report.max_relative_error = report.max_relative_error.max(relative_error(*a, *n));
        report.max_abs_gradient = report.max_abs_gradient.max(libm::fabs(*a));
    }
    report
}

pub fn loss_gradients_check(
    cloud: &GaussianCloud,
    basis: &MotionBasis,
    dataset: &TrajectoryDataset,
) -> Result<GradientCheckReport> {
    loss_gradients_check_with(cloud, basis, dataset, &GradientCheckOptions::default())
}

/// Checks the reconstruction gradient for canonical means, coefficients and
/// MLP parameters, then the three regularizer gradients for coefficients.
/// Regularizer entries sitting within one step of a kink are skipped.
pub fn loss_gradients_check_with(
    cloud: &GaussianCloud,
    basis: &MotionBasis,
    dataset: &TrajectoryDataset,
    options: &GradientCheckOptions,
) -> Result<GradientCheckReport> {
    let h = options.step;
    let recon = loss_recon(cloud, basis, dataset)?;
    let mut paths = Vec::new();

    let mut probe = cloud.clone();
    let numeric = finite_difference(
        |x| {
            probe.means.as_flattened_mut().copy_from_slice(x);
            loss_recon(&probe, basis, dataset).map_or(f64::NAN, |l| l.value)
        },
        cloud.means.as_flattened(),
        h,
    )?;
    paths.push(compare("recon/means", recon.grads.means.as_flattened(), &numeric, |_| false));

    let mut probe = cloud.clone();
    let numeric = finite_difference(
        |x| {
            probe.coefficients.entries_mut().copy_from_slice(x);
            loss_recon(&probe, basis, dataset).map_or(f64::NAN, |l| l.value)
        },
        cloud.coefficients.entries(),
        h,
    )?;
    paths.push(compare("recon/coefficients", &recon.grads.coefficients, &numeric, |_| false));

    if let (MotionBasis::Mlp(mlp), Some(analytic)) = (basis, &recon.grads.basis) {
        let mut probe = mlp.clone();
        let numeric = finite_difference(
            |x| {
                probe.params_mut().copy_from_slice(x);
                loss_recon(cloud, &MotionBasis::Mlp(probe.clone()), dataset).map_or(f64::NAN, |l| l.value)
            },
            mlp.params(),
            h,
        )?;
        paths.push(compare("recon/basis", analytic.values(), &numeric, |_| false));
    }

    let coeffs = &cloud.coefficients;
    let rebuild = |x: &[f64]| Coefficients::from_entries(coeffs.num_basis(), coeffs.layout(), x.to_vec());
    let near_zero = |idx: usize| libm::fabs(coeffs.entries()[idx]) <= h;

    let (_, analytic) = loss_l1(coeffs);
    let numeric = finite_difference(|x| rebuild(x).map_or(f64::NAN, |c| loss_l1(&c).0), coeffs.entries(), h)?;
    paths.push(compare("l1", &analytic, &numeric, near_zero));

    let row_len = coeffs.row_len();
    let tied_rows: Vec<bool> = (0..coeffs.num_points())
        .map(|i| {
            let mut mags: Vec<f64> = coeffs.row(i).iter().map(|c| libm::fabs(*c)).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            mags.len() > 1 && mags[0] - mags[1] <= 2.0 * h
        })
        .collect();
    let (_, analytic) = loss_sparsity(coeffs);
    let numeric = finite_difference(|x| rebuild(x).map_or(f64::NAN, |c| loss_sparsity(&c).0), coeffs.entries(), h)?;
    paths.push(compare("sparsity", &analytic, &numeric, |idx| near_zero(idx) || tied_rows[idx / row_len]));

    let k = options.knn.min(cloud.len().saturating_sub(1));
    if k >= 1 {
        let graph = RigidGraph::build(&cloud.means, k, options.lambda_w)?;
        let (_, analytic) = loss_rigid(coeffs, &graph)?;
        let numeric = finite_difference(
            |x| rebuild(x).ok().and_then(|c| loss_rigid(&c, &graph).ok()).map_or(f64::NAN, |l| l.0),
            coeffs.entries(),
            h,
        )?;
        // A neighbor pair with (nearly) equal coefficient rows is a kink.
        let coincident: Vec<bool> = (0..coeffs.num_points())
            .map(|i| {
                graph.neighbors(i).iter().any(|&j| {
                    let d2: f64 = coeffs.row(i).iter().zip(coeffs.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    libm::sqrt(d2) <= 2.0 * h
                })
            })
            .collect();
        let involved = |idx: usize| {
            let i = idx / row_len;
            coincident[i] || (0..coeffs.num_points()).any(|p| coincident[p] && graph.neighbors(p).contains(&i))
        };
        paths.push(compare("rigidity", &analytic, &numeric, involved));
    }
    Ok(GradientCheckReport { paths })
}
