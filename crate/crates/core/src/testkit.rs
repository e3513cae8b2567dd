//! Independent oracles: dense singular values of the centered trajectory
//! stack and central finite differences.
//!
//! Nothing here shares code with the model or loss paths it is used to check.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::synth::TrajectoryDataset;

/// Singular values of the centered `N x 3K` trajectory stack and the best
/// achievable residual energy at every rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResidualReport {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `tail_energy[r] = sum_{i > r} sigma_i^2` for `r = 0..=p`.
    pub tail_energy: Vec<f64>,
}

impl RankResidualReport {
    pub fn total_energy(&self) -> f64 {
        self.tail_energy[0]
    }

    /// Smallest squared Frobenius residual of any rank-`rank` approximation.
    pub fn residual(&self, rank: usize) -> f64 {
        self.tail_energy[rank.min(self.tail_energy.len() - 1)]
    }
}

/// Row-major `N x 3K` matrix of trajectories centered by their temporal mean.
pub fn centered_stack(dataset: &TrajectoryDataset) -> Result<(usize, usize, Vec<f64>)> {
    if !dataset.is_fully_observed() {
        return Err(Error::Unsupported("rank residual needs a fully observed dataset"));
    }
    let (n, k) = (dataset.num_points(), dataset.num_frames());
    let mut out = Vec::with_capacity(n * 3 * k);
    for i in 0..n {
        let track = dataset.track(i);
        let mut mean = [0.0; 3];
        for p in track {
            for d in 0..3 {
                mean[d] += p[d];
            }
        }
        mean.iter_mut().for_each(|m| *m /= k as f64);
        for p in track {
            for d in 0..3 {
                out.push(p[d] - mean[d]);
            }
        }
    }
    Ok((n, 3 * k, out))
}

pub fn svd_rank_residual(dataset: &TrajectoryDataset) -> Result<RankResidualReport> {
    let (rows, cols, data) = centered_stack(dataset)?;
    let singular_values = singular_values(rows, cols, &data);
    let mut tail_energy = vec![0.0; singular_values.len() + 1];
    for r in (0..singular_values.len()).rev() {
        tail_energy[r] = tail_energy[r + 1] + singular_values[r] * singular_values[r];
    }
    Ok(RankResidualReport { singular_values, tail_energy })
}

/// Singular values (descending) of a row-major `rows x cols` matrix by
/// one-sided Jacobi rotations on the narrower side.
pub fn singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    assert_eq!(data.len(), rows * cols);
    // Orthogonalize the columns of a tall matrix; columns stored contiguously.
    let (m, n) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..m).map(|r| if rows >= cols { data[r * cols + c] } else { data[c * cols + r] }).collect())
        .collect();
    const TOL: f64 = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (left, right) = columns.split_at_mut(q);
                let (a, b) = (&mut left[p], &mut right[0]);
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || libm::fabs(gamma) <= TOL * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (xp, yp) = (*x, *y);
                    *x = c * xp - s * yp;
                    *y = s * xp + c * yp;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut values: Vec<f64> = columns.iter().map(|c| libm::sqrt(c.iter().map(|v| v * v).sum())).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Central-difference gradient of `f` at `point`.
pub fn finite_difference<F>(mut f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x);
        x[i] = orig - step;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(alloc::format!("function evaluation at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finite_difference_basics() {
        let g = finite_difference(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert_eq!(finite_difference(|_| 4.0, &[1.0, 2.0], 1e-5).unwrap(), vec![0.0, 0.0]);
        assert!(finite_difference(|x| 1.0 / x[0], &[0.0], 1e-5).is_ok());
        assert!(finite_difference(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-5).is_err());
    }

    #[test]
    fn singular_values_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (r, c) in [(5, 12), (12, 5), (7, 7), (1, 4)] {
            let data: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ours = singular_values(r, c, &data);
            let mut theirs: Vec<f64> = DMatrix::from_row_slice(r, c, &data).singular_values().iter().copied().collect();
            theirs.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-12, "{ours:?} vs {theirs:?}");
            }
        }
    }

    #[test]
    fn residual_matches_explicit_truncated_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, k) = (5, 4);
        let positions: Vec<[f64; 3]> =
            (0..n * k).map(|_| core::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let ds = TrajectoryDataset::fully_observed(positions, crate::TimeDomain::uniform(1.0, k).unwrap()).unwrap();
        let report = svd_rank_residual(&ds).unwrap();
        let (rows, cols, data) = centered_stack(&ds).unwrap();
        let x = DMatrix::from_row_slice(rows, cols, &data);
        let svd = x.clone().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
        for r in 0..=order.len() {
            let mut approx = DMatrix::zeros(rows, cols);
            for &idx in &order[..r] {
                approx += svd.singular_values[idx] * u.column(idx) * vt.row(idx);
            }
            let brute = (&x - approx).norm_squared();
            assert!((report.residual(r) - brute).abs() < 1e-10, "rank {r}: {} vs {brute}", report.residual(r));
        }
        assert!(report.residual(rows.min(cols)).abs() < 1e-9);
        assert!(report.residual(100) == 0.0);
        assert!(report.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(report.tail_energy.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn masked_datasets_are_rejected() {
        let positions = vec![[0.0; 3]; 4];
        let domain = crate::TimeDomain::uniform(1.0, 2).unwrap();
        let ds = TrajectoryDataset::new(positions, vec![true, false, true, true], domain, None).unwrap();
        assert!(matches!(svd_rank_residual(&ds), Err(Error::Unsupported(_))));
    }
}
