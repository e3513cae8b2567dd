//! Scene state and the deformation that poses a canonical cloud at time `t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::basis::MotionBasis;
use crate::error::{Error, Result};

/// Norm below which a quaternion cannot be normalized.
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// How motion coefficients are laid out per (point, basis).
///
/// `Shared` holds one scalar per basis, used for both the translation and
/// the rotation correction. `PerCoordinate` holds seven values per basis:
/// three translation weights followed by four rotation weights, which is
/// what a scalar-valued basis such as the Fourier series needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientLayout {
    Shared,
    PerCoordinate,
}

impl CoefficientLayout {
    /// Number of stored entries per (point, basis) pair.
    pub const fn width(self) -> usize {
        match self {
            CoefficientLayout::Shared => 1,
            CoefficientLayout::PerCoordinate => 7,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            CoefficientLayout::Shared => "shared",
            CoefficientLayout::PerCoordinate => "per-coordinate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "shared" => Some(CoefficientLayout::Shared),
            "per-coordinate" => Some(CoefficientLayout::PerCoordinate),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn translation_offset(self, d: usize) -> usize {
        match self {
            CoefficientLayout::Shared => 0,
            CoefficientLayout::PerCoordinate => d,
        }
    }

    #[inline]
    pub(crate) fn rotation_offset(self, d: usize) -> usize {
        match self {
            CoefficientLayout::Shared => 0,
            CoefficientLayout::PerCoordinate => 3 + d,
        }
    }
}

/// Motion coefficients for `N` points and `B` bases, row-major
/// `N x B x layout.width()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    layout: CoefficientLayout,
    num_basis: usize,
    data: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(num_points: usize, num_basis: usize, layout: CoefficientLayout) -> Self {
        Self { layout, num_basis, data: vec![0.0; num_points * num_basis * layout.width()] }
    }

    pub fn from_entries(num_basis: usize, layout: CoefficientLayout, data: Vec<f64>) -> Result<Self> {
        if num_basis == 0 {
            return Err(Error::invalid("coefficients need at least one basis"));
        }
        let stride = num_basis * layout.width();
        if !data.len().is_multiple_of(stride) {
            return Err(Error::DimensionMismatch {
                context: "coefficient entries",
                expected: stride * (data.len() / stride + 1),
                actual: data.len(),
            });
        }
        Ok(Self { layout, num_basis, data })
    }

    pub fn layout(&self) -> CoefficientLayout {
        self.layout
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn num_points(&self) -> usize {
        self.data.len() / self.row_len()
    }

    /// Entries per point.
    pub fn row_len(&self) -> usize {
        self.num_basis * self.layout.width()
    }

    /// Flat view over every stored entry; the view losses operate on.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.row_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    /// The entries of basis `j` for point `i`.
    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        let w = self.layout.width();
        &self.row(i)[j * w..(j + 1) * w]
    }

    /// Weight applied to translation coordinate `d` of basis `j`.
    #[inline]
    pub fn translation(&self, i: usize, j: usize, d: usize) -> f64 {
        let w = self.layout.width();
        self.data[(i * self.num_basis + j) * w + self.layout.translation_offset(d)]
    }

    /// Weight applied to rotation component `d` (w, x, y, z) of basis `j`.
    #[inline]
    pub fn rotation(&self, i: usize, j: usize, d: usize) -> f64 {
        let w = self.layout.width();
        self.data[(i * self.num_basis + j) * w + self.layout.rotation_offset(d)]
    }

    /// Magnitude of point `i`'s use of basis `j`: `|c_ij|` for the shared
    /// layout, the Euclidean norm of the block otherwise.
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        let block = self.block(i, j);
        match self.layout {
            CoefficientLayout::Shared => libm::fabs(block[0]),
            CoefficientLayout::PerCoordinate => libm::sqrt(block.iter().map(|v| v * v).sum()),
        }
    }

    /// Dominant basis of point `i` (argmax of [`magnitude`](Self::magnitude),
    /// ties to the lowest index). `None` when the whole row is zero.
    pub fn dominant(&self, i: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.num_basis {
            let m = self.magnitude(i, j);
            if m > 0.0 && best.is_none_or(|(_, b)| m > b) {
                best = Some((j, m));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Second-largest over largest basis magnitude for point `i`; 0 for a
    /// row with a single nonzero basis, `None` for an all-zero row.
    pub fn dominance_ratio(&self, i: usize) -> Option<f64> {
        let (mut first, mut second) = (0.0f64, 0.0f64);
        for j in 0..self.num_basis {
            let m = self.magnitude(i, j);
            if m > first {
                second = first;
                first = m;
            } else if m > second {
                second = m;
            }
        }
        (first > 0.0).then(|| second / first)
    }

    /// Zeroes every block whose basis is not enabled.
    pub fn mask_bases(&mut self, enabled: &[bool]) {
        let w = self.layout.width();
        let b = self.num_basis;
        for (idx, chunk) in self.data.chunks_mut(w).enumerate() {
            if !enabled[idx % b] {
                chunk.fill(0.0);
            }
        }
    }
}

/// Canonical Gaussian parameters plus per-Gaussian motion coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub means: Vec<[f64; 3]>,
    /// Canonical rotations as (w, x, y, z); need not be unit.
    pub rotations: Vec<[f64; 4]>,
    /// Log scales; activated by `exp`.
    pub log_scales: Vec<[f64; 3]>,
    /// Opacity logits; activated by the logistic function.
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub coefficients: Coefficients,
}

impl GaussianCloud {
    /// Identity rotations, unit-ish scales and zero coefficients around the
    /// given means.
    pub fn from_means(means: Vec<[f64; 3]>, num_basis: usize, layout: CoefficientLayout) -> Self {
        let n = means.len();
        Self {
            rotations: vec![[1.0, 0.0, 0.0, 0.0]; n],
            log_scales: vec![[libm::log(0.01); 3]; n],
            opacity_logits: vec![inverse_sigmoid(0.1); n],
            colors: vec![[0.5; 3]; n],
            coefficients: Coefficients::zeros(n, num_basis, layout),
            means,
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn num_basis(&self) -> usize {
        self.coefficients.num_basis()
    }

    /// Checks shape congruence and the per-field invariants. An empty cloud
    /// is valid (it renders as background).
    pub fn validate(&self) -> Result<()> {
        let n = self.means.len();
        for (context, len) in [
            ("rotations", self.rotations.len()),
            ("log scales", self.log_scales.len()),
            ("opacities", self.opacity_logits.len()),
            ("colors", self.colors.len()),
            ("coefficient rows", self.coefficients.num_points()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch { context, expected: n, actual: len });
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(self.means.as_flattened())
            || !finite(self.rotations.as_flattened())
            || !finite(self.log_scales.as_flattened())
            || !finite(&self.opacity_logits)
            || !finite(self.coefficients.entries())
        {
            return Err(Error::NonFinite(format!("gaussian cloud of {n} points")));
        }
        for (index, q) in self.rotations.iter().enumerate() {
            let norm = norm4(q);
            if norm <= MIN_QUATERNION_NORM {
                return Err(Error::DegenerateRotation { index, norm });
            }
        }
        if self.colors.as_flattened().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("colors must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Basis values at one time.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisSample {
    /// One scalar per basis, broadcast over every coordinate.
    Scalar(Vec<f64>),
    /// A translation 3-vector and a rotation-correction 4-vector per basis.
    Vector { translation: Vec<[f64; 3]>, rotation: Vec<[f64; 4]> },
}

impl BasisSample {
    pub fn zeros_vector(num_basis: usize) -> Self {
        BasisSample::Vector { translation: vec![[0.0; 3]; num_basis], rotation: vec![[0.0; 4]; num_basis] }
    }

    pub fn num_basis(&self) -> usize {
        match self {
            BasisSample::Scalar(v) => v.len(),
            BasisSample::Vector { translation, .. } => translation.len(),
        }
    }

    pub fn is_broadcast(&self) -> bool {
        matches!(self, BasisSample::Scalar(_))
    }

    #[inline]
    pub fn translation(&self, j: usize, d: usize) -> f64 {
        match self {
            BasisSample::Scalar(v) => v[j],
            BasisSample::Vector { translation, .. } => translation[j][d],
        }
    }

    #[inline]
    pub fn rotation(&self, j: usize, d: usize) -> f64 {
        match self {
            BasisSample::Scalar(v) => v[j],
            BasisSample::Vector { rotation, .. } => rotation[j][d],
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            BasisSample::Scalar(v) => v.iter().all(|x| x.is_finite()),
            BasisSample::Vector { translation, rotation } => {
                translation.as_flattened().iter().chain(rotation.as_flattened()).all(|x| x.is_finite())
            }
        }
    }
}

/// A cloud posed at one time: deformed means and unit rotations plus the
/// time-invariant attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedCloud {
    pub means: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl PosedCloud {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Scene duration and frame timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomain {
    duration: f64,
    timestamps: Vec<f64>,
}

impl TimeDomain {
    pub fn new(duration: f64, timestamps: Vec<f64>) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid(format!("duration must be positive, got {duration}")));
        }
        if let Some(bad) = timestamps.iter().find(|t| !(0.0..=duration).contains(*t)) {
            return Err(Error::TimeOutOfRange { t: *bad, duration });
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("timestamps must be strictly increasing"));
        }
        Ok(Self { duration, timestamps })
    }

    /// `frames` timestamps evenly spaced over `[0, duration]`, endpoints included.
    pub fn uniform(duration: f64, frames: usize) -> Result<Self> {
        let timestamps = match frames {
            0 => Vec::new(),
            1 => vec![0.0],
            // The last stamp is set exactly; the quotient can round past `duration`.
            _ => (0..frames)
                .map(|k| if k + 1 == frames { duration } else { duration * k as f64 / (frames - 1) as f64 })
                .collect(),
        };
        Self::new(duration, timestamps)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Maps `t` to `[0, 1]`; times outside the domain are rejected.
    pub fn normalize(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::TimeOutOfRange { t, duration: self.duration });
        }
        Ok(t / self.duration)
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(0.0, self.duration)
    }
}

fn check_width(cloud: &GaussianCloud, sample: &BasisSample) -> Result<()> {
    if sample.num_basis() != cloud.num_basis() {
        return Err(Error::DimensionMismatch {
            context: "basis sample width",
            expected: cloud.num_basis(),
            actual: sample.num_basis(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn deform_point_mean(cloud: &GaussianCloud, i: usize, sample: &BasisSample) -> [f64; 3] {
    let c = &cloud.coefficients;
    let mut mu = cloud.means[i];
    for j in 0..c.num_basis() {
        for (d, m) in mu.iter_mut().enumerate() {
            *m += c.translation(i, j, d) * sample.translation(j, d);
        }
    }
    mu
}

fn deform_point_rotation(cloud: &GaussianCloud, i: usize, sample: &BasisSample) -> Result<[f64; 4]> {
    let c = &cloud.coefficients;
    let mut q = cloud.rotations[i];
    for j in 0..c.num_basis() {
        for (d, v) in q.iter_mut().enumerate() {
            *v += c.rotation(i, j, d) * sample.rotation(j, d);
        }
    }
    let norm = norm4(&q);
    if !(norm >= MIN_QUATERNION_NORM) {
        return Err(Error::DegenerateRotation { index: i, norm });
    }
    Ok(q.map(|v| v / norm))
}

/// `mu_i(t) = mu_c,i + sum_j c_ij * b^mu_j(t)`.
pub fn deform_means(cloud: &GaussianCloud, sample: &BasisSample) -> Result<Vec<[f64; 3]>> {
    check_width(cloud, sample)?;
    Ok((0..cloud.len()).map(|i| deform_point_mean(cloud, i, sample)).collect())
}

/// `q_i(t) = normalize(q_c,i + sum_j c_ij * b^R_j(t))`, with the same
/// coefficients as the translation.
pub fn deform_rotations(cloud: &GaussianCloud, sample: &BasisSample) -> Result<Vec<[f64; 4]>> {
    check_width(cloud, sample)?;
    (0..cloud.len()).map(|i| deform_point_rotation(cloud, i, sample)).collect()
}

/// Poses the cloud at scene time `t`.
pub fn pose_at(cloud: &GaussianCloud, basis: &MotionBasis, domain: &TimeDomain, t: f64) -> Result<PosedCloud> {
    let sample = basis.sample(domain.normalize(t)?)?;
    Ok(PosedCloud {
        means: deform_means(cloud, &sample)?,
        rotations: deform_rotations(cloud, &sample)?,
        log_scales: cloud.log_scales.clone(),
        opacity_logits: cloud.opacity_logits.clone(),
        colors: cloud.colors.clone(),
    })
}

/// Deformed mean of one point at each of `times`.
pub fn trajectory(
    cloud: &GaussianCloud,
    basis: &MotionBasis,
    domain: &TimeDomain,
    index: usize,
    times: &[f64],
) -> Result<Vec<[f64; 3]>> {
    if index >= cloud.len() {
        return Err(Error::IndexOutOfRange { index, len: cloud.len() });
    }
    times
        .iter()
        .map(|&t| {
            let sample = basis.sample(domain.normalize(t)?)?;
            check_width(cloud, &sample)?;
            Ok(deform_point_mean(cloud, index, &sample))
        })
        .collect()
}

/// Copy of `cloud` with every basis outside `enabled` (0-based) switched off.
pub fn decompose(cloud: &GaussianCloud, enabled: &[usize]) -> Result<GaussianCloud> {
    let b = cloud.num_basis();
    let mut mask = vec![false; b];
    for &j in enabled {
        if j >= b {
            return Err(Error::IndexOutOfRange { index: j, len: b });
        }
        mask[j] = true;
    }
    let mut out = cloud.clone();
    out.coefficients.mask_bases(&mask);
    Ok(out)
}

pub(crate) fn norm4(q: &[f64; 4]) -> f64 {
    libm::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn inverse_sigmoid(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{FourierBasis, MlpBasis, MlpShape};
    use proptest::prelude::*;

    fn single(mean: [f64; 3], layout: CoefficientLayout, b: usize) -> GaussianCloud {
        GaussianCloud::from_means(vec![mean], b, layout)
    }

    #[test]
    fn zero_coefficients_leave_means_untouched() {
        let mut cloud =
            GaussianCloud::from_means(vec![[0.3, -1.2, 7.0], [1e-3, 2.0, -0.5]], 2, CoefficientLayout::Shared);
        cloud.rotations[1] = [0.2, 0.1, 0.0, 0.9];
        let sample = BasisSample::Vector {
            translation: vec![[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]],
            rotation: vec![[0.1, 0.2, 0.3, 0.4], [1.0, 1.0, 1.0, 1.0]],
        };
        assert_eq!(deform_means(&cloud, &sample).unwrap(), cloud.means);
    }

    #[test]
    fn single_basis_linearity() {
        let mut cloud = single([0.0; 3], CoefficientLayout::Shared, 1);
        cloud.coefficients.entries_mut()[0] = 2.0;
        let sample = BasisSample::Vector { translation: vec![[0.5, 0.0, 0.0]], rotation: vec![[0.0; 4]] };
        assert_eq!(deform_means(&cloud, &sample).unwrap(), vec![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let cloud = single([0.0; 3], CoefficientLayout::Shared, 2);
        let err = deform_means(&cloud, &BasisSample::Scalar(vec![1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn rotation_identity_and_normalization() {
        let mut cloud = single([0.0; 3], CoefficientLayout::Shared, 1);
        let zero = BasisSample::zeros_vector(1);
        assert_eq!(deform_rotations(&cloud, &zero).unwrap(), vec![[1.0, 0.0, 0.0, 0.0]]);

        cloud.rotations[0] = [2.0, 0.0, 0.0, 0.0];
        assert_eq!(deform_rotations(&cloud, &zero).unwrap(), vec![[1.0, 0.0, 0.0, 0.0]]);

        cloud.rotations[0] = [1.0, 0.0, 0.0, 0.0];
        cloud.coefficients.entries_mut()[0] = 1.0;
        let s = BasisSample::Vector { translation: vec![[0.0; 3]], rotation: vec![[0.0, 0.0, 0.0, 1.0]] };
        let q = deform_rotations(&cloud, &s).unwrap()[0];
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((q[0] - h).abs() < 1e-15 && q[1] == 0.0 && q[2] == 0.0 && (q[3] - h).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rotation_names_the_gaussian() {
        let mut cloud = GaussianCloud::from_means(vec![[0.0; 3]; 3], 1, CoefficientLayout::Shared);
        cloud.coefficients.entries_mut()[2] = 1.0;
        let s = BasisSample::Vector { translation: vec![[0.0; 3]], rotation: vec![[-1.0, 0.0, 0.0, 0.0]] };
        assert!(matches!(deform_rotations(&cloud, &s), Err(Error::DegenerateRotation { index: 2, .. })));
    }

    #[test]
    fn zero_head_mlp_poses_canonical_cloud() {
        let mut cloud =
            GaussianCloud::from_means(vec![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]], 4, CoefficientLayout::Shared);
        cloud.coefficients.entries_mut().iter_mut().enumerate().for_each(|(k, c)| *c = k as f64 - 3.0);
        let basis = MotionBasis::Mlp(MlpBasis::new(MlpShape { freqs: 4, width: 16, depth: 3, num_basis: 4 }, 7));
        let domain = TimeDomain::uniform(2.0, 5).unwrap();
        let posed = pose_at(&cloud, &basis, &domain, 1.3).unwrap();
        assert_eq!(posed.means, cloud.means);
        assert_eq!(posed.rotations, cloud.rotations);
    }

    #[test]
    fn pose_at_composes_sample_and_deform() {
        let mut cloud =
            GaussianCloud::from_means(vec![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]], 3, CoefficientLayout::PerCoordinate);
        cloud.coefficients.entries_mut().iter_mut().enumerate().for_each(|(k, c)| *c = 0.01 * k as f64);
        let basis = MotionBasis::Fourier(FourierBasis::new(3).unwrap());
        let domain = TimeDomain::uniform(4.0, 9).unwrap();
        let t0 = 1.7;
        let posed = pose_at(&cloud, &basis, &domain, t0).unwrap();
        let sample = basis.sample(t0 / 4.0).unwrap();
        assert_eq!(posed.means, deform_means(&cloud, &sample).unwrap());
        assert_eq!(posed.rotations, deform_rotations(&cloud, &sample).unwrap());
        assert_eq!(posed, pose_at(&cloud, &basis, &domain, t0).unwrap());
        assert!(matches!(pose_at(&cloud, &basis, &domain, 4.5), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn trajectory_of_static_point_is_constant() {
        let cloud = GaussianCloud::from_means(vec![[0.4, 0.5, 0.6]], 2, CoefficientLayout::PerCoordinate);
        let basis = MotionBasis::Fourier(FourierBasis::new(2).unwrap());
        let domain = TimeDomain::uniform(1.0, 3).unwrap();
        let line = trajectory(&cloud, &basis, &domain, 0, &[0.0, 0.3, 0.9]).unwrap();
        assert!(line.iter().all(|p| *p == [0.4, 0.5, 0.6]));
        assert!(matches!(trajectory(&cloud, &basis, &domain, 1, &[0.0]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn decompose_masks_and_validates() {
        let mut cloud = GaussianCloud::from_means(vec![[0.0; 3]; 2], 3, CoefficientLayout::Shared);
        cloud.coefficients.entries_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let all = decompose(&cloud, &[0, 1, 2]).unwrap();
        assert_eq!(all, cloud);
        let none = decompose(&cloud, &[]).unwrap();
        assert!(none.coefficients.entries().iter().all(|c| *c == 0.0));
        let one = decompose(&cloud, &[1]).unwrap();
        assert_eq!(one.coefficients.entries(), &[0.0, 2.0, 0.0, 0.0, 5.0, 0.0]);
        assert_eq!(cloud.coefficients.entries()[0], 1.0);
        assert!(matches!(decompose(&cloud, &[3]), Err(Error::IndexOutOfRange { index: 3, len: 3 })));
    }

    #[test]
    fn dominance_helpers() {
        let c = Coefficients::from_entries(3, CoefficientLayout::Shared, vec![0.5, -2.0, 2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.dominant(0), Some(1));
        assert_eq!(c.dominance_ratio(0), Some(1.0));
        assert_eq!(c.dominant(1), None);
        assert_eq!(c.dominance_ratio(1), None);
    }

    #[test]
    fn time_domain_invariants() {
        assert!(TimeDomain::new(0.0, vec![]).is_err());
        assert!(TimeDomain::new(1.0, vec![0.0, 0.0]).is_err());
        assert!(TimeDomain::new(1.0, vec![0.0, 1.5]).is_err());
        let d = TimeDomain::uniform(2.0, 5).unwrap();
        assert_eq!(d.timestamps(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d.normalize(1.0).unwrap(), 0.5);
    }

    fn arb_scalar_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<[f64; 3]>)> {
        (1usize..5, 1usize..4).prop_flat_map(|(n, b)| {
            (
                proptest::collection::vec(-3.0..3.0f64, n * b),
                proptest::collection::vec(-3.0..3.0f64, n * b),
                proptest::collection::vec(proptest::array::uniform3(-2.0..2.0f64), b),
            )
        })
    }

    proptest! {
        #[test]
        fn uniform_domains_end_exactly_at_the_duration(duration in 1e-3..1e3f64, frames in 2usize..200) {
            let d = TimeDomain::uniform(duration, frames).unwrap();
            prop_assert_eq!(d.timestamps()[frames - 1], duration);
            prop_assert_eq!(d.timestamps()[0], 0.0);
        }

        #[test]
        fn deformation_is_affine_in_coefficients((c1, c2, basis) in arb_scalar_case()) {
            let b = basis.len();
            let n = c1.len() / b;
            let means: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, -0.5, 0.25]).collect();
            let sample = BasisSample::Vector { translation: basis, rotation: vec![[0.0; 4]; b] };
            let eval = |c: Vec<f64>| {
                let mut cloud = GaussianCloud::from_means(means.clone(), b, CoefficientLayout::Shared);
                cloud.coefficients = Coefficients::from_entries(b, CoefficientLayout::Shared, c).unwrap();
                deform_means(&cloud, &sample).unwrap()
            };
            let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
            let (p1, p2, p12) = (eval(c1), eval(c2), eval(sum));
            for i in 0..n {
                for d in 0..3 {
                    let lhs = p12[i][d] - means[i][d];
                    let rhs = (p1[i][d] - means[i][d]) + (p2[i][d] - means[i][d]);
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
                }
            }
        }

        #[test]
        fn scalar_gauge_is_invisible(c in proptest::collection::vec(-2.0..2.0f64, 6), b in proptest::collection::vec(-2.0..2.0f64, 3), lambda in prop_oneof![-4.0..-0.25f64, 0.25..4.0f64]) {
            let mut cloud = GaussianCloud::from_means(vec![[0.1, 0.2, 0.3], [-1.0, 0.0, 2.0]], 3, CoefficientLayout::Shared);
            cloud.coefficients.entries_mut().copy_from_slice(&c);
            let base = deform_means(&cloud, &BasisSample::Scalar(b.clone())).unwrap();
            // rescale basis 1 only
            for i in 0..2 {
                cloud.coefficients.row_mut(i)[1] *= lambda;
            }
            let mut scaled = b.clone();
            scaled[1] /= lambda;
            let gauged = deform_means(&cloud, &BasisSample::Scalar(scaled)).unwrap();
            for (p, q) in base.iter().zip(&gauged) {
                for d in 0..3 {
                    prop_assert!((p[d] - q[d]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn deformed_rotations_are_unit(c in proptest::collection::vec(-2.0..2.0f64, 8), r in proptest::collection::vec(proptest::array::uniform4(-1.0..1.0f64), 2)) {
            let mut cloud = GaussianCloud::from_means(vec![[0.0; 3]; 4], 2, CoefficientLayout::Shared);
            cloud.coefficients.entries_mut().copy_from_slice(&c);
            let s = BasisSample::Vector { translation: vec![[0.0; 3]; 2], rotation: r };
            if let Ok(qs) = deform_rotations(&cloud, &s) {
                for q in qs {
                    prop_assert!((norm4(&q) - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn masking_preserves_points_that_ignore_disabled_bases(c in proptest::collection::vec(-2.0..2.0f64, 3), keep in proptest::collection::vec(any::<bool>(), 3), u in 0.0..1.0f64) {
            let mut cloud = GaussianCloud::from_means(vec![[0.5, 0.5, 0.5]], 3, CoefficientLayout::PerCoordinate);
            let enabled: Vec<usize> = (0..3).filter(|j| keep[*j]).collect();
            for j in 0..3 {
                let v = if keep[j] { c[j] } else { 0.0 };
                cloud.coefficients.row_mut(0)[j * 7..j * 7 + 3].fill(v);
            }
            let basis = MotionBasis::Fourier(FourierBasis::new(3).unwrap());
            let s = basis.sample(u).unwrap();
            let before = deform_means(&cloud, &s).unwrap();
            let after = deform_means(&decompose(&cloud, &enabled).unwrap(), &s).unwrap();
            for d in 0..3 {
                prop_assert!((before[0][d] - after[0][d]).abs() <= 1e-15);
            }
        }
    }
}
