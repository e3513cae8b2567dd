//! Observed trajectories and synthetic dynamic scenes with closed-form
//! ground truth.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::FourierBasis;
use crate::error::{Error, Result};
use crate::scene::{CoefficientLayout, GaussianCloud, TimeDomain};

/// Ground-truth annotation of one generated point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PointLabel {
    /// Independent moving part the point belongs to.
    pub mover: Option<u32>,
    /// Generator basis (0-based) the point's motion uses exclusively.
    pub basis: Option<u32>,
    pub is_static: bool,
}

/// Observed positions of `N` points over `K` frames with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    positions: Vec<[f64; 3]>,
    mask: Vec<bool>,
    domain: TimeDomain,
    labels: Option<Vec<PointLabel>>,
}

impl TrajectoryDataset {
    /// `positions` and `mask` are point-major: entry `i * K + k`.
    pub fn new(
        positions: Vec<[f64; 3]>,
        mask: Vec<bool>,
        domain: TimeDomain,
        labels: Option<Vec<PointLabel>>,
    ) -> Result<Self> {
        let k = domain.len();
        if k == 0 {
            return Err(Error::invalid("dataset needs at least one frame"));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(k) {
            return Err(Error::DimensionMismatch {
                context: "dataset positions",
                expected: k * (positions.len() / k).max(1),
                actual: positions.len(),
            });
        }
        if mask.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset mask",
                expected: positions.len(),
                actual: mask.len(),
            });
        }
        let n = positions.len() / k;
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::DimensionMismatch { context: "dataset labels", expected: n, actual: labels.len() });
            }
        }
        if let Some(i) = (0..n).find(|i| !mask[i * k..(i + 1) * k].iter().any(|m| *m)) {
            return Err(Error::invalid(format!("point {i} is never observed")));
        }
        if positions.as_flattened().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset positions".into()));
        }
        Ok(Self { positions, mask, domain, labels })
    }

    pub fn fully_observed(positions: Vec<[f64; 3]>, domain: TimeDomain) -> Result<Self> {
        let mask = vec![true; positions.len()];
        Self::new(positions, mask, domain, None)
    }

    pub fn num_points(&self) -> usize {
        self.positions.len() / self.domain.len()
    }

    pub fn num_frames(&self) -> usize {
        self.domain.len()
    }

    pub fn domain(&self) -> &TimeDomain {
        &self.domain
    }

    /// Frame times mapped to `[0, 1]`.
    pub fn normalized_times(&self) -> Vec<f64> {
        let duration = self.domain.duration();
        self.domain.timestamps().iter().map(|t| t / duration).collect()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn labels(&self) -> Option<&[PointLabel]> {
        self.labels.as_deref()
    }

    pub fn track(&self, i: usize) -> &[[f64; 3]] {
        let k = self.num_frames();
        &self.positions[i * k..(i + 1) * k]
    }

    pub fn observed(&self, i: usize, k: usize) -> bool {
        self.mask[i * self.num_frames() + k]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|m| *m)
    }

    /// First observed position of each point.
    pub fn first_observations(&self) -> Vec<[f64; 3]> {
        let k = self.num_frames();
        (0..self.num_points())
            .map(|i| {
                let f = (0..k).find(|f| self.mask[i * k + f]).unwrap_or(0);
                self.positions[i * k + f]
            })
            .collect()
    }
}

/// Which kind of synthetic motion to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Blobs that translate along curved paths while spinning rigidly.
    RigidCluster { clusters: usize, points_per_cluster: usize },
    /// A static base and an arm swinging about a hinge.
    ArticulatedTwoPart { points_per_part: usize },
    /// Balls bouncing vertically at integer frequencies.
    PeriodicBouncer { balls: usize, points_per_ball: usize },
    /// Translating blobs over a static ground plane.
    MoversPlusStaticBackground { movers: usize, points_per_mover: usize, background_points: usize },
    /// Movers that each scale one Fourier basis along a fixed direction;
    /// the centered trajectory stack has rank exactly `rank`.
    ExactRank { rank: usize, points_per_mover: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub frames: usize,
    pub duration: f64,
    /// Motion amplitude in scene units.
    pub amplitude: f64,
    /// Standard deviation of observation noise.
    pub noise: f64,
    /// Probability that an observation is dropped (frame 0 is kept if a
    /// point would otherwise be unobserved).
    pub missing_fraction: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        Self { kind, frames: 40, duration: 1.0, amplitude: 0.5, noise: 0.0, missing_fraction: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        use GeneratorKind::*;
        let counts: &[usize] = match &self.kind {
            RigidCluster { clusters, points_per_cluster } => &[*clusters, *points_per_cluster],
            ArticulatedTwoPart { points_per_part } => &[*points_per_part],
            PeriodicBouncer { balls, points_per_ball } => &[*balls, *points_per_ball],
            MoversPlusStaticBackground { movers, points_per_mover, .. } => &[*movers, *points_per_mover],
            ExactRank { rank, points_per_mover } => &[*rank, *points_per_mover],
        };
        if counts.contains(&0) || self.frames == 0 {
            return Err(Error::invalid("generator counts must be at least 1"));
        }
        if !(self.noise >= 0.0) || !(0.0..1.0).contains(&self.missing_fraction) || !(self.amplitude.is_finite()) {
            return Err(Error::invalid("generator noise, amplitude or missing fraction out of range"));
        }
        Ok(())
    }
}

/// Named generator configurations shipped with the engine.
pub fn bundled_scenes() -> Vec<(&'static str, GeneratorSpec)> {
    use GeneratorKind::*;
    let spec = |kind, seed| GeneratorSpec { seed, ..GeneratorSpec::new(kind) };
    vec![
        ("rank1", spec(ExactRank { rank: 1, points_per_mover: 60 }, 1)),
        ("two-movers", spec(ExactRank { rank: 2, points_per_mover: 50 }, 2)),
        ("rank3", spec(ExactRank { rank: 3, points_per_mover: 50 }, 3)),
        ("three-movers", spec(MoversPlusStaticBackground { movers: 3, points_per_mover: 50, background_points: 0 }, 4)),
        (
            "static-background",
            spec(MoversPlusStaticBackground { movers: 2, points_per_mover: 40, background_points: 80 }, 5),
        ),
        ("rigid-clusters", spec(RigidCluster { clusters: 3, points_per_cluster: 40 }, 6)),
        ("articulated", spec(ArticulatedTwoPart { points_per_part: 60 }, 7)),
        ("bouncer", spec(PeriodicBouncer { balls: 3, points_per_ball: 30 }, 8)),
    ]
}

pub fn bundled_scene(name: &str) -> Option<GeneratorSpec> {
    bundled_scenes().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}

struct Clean {
    /// Point-major `N x K` noise-free positions.
    positions: Vec<[f64; 3]>,
    labels: Vec<PointLabel>,
}

/// Deterministic given the generator seed.
pub fn generate(spec: &GeneratorSpec) -> Result<TrajectoryDataset> {
    spec.validate()?;
    let domain = TimeDomain::uniform(spec.duration, spec.frames)?;
    let times: Vec<f64> = domain.timestamps().iter().map(|t| t / spec.duration).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clean = match spec.kind {
        GeneratorKind::ExactRank { rank, points_per_mover } => {
            exact_rank_params(&mut rng, rank, points_per_mover, spec.amplitude).trajectories(&times)
        }
        GeneratorKind::MoversPlusStaticBackground { movers, points_per_mover, background_points } => {
            movers_with_background(&mut rng, &times, movers, points_per_mover, background_points, spec.amplitude)
        }
        GeneratorKind::RigidCluster { clusters, points_per_cluster } => {
            rigid_clusters(&mut rng, &times, clusters, points_per_cluster, spec.amplitude)
        }
        GeneratorKind::ArticulatedTwoPart { points_per_part } => {
            articulated(&mut rng, &times, points_per_part, spec.amplitude)
        }
        GeneratorKind::PeriodicBouncer { balls, points_per_ball } => {
            bouncer(&mut rng, &times, balls, points_per_ball, spec.amplitude)
        }
    };
    let k = times.len();
    let n = clean.labels.len();
    // Noise and dropout draw from their own stream so they never perturb geometry.
    let mut obs_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut positions = clean.positions;
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|_| Error::invalid("noise"))?;
        for v in positions.as_flattened_mut() {
            *v += normal.sample(&mut obs_rng);
        }
    }
    let mut mask = vec![true; n * k];
    if spec.missing_fraction > 0.0 {
        for i in 0..n {
            let row = &mut mask[i * k..(i + 1) * k];
            for m in row.iter_mut() {
                *m = !obs_rng.random_bool(spec.missing_fraction);
            }
            if !row.iter().any(|m| *m) {
                row[0] = true;
            }
        }
    }
    TrajectoryDataset::new(positions, mask, domain, Some(clean.labels))
}

/// The exact-rank generator's own parameters expressed as a model: a cloud
/// with per-coordinate coefficients over a Fourier basis of size `rank`.
pub fn exact_rank_model(spec: &GeneratorSpec) -> Result<(GaussianCloud, FourierBasis)> {
    spec.validate()?;
    let GeneratorKind::ExactRank { rank, points_per_mover } = spec.kind else {
        return Err(Error::Unsupported("ground-truth model exists only for exact-rank scenes"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let params = exact_rank_params(&mut rng, rank, points_per_mover, spec.amplitude);
    let mut cloud = GaussianCloud::from_means(params.canonical.clone(), rank, CoefficientLayout::PerCoordinate);
    for (i, (&mover, &scale)) in params.mover.iter().zip(&params.scale).enumerate() {
        let block = &mut cloud.coefficients.row_mut(i)[mover * 7..mover * 7 + 3];
        for d in 0..3 {
            block[d] = scale * params.directions[mover][d];
        }
    }
    Ok((cloud, FourierBasis::new(rank)?))
}

struct ExactRankParams {
    canonical: Vec<[f64; 3]>,
    mover: Vec<usize>,
    scale: Vec<f64>,
    directions: Vec<[f64; 3]>,
}

impl ExactRankParams {
    fn trajectories(&self, times: &[f64]) -> Clean {
        let mut positions = Vec::with_capacity(self.canonical.len() * times.len());
        for i in 0..self.canonical.len() {
            let j = self.mover[i];
            let freq = 2.0 * PI * (j + 1) as f64;
            for &u in times {
                // odd 1-based index -> cosine, even -> sine
                let wave = if j.is_multiple_of(2) { libm::cos(freq * u) } else { libm::sin(freq * u) };
                let s = self.scale[i] * wave;
                let c = self.canonical[i];
                let dir = self.directions[j];
                positions.push([c[0] + s * dir[0], c[1] + s * dir[1], c[2] + s * dir[2]]);
            }
        }
        let labels = self
            .mover
            .iter()
            .map(|&j| PointLabel { mover: Some(j as u32), basis: Some(j as u32), is_static: false })
            .collect();
        Clean { positions, labels }
    }
}

fn exact_rank_params(rng: &mut ChaCha8Rng, rank: usize, per_mover: usize, amplitude: f64) -> ExactRankParams {
    let mut out = ExactRankParams { canonical: vec![], mover: vec![], scale: vec![], directions: vec![] };
    for j in 0..rank {
        let center = uniform_box(rng, 1.0);
        out.directions.push(unit_vector(rng).map(|v| v * amplitude));
        // Amplitude varies linearly across the blob, between 0.6 and 1.4.
        let gradient = unit_vector(rng);
        for _ in 0..per_mover {
            let offset = ball(rng, 0.2);
            let along = (offset[0] * gradient[0] + offset[1] * gradient[1] + offset[2] * gradient[2]) / 0.2;
            out.canonical.push(add(center, offset));
            out.mover.push(j);
            out.scale.push(1.0 + 0.4 * along);
        }
    }
    out
}

fn movers_with_background(
    rng: &mut ChaCha8Rng,
    times: &[f64],
    movers: usize,
    per_mover: usize,
    background: usize,
    amplitude: f64,
) -> Clean {
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    for m in 0..movers {
        let center = uniform_box(rng, 0.8);
        // Independent movers: redraw paths that nearly repeat an earlier one.
        let mut path = SmoothPath::random(rng, amplitude);
        for _ in 0..1000 {
            let curve: Vec<f64> = times.iter().flat_map(|&u| path.at(u)).collect();
            if accepted.iter().all(|other| libm::fabs(cosine(&curve, other)) <= MAX_PATH_COSINE) {
                accepted.push(curve);
                break;
            }
            path = SmoothPath::random(rng, amplitude);
        }
        for _ in 0..per_mover {
            let p = add(center, ball(rng, 0.15));
            positions.extend(times.iter().map(|&u| add(p, path.at(u))));
            labels.push(PointLabel { mover: Some(m as u32), basis: Some(m as u32), is_static: false });
        }
    }
    for _ in 0..background {
        let p = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), -1.2];
        positions.extend(times.iter().map(|_| p));
        labels.push(PointLabel { mover: None, basis: None, is_static: true });
    }
    Clean { positions, labels }
}

fn rigid_clusters(rng: &mut ChaCha8Rng, times: &[f64], clusters: usize, per_cluster: usize, amplitude: f64) -> Clean {
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for c in 0..clusters {
        let center = uniform_box(rng, 0.8);
        let path = SmoothPath::random(rng, amplitude);
        let axis = unit_vector(rng);
        let spin = amplitude * PI * rng.random_range(0.5..1.0);
        for _ in 0..per_cluster {
            let offset = ball(rng, 0.2);
            positions.extend(times.iter().map(|&u| {
                let rotated = rotate(axis, spin * u, offset);
                add(add(center, path.at(u)), rotated)
            }));
            labels.push(PointLabel { mover: Some(c as u32), basis: None, is_static: false });
        }
    }
    Clean { positions, labels }
}

fn articulated(rng: &mut ChaCha8Rng, times: &[f64], per_part: usize, amplitude: f64) -> Clean {
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    let thickness = |rng: &mut ChaCha8Rng| [0.0, rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
    for _ in 0..per_part {
        let p = add([rng.random_range(-0.8..0.0), 0.0, 0.0], thickness(rng));
        positions.extend(times.iter().map(|_| p));
        labels.push(PointLabel { mover: None, basis: None, is_static: true });
    }
    let swing = amplitude * PI / 1.5;
    for _ in 0..per_part {
        let p = add([rng.random_range(0.05..0.8), 0.0, 0.0], thickness(rng));
        positions.extend(times.iter().map(|&u| rotate([0.0, 0.0, 1.0], swing * libm::sin(PI * u), p)));
        labels.push(PointLabel { mover: Some(0), basis: None, is_static: false });
    }
    Clean { positions, labels }
}

fn bouncer(rng: &mut ChaCha8Rng, times: &[f64], balls: usize, per_ball: usize, amplitude: f64) -> Clean {
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    for b in 0..balls {
        let center = [-1.0 + 2.0 * (b as f64 + 0.5) / balls as f64, 0.0, 0.0];
        let freq = rng.random_range(1..=3) as f64;
        let phase = rng.random_range(0.0..PI);
        for _ in 0..per_ball {
            let p = add(center, ball(rng, 0.1));
            positions.extend(times.iter().map(|&u| {
                let h = amplitude * libm::fabs(libm::sin(PI * freq * u + phase));
                [p[0], p[1], p[2] + h]
            }));
            labels.push(PointLabel { mover: Some(b as u32), basis: None, is_static: false });
        }
    }
    Clean { positions, labels }
}

/// Largest |cosine| allowed between two movers' displacement curves.
const MAX_PATH_COSINE: f64 = 0.5;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / libm::sqrt(na * nb)
}

/// Smooth, non-periodic displacement with `at(0) = 0`.
struct SmoothPath {
    linear: [f64; 3],
    quadratic: [f64; 3],
    bump: [f64; 3],
}

impl SmoothPath {
    fn random(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let mut v = || unit_vector(rng).map(|x| x * amplitude);
        Self { linear: v(), quadratic: v().map(|x| 0.5 * x), bump: v().map(|x| 0.3 * x) }
    }

    fn at(&self, u: f64) -> [f64; 3] {
        let s = libm::sin(PI * u);
        core::array::from_fn(|d| self.linear[d] * u + self.quadratic[d] * u * u + self.bump[d] * s)
    }
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn uniform_box(rng: &mut ChaCha8Rng, half: f64) -> [f64; 3] {
    core::array::from_fn(|_| rng.random_range(-half..half))
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = uniform_box(rng, 1.0);
        let n = libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn ball(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 3] {
    loop {
        let v = uniform_box(rng, 1.0);
        if v[0] * v[0] + v[1] * v[1] + v[2] * v[2] <= 1.0 {
            return v.map(|x| x * radius);
        }
    }
}

/// Rodrigues rotation of `v` about unit `axis` by `angle`.
fn rotate(axis: [f64; 3], angle: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    let dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    let cross = [axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2], axis[0] * v[1] - axis[1] * v[0]];
    core::array::from_fn(|d| v[d] * c + cross[d] * s + axis[d] * dot * (1.0 - c))
}
