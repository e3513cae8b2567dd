//! Viewer export: sampled basis values plus per-point data, so a viewer
//! only needs linear blending
//! `x_i(t_k) = x_c,i + sum_{j enabled} c_ij * b_j(t_k)` (componentwise).
//!
//! A directory holding `manifest.json` and one raw little-endian buffer per
//! entry of its `buffers` list (`{name, file, dtype, shape}`):
//!
//! | buffer              | dtype | shape     |
//! |---------------------|-------|-----------|
//! | `times`             | f64   | K         |
//! | `basis_translation` | f64   | K x B x 3 |
//! | `canonical`         | f64   | N x 3     |
//! | `coefficients`      | f64   | N x B x 3 |
//! | `labels`            | u32   | N         |
//! | `colors`            | f64   | N x 3     |
//! | `reference`         | f64   | K x N x 3 |
//!
//! Scalar bases are replicated over the three coordinates and shared
//! coefficients likewise, so both layouts blend the same way. Labels are the
//! 1-based dominant basis (ties and all-zero rows go to the lowest index).
//! `reference` holds the engine's posed means with every basis enabled.

use std::path::Path;

use motionfield_core::scene::pose_at;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::scene_file::{triples, SceneFile};

pub const FORMAT: &str = "motionfield-viewer";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferInfo {
    pub name: String,
    pub file: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub num_points: usize,
    pub num_basis: usize,
    pub num_frames: usize,
    pub duration: f64,
    pub buffers: Vec<BufferInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewerExport {
    pub duration: f64,
    pub times: Vec<f64>,
    /// `K x B` translation samples, frame-major.
    pub basis_translation: Vec<[f64; 3]>,
    pub canonical: Vec<[f64; 3]>,
    /// `N x B` per-coordinate translation coefficients, point-major.
    pub coefficients: Vec<[f64; 3]>,
    pub labels: Vec<u32>,
    pub colors: Vec<[f64; 3]>,
    /// `K x N` posed means, frame-major.
    pub reference: Vec<[f64; 3]>,
}

impl ViewerExport {
    /// Samples `scene` at `frames` evenly spaced times over its domain.
    pub fn build(scene: &SceneFile, frames: usize) -> Result<Self> {
        if frames < 2 {
            return Err(Error::invalid(format!("viewer export needs at least 2 frames, got {frames}")));
        }
        scene.validate()?;
        let (cloud, basis) = (&scene.cloud, &scene.basis);
        let (n, b) = (cloud.len(), cloud.num_basis());
        let duration = scene.domain.duration();
        let times: Vec<f64> = (0..frames).map(|k| duration * k as f64 / (frames - 1) as f64).collect();
        let mut basis_translation = Vec::with_capacity(frames * b);
        let mut reference = Vec::with_capacity(frames * n);
        for &t in &times {
            let sample = basis.sample(scene.domain.normalize(t)?)?;
            basis_translation.extend((0..b).map(|j| std::array::from_fn(|d| sample.translation(j, d))));
            reference.extend(pose_at(cloud, basis, &scene.domain, t)?.means);
        }
        let c = &cloud.coefficients;
        let coefficients =
            (0..n).flat_map(|i| (0..b).map(move |j| std::array::from_fn(|d| c.translation(i, j, d)))).collect();
        let labels = (0..n).map(|i| c.dominant(i).map_or(1, |j| j as u32 + 1)).collect();
        Ok(Self {
            duration,
            times,
            basis_translation,
            canonical: cloud.means.clone(),
            coefficients,
            labels,
            colors: cloud.colors.clone(),
            reference,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.times.len()
    }

    pub fn num_points(&self) -> usize {
        self.canonical.len()
    }

    pub fn num_basis(&self) -> usize {
        self.basis_translation.len() / self.times.len().max(1)
    }

    /// Positions at frame `k` with bases enabled per `enabled` (0-based).
    pub fn blend(&self, k: usize, enabled: &[bool]) -> Result<Vec<[f64; 3]>> {
        let b = self.num_basis();
        if k >= self.num_frames() {
            return Err(Error::invalid(format!("frame {k} out of range for {} frames", self.num_frames())));
        }
        if enabled.len() != b {
            return Err(Error::invalid(format!("enabled set has {} entries for {b} bases", enabled.len())));
        }
        let sample = &self.basis_translation[k * b..(k + 1) * b];
        Ok(self
            .canonical
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut p = *x;
                for j in (0..b).filter(|j| enabled[*j]) {
                    let c = self.coefficients[i * b + j];
                    for d in 0..3 {
                        p[d] += c[d] * sample[j][d];
                    }
                }
                p
            })
            .collect())
    }

    fn manifest(&self) -> Manifest {
        let (k, n, b) = (self.num_frames(), self.num_points(), self.num_basis());
        let info = |name: &str, dtype: &str, shape: Vec<usize>| BufferInfo {
            name: name.into(),
            file: format!("{name}.bin"),
            dtype: dtype.into(),
            shape,
        };
        Manifest {
            format: FORMAT.into(),
            version: VERSION,
            num_points: n,
            num_basis: b,
            num_frames: k,
            duration: self.duration,
            buffers: vec![
                info("times", "f64", vec![k]),
                info("basis_translation", "f64", vec![k, b, 3]),
                info("canonical", "f64", vec![n, 3]),
                info("coefficients", "f64", vec![n, b, 3]),
                info("labels", "u32", vec![n]),
                info("colors", "f64", vec![n, 3]),
                info("reference", "f64", vec![k, n, 3]),
            ],
        }
    }

    /// Writes the buffers, then the manifest, creating `dir` if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for info in &manifest.buffers {
            let bytes = match info.name.as_str() {
                "times" => f64_bytes(&self.times),
                "basis_translation" => f64_bytes(self.basis_translation.as_flattened()),
                "canonical" => f64_bytes(self.canonical.as_flattened()),
                "coefficients" => f64_bytes(self.coefficients.as_flattened()),
                "labels" => self.labels.iter().flat_map(|l| l.to_le_bytes()).collect(),
                "colors" => f64_bytes(self.colors.as_flattened()),
                "reference" => f64_bytes(self.reference.as_flattened()),
                other => unreachable!("unknown buffer {other}"),
            };
            fsio::write_atomic(&dir.join(&info.file), &bytes)?;
        }
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
        fsio::write_atomic(&dir.join(MANIFEST), &json)
    }

    /// Reads and checks an export written by [`write`](Self::write).
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let manifest: Manifest = serde_json::from_slice(&fsio::read(&path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if manifest.format != FORMAT {
            return Err(Error::invalid(format!(
                "{}: format '{}' is not a viewer export",
                path.display(),
                manifest.format
            )));
        }
        if manifest.version != VERSION {
            return Err(Error::Version { format: FORMAT, found: manifest.version, expected: VERSION });
        }
        let (k, n, b) = (manifest.num_frames, manifest.num_points, manifest.num_basis);
        if k < 2 || b == 0 {
            return Err(Error::invalid("viewer export needs at least 2 frames and 1 basis"));
        }
        let expected = ViewerExport {
            duration: manifest.duration,
            times: vec![0.0; k],
            basis_translation: vec![[0.0; 3]; k * b],
            canonical: vec![[0.0; 3]; n],
            coefficients: vec![],
            labels: vec![],
            colors: vec![],
            reference: vec![],
        }
        .manifest();
        let buffer = |name: &str| -> Result<Vec<u8>> {
            let info = manifest
                .buffers
                .iter()
                .find(|i| i.name == name)
                .ok_or_else(|| Error::invalid(format!("manifest lacks buffer '{name}'")))?;
            let want = expected.buffers.iter().find(|i| i.name == name).expect("known buffer");
            if info.dtype != want.dtype || info.shape != want.shape {
                return Err(Error::invalid(format!("buffer '{name}' has dtype {} shape {:?}", info.dtype, info.shape)));
            }
            if info.file.contains(['/', '\\']) || info.file.starts_with('.') {
                return Err(Error::invalid(format!("buffer file '{}' is not a plain file name", info.file)));
            }
            let bytes = fsio::read(&dir.join(&info.file))?;
            let width = if info.dtype == "u32" { 4 } else { 8 };
            let count: usize = info.shape.iter().product();
            if bytes.len() != count * width {
                return Err(Error::parse(
                    bytes.len().min(count * width) as u64,
                    format!("buffer '{name}' holds {} bytes, expected {}", bytes.len(), count * width),
                ));
            }
            Ok(bytes)
        };
        let f64s = |name: &str| buffer(name).map(|b| from_f64_bytes(&b));
        let export = ViewerExport {
            duration: manifest.duration,
            times: f64s("times")?,
            basis_translation: triples(&f64s("basis_translation")?),
            canonical: triples(&f64s("canonical")?),
            coefficients: triples(&f64s("coefficients")?),
            labels: buffer("labels")?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4"))).collect(),
            colors: triples(&f64s("colors")?),
            reference: triples(&f64s("reference")?),
        };
        if let Some(bad) = export.labels.iter().find(|l| !(1..=b as u32).contains(*l)) {
            return Err(Error::invalid(format!("label {bad} outside 1..={b}")));
        }
        Ok(export)
    }
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn from_f64_bytes(b: &[u8]) -> Vec<f64> {
    b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect()
}
