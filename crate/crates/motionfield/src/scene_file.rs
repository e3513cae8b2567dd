//! Scene files: a fitted cloud, its motion basis, time domain and fit
//! provenance.
//!
//! Container magic `MFSCENE\0`. Header fields: `format`, `version`,
//! `family` (`fourier` | `mlp`), `num_basis` B, `layout` (`shared` |
//! `per-coordinate`), `mlp` (`{freqs, width, depth}` or null),
//! `num_points` N, `duration`, `num_frames` K and `provenance` (or null).
//! Sections, all f64: `timestamps` (K), `means` (N*3), `rotations` (N*4),
//! `log_scales` (N*3), `opacity_logits` (N), `colors` (N*3),
//! `coefficients` (N*B*w, w = 1 shared or 7 per-coordinate) and, for the
//! MLP family, `mlp_params`.

use std::path::Path;

use motionfield_core::fit::LossReport;
use motionfield_core::{
    BasisFamily, CoefficientLayout, Coefficients, FourierBasis, GaussianCloud, MlpBasis, MlpShape, MotionBasis,
    TimeDomain,
};
use serde::{Deserialize, Serialize};

use crate::container::{self, SectionData};
use crate::error::{Error, Result};
use crate::fsio;

pub const MAGIC: &[u8; 8] = b"MFSCENE\0";
pub const FORMAT: &str = "motionfield-scene";
pub const VERSION: u32 = 1;

/// Loss terms as recorded in a scene's provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub reconstruction: f64,
    pub l1: f64,
    pub sparsity: f64,
    pub rigidity: f64,
    pub total: f64,
}

impl From<&LossReport> for Losses {
    fn from(r: &LossReport) -> Self {
        Self { reconstruction: r.reconstruction, l1: r.l1, sparsity: r.sparsity, rigidity: r.rigidity, total: r.total }
    }
}

/// How a scene was produced. Holds no wall-clock data, so equal fits give
/// equal files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 hex of the canonical fit settings.
    pub config_hash: String,
    pub seed: u64,
    pub final_losses: Losses,
    pub final_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub cloud: GaussianCloud,
    pub basis: MotionBasis,
    pub domain: TimeDomain,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpHeader {
    freqs: usize,
    width: usize,
    depth: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    family: String,
    num_basis: usize,
    layout: String,
    mlp: Option<MlpHeader>,
    num_points: usize,
    duration: f64,
    num_frames: usize,
    provenance: Option<Provenance>,
}

impl SceneFile {
    /// Checks that cloud, basis and domain agree.
    pub fn validate(&self) -> Result<()> {
        self.cloud.validate()?;
        if self.cloud.num_basis() != self.basis.num_basis() {
            return Err(Error::invalid(format!(
                "cloud has {} bases but the motion basis has {}",
                self.cloud.num_basis(),
                self.basis.num_basis()
            )));
        }
        if let MotionBasis::Mlp(m) = &self.basis {
            if !m.params().iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("mlp parameters are not finite"));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let cloud = &self.cloud;
        let mlp = match &self.basis {
            MotionBasis::Mlp(m) => {
                let s = m.shape();
                Some(MlpHeader { freqs: s.freqs, width: s.width, depth: s.depth })
            }
            MotionBasis::Fourier(_) => None,
        };
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            family: self.basis.family().name().into(),
            num_basis: self.basis.num_basis(),
            layout: cloud.coefficients.layout().name().into(),
            mlp,
            num_points: cloud.len(),
            duration: self.domain.duration(),
            num_frames: self.domain.len(),
            provenance: self.provenance.clone(),
        };
        let mut sections = vec![
            ("timestamps", SectionData::F64(self.domain.timestamps().to_vec())),
            ("means", SectionData::F64(cloud.means.as_flattened().to_vec())),
            ("rotations", SectionData::F64(cloud.rotations.as_flattened().to_vec())),
            ("log_scales", SectionData::F64(cloud.log_scales.as_flattened().to_vec())),
            ("opacity_logits", SectionData::F64(cloud.opacity_logits.clone())),
            ("colors", SectionData::F64(cloud.colors.as_flattened().to_vec())),
            ("coefficients", SectionData::F64(cloud.coefficients.entries().to_vec())),
        ];
        if let MotionBasis::Mlp(m) = &self.basis {
            sections.push(("mlp_params", SectionData::F64(m.params().to_vec())));
        }
        container::encode(MAGIC, &header, sections)
    }

    /// Parses and validates a scene; nothing is returned on any error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut payload): (Header, _) = container::decode(MAGIC, bytes)?;
        if header.format != FORMAT {
            return Err(Error::parse(16, format!("format '{}' is not a scene", header.format)));
        }
        if header.version != VERSION {
            return Err(Error::Version { format: FORMAT, found: header.version, expected: VERSION });
        }
        let family = BasisFamily::from_name(&header.family)
            .ok_or_else(|| Error::invalid(format!("unknown basis family '{}'", header.family)))?;
        let layout = CoefficientLayout::from_name(&header.layout)
            .ok_or_else(|| Error::invalid(format!("unknown coefficient layout '{}'", header.layout)))?;
        let (n, b) = (header.num_points, header.num_basis);
        let size = |per: usize| {
            n.checked_mul(per).ok_or_else(|| Error::invalid(format!("{n} points overflow the section size")))
        };
        let timestamps = payload.f64s("timestamps", header.num_frames)?;
        let means = payload.f64s("means", size(3)?)?;
        let rotations = payload.f64s("rotations", size(4)?)?;
        let log_scales = payload.f64s("log_scales", size(3)?)?;
        let opacity_logits = payload.f64s("opacity_logits", n)?;
        let colors = payload.f64s("colors", size(3)?)?;
        let row = b.checked_mul(layout.width()).ok_or_else(|| Error::invalid("basis count overflows"))?;
        let coefficients = Coefficients::from_entries(b, layout, payload.f64s("coefficients", size(row)?)?)?;
        if coefficients.num_points() != n {
            return Err(Error::invalid("coefficient rows do not match the point count"));
        }
        let basis = match (family, header.mlp) {
            (BasisFamily::Fourier, None) => MotionBasis::Fourier(FourierBasis::new(b)?),
            (BasisFamily::Mlp, Some(h)) => {
                let shape = MlpShape { freqs: h.freqs, width: h.width, depth: h.depth, num_basis: b };
                shape.validate()?;
                let params = payload.f64s("mlp_params", shape.param_count())?;
                MotionBasis::Mlp(MlpBasis::from_params(shape, params)?)
            }
            (BasisFamily::Fourier, Some(_)) => return Err(Error::invalid("fourier scene carries an mlp shape")),
            (BasisFamily::Mlp, None) => return Err(Error::invalid("mlp scene is missing its shape")),
        };
        payload.finish()?;
        let scene = SceneFile {
            cloud: GaussianCloud {
                means: triples(&means),
                rotations: rotations.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
                log_scales: triples(&log_scales),
                opacity_logits,
                colors: triples(&colors),
                coefficients,
            },
            basis,
            domain: TimeDomain::new(header.duration, timestamps)?,
            provenance: header.provenance,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fsio::read(path)?)
    }
}

pub(crate) fn triples(flat: &[f64]) -> Vec<[f64; 3]> {
    flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}
