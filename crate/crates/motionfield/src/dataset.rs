//! Trajectory dataset files.
//!
//! Container magic `MFDATA\0\0`. Header fields: `format`, `version`,
//! `num_points` N, `num_frames` K, `duration`, `has_labels`. Sections:
//! `timestamps` (K f64), `positions` (N*K*3 f64, point-major),
//! `mask` (N*K u8, 0 or 1) and, with labels, `labels` (N*3 u32: mover,
//! basis, static flag; `u32::MAX` marks an absent mover or basis).

use std::path::Path;

use motionfield_core::scene::TimeDomain;
use motionfield_core::{PointLabel, TrajectoryDataset};
use serde::{Deserialize, Serialize};

use crate::container::{self, SectionData};
use crate::error::{Error, Result};
use crate::fsio;

pub const MAGIC: &[u8; 8] = b"MFDATA\0\0";
pub const FORMAT: &str = "motionfield-dataset";
pub const VERSION: u32 = 1;
const ABSENT: u32 = u32::MAX;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    num_points: u64,
    num_frames: u64,
    duration: f64,
    has_labels: bool,
}

pub fn to_bytes(dataset: &TrajectoryDataset) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        num_points: dataset.num_points() as u64,
        num_frames: dataset.num_frames() as u64,
        duration: dataset.domain().duration(),
        has_labels: dataset.labels().is_some(),
    };
    let mut sections = vec![
        ("timestamps", SectionData::F64(dataset.domain().timestamps().to_vec())),
        ("positions", SectionData::F64(dataset.positions().as_flattened().to_vec())),
        ("mask", SectionData::U8(dataset.mask().iter().map(|m| u8::from(*m)).collect())),
    ];
    if let Some(labels) = dataset.labels() {
        let flat = labels
            .iter()
            .flat_map(|l| [l.mover.unwrap_or(ABSENT), l.basis.unwrap_or(ABSENT), u32::from(l.is_static)])
            .collect();
        sections.push(("labels", SectionData::U32(flat)));
    }
    container::encode(MAGIC, &header, sections)
}

/// Parses and validates a dataset; nothing is returned on any error.
pub fn from_bytes(bytes: &[u8]) -> Result<TrajectoryDataset> {
    let (header, mut payload): (Header, _) = container::decode(MAGIC, bytes)?;
    if header.format != FORMAT {
        return Err(Error::parse(16, format!("format '{}' is not a dataset", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Version { format: FORMAT, found: header.version, expected: VERSION });
    }
    let (n, k) = (to_usize(header.num_points)?, to_usize(header.num_frames)?);
    if k == 0 {
        return Err(Error::invalid("dataset has no frames"));
    }
    let timestamps = payload.f64s("timestamps", k)?;
    let flat = payload.f64s("positions", n * k * 3)?;
    let mask = payload.u8s("mask", n * k)?;
    if let Some(bad) = mask.iter().find(|m| **m > 1) {
        return Err(Error::invalid(format!("mask byte {bad} is not 0 or 1")));
    }
    let labels = if header.has_labels {
        let raw = payload.u32s("labels", n * 3)?;
        let opt = |v: u32| (v != ABSENT).then_some(v);
        Some(
            raw.chunks_exact(3)
                .map(|c| PointLabel { mover: opt(c[0]), basis: opt(c[1]), is_static: c[2] != 0 })
                .collect(),
        )
    } else {
        None
    };
    payload.finish()?;
    let domain = TimeDomain::new(header.duration, timestamps)?;
    let positions = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(TrajectoryDataset::new(positions, mask.iter().map(|m| *m == 1).collect(), domain, labels)?)
}

fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::invalid(format!("count {v} does not fit in memory")))
}

pub fn save(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &to_bytes(dataset)?)
}

pub fn load(path: &Path) -> Result<TrajectoryDataset> {
    from_bytes(&fsio::read(path)?)
}
