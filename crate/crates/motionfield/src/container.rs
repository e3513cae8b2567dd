//! Self-describing binary container shared by dataset and scene files.
//!
//! ```text
//! offset 0   magic       8 bytes, identifies the file kind
//! offset 8   header_len  u64 little-endian
//! offset 16  header      header_len bytes of UTF-8 JSON
//! then       sections    raw little-endian arrays, in header order, unpadded
//! ```
//!
//! The header is a JSON object whose `sections` array lists every payload
//! section as `{"name", "dtype", "count"}` with dtype `f64`, `u32` or `u8`.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PREAMBLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    U32,
    U8,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::U32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionData {
    F64(Vec<f64>),
    U32(Vec<u32>),
    U8(Vec<u8>),
}

impl SectionData {
    fn dtype(&self) -> Dtype {
        match self {
            SectionData::F64(_) => Dtype::F64,
            SectionData::U32(_) => Dtype::U32,
            SectionData::U8(_) => Dtype::U8,
        }
    }

    fn len(&self) -> usize {
        match self {
            SectionData::F64(v) => v.len(),
            SectionData::U32(v) => v.len(),
            SectionData::U8(v) => v.len(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            SectionData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            SectionData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            SectionData::U8(v) => out.extend_from_slice(v),
        }
    }

    fn read_le(dtype: Dtype, bytes: &[u8]) -> Self {
        match dtype {
            Dtype::F64 => SectionData::F64(
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect(),
            ),
            Dtype::U32 => SectionData::U32(
                bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk"))).collect(),
            ),
            Dtype::U8 => SectionData::U8(bytes.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub dtype: Dtype,
    pub count: u64,
}

#[derive(Serialize, Deserialize)]
struct Envelope<H> {
    #[serde(flatten)]
    header: H,
    sections: Vec<SectionInfo>,
}

/// Encodes `header` plus named sections. Equal inputs give equal bytes.
pub fn encode<H: Serialize>(magic: &[u8; 8], header: &H, sections: Vec<(&str, SectionData)>) -> Result<Vec<u8>> {
    let infos = sections
        .iter()
        .map(|(name, data)| SectionInfo { name: (*name).to_owned(), dtype: data.dtype(), count: data.len() as u64 })
        .collect();
    let json = serde_json::to_vec(&Envelope { header, sections: infos })
        .map_err(|e| Error::invalid(format!("header does not serialize: {e}")))?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, data) in &sections {
        data.write_le(&mut out);
    }
    Ok(out)
}

/// Sections of a decoded container, by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Payload {
    sections: BTreeMap<String, (u64, SectionData)>,
}

impl Payload {
    pub fn contains(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    /// Fails if any section was not taken.
    pub fn finish(self) -> Result<()> {
        match self.sections.into_iter().next() {
            Some((name, (offset, _))) => Err(Error::parse(offset, format!("unexpected section '{name}'"))),
            None => Ok(()),
        }
    }

    fn take(&mut self, name: &str) -> Result<(u64, SectionData)> {
        self.sections.remove(name).ok_or_else(|| Error::parse(0, format!("missing section '{name}'")))
    }

    /// Takes an `f64` section that must hold exactly `count` values.
    pub fn f64s(&mut self, name: &str, count: usize) -> Result<Vec<f64>> {
        match self.take(name)? {
            (_, SectionData::F64(v)) if v.len() == count => Ok(v),
            (offset, d) => Err(Error::parse(offset, format!("section '{name}' must be {count} f64, got {d:?}"))),
        }
    }

    pub fn u32s(&mut self, name: &str, count: usize) -> Result<Vec<u32>> {
        match self.take(name)? {
            (_, SectionData::U32(v)) if v.len() == count => Ok(v),
            (offset, _) => Err(Error::parse(offset, format!("section '{name}' must be {count} u32"))),
        }
    }

    pub fn u8s(&mut self, name: &str, count: usize) -> Result<Vec<u8>> {
        match self.take(name)? {
            (_, SectionData::U8(v)) if v.len() == count => Ok(v),
            (offset, _) => Err(Error::parse(offset, format!("section '{name}' must be {count} u8"))),
        }
    }
}

/// Decodes a container, rejecting a wrong magic, a malformed header, a
/// truncated payload or trailing bytes. Errors carry the byte offset.
pub fn decode<H: DeserializeOwned>(magic: &[u8; 8], bytes: &[u8]) -> Result<(H, Payload)> {
    if bytes.len() < PREAMBLE {
        return Err(Error::parse(bytes.len() as u64, "file shorter than its 16-byte preamble"));
    }
    if &bytes[..8] != magic {
        return Err(Error::parse(0, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = (PREAMBLE as u64).checked_add(header_len).filter(|end| *end <= bytes.len() as u64);
    let Some(header_end) = header_end else {
        return Err(Error::parse(8, format!("header length {header_len} exceeds file size {}", bytes.len())));
    };
    let header_end = header_end as usize;
    let envelope: Envelope<H> = serde_json::from_slice(&bytes[PREAMBLE..header_end]).map_err(|e| {
        // The header is written on one line, so the column locates the byte.
        let offset =
            if e.line() == 1 { PREAMBLE as u64 + e.column().saturating_sub(1) as u64 } else { PREAMBLE as u64 };
        Error::parse(offset, format!("malformed header: {e}"))
    })?;
    let mut offset = header_end;
    let mut payload = Payload::default();
    for info in &envelope.sections {
        let size = usize::try_from(info.count)
            .ok()
            .and_then(|c| c.checked_mul(info.dtype.width()))
            .ok_or_else(|| Error::parse(offset as u64, format!("section '{}' is too large", info.name)))?;
        let Some(end) = offset.checked_add(size).filter(|end| *end <= bytes.len()) else {
            return Err(Error::parse(
                bytes.len() as u64,
                format!("truncated: section '{}' needs {size} bytes from offset {offset}", info.name),
            ));
        };
        let data = SectionData::read_le(info.dtype, &bytes[offset..end]);
        if payload.sections.insert(info.name.clone(), (offset as u64, data)).is_some() {
            return Err(Error::parse(offset as u64, format!("duplicate section '{}'", info.name)));
        }
        offset = end;
    }
    if offset != bytes.len() {
        return Err(Error::parse(offset as u64, format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok((envelope.header, payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Header {
        version: u32,
        note: String,
    }

    const MAGIC: &[u8; 8] = b"MFTEST\0\0";

    fn sample() -> Vec<u8> {
        let header = Header { version: 1, note: "x".into() };
        let sections = vec![
            ("a", SectionData::F64(vec![1.5, -0.0, f64::MIN_POSITIVE])),
            ("b", SectionData::U32(vec![7, u32::MAX])),
            ("c", SectionData::U8(vec![0, 1, 1])),
        ];
        encode(MAGIC, &header, sections).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let bytes = sample();
        let (header, mut payload): (Header, Payload) = decode(MAGIC, &bytes).unwrap();
        assert_eq!(header, Header { version: 1, note: "x".into() });
        let a = payload.f64s("a", 3).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            [1.5f64, -0.0, f64::MIN_POSITIVE].map(f64::to_bits)
        );
        assert_eq!(payload.u32s("b", 2).unwrap(), vec![7, u32::MAX]);
        assert_eq!(payload.u8s("c", 3).unwrap(), vec![0, 1, 1]);
        assert!(payload.f64s("a", 3).is_err());
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 16 + header_len + 3 * 8 + 2 * 4 + 3);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = sample();
        for len in 0..bytes.len() {
            let err = decode::<Header>(MAGIC, &bytes[..len]).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "len {len}: {err}");
        }
    }

    #[test]
    fn errors_locate_the_problem() {
        let bytes = sample();
        let Error::Parse { offset, .. } = decode::<Header>(b"OTHER\0\0\0", &bytes).unwrap_err() else { panic!() };
        assert_eq!(offset, 0);
        let mut extra = bytes.clone();
        extra.push(9);
        let Error::Parse { offset, .. } = decode::<Header>(MAGIC, &extra).unwrap_err() else { panic!() };
        assert_eq!(offset, bytes.len() as u64);
        let mut broken = bytes.clone();
        broken[16] = b'[';
        let Error::Parse { offset, .. } = decode::<Header>(MAGIC, &broken).unwrap_err() else { panic!() };
        assert!(offset >= 16);
        let Error::Parse { offset, .. } = decode::<Header>(MAGIC, &bytes[..bytes.len() - 1]).unwrap_err() else {
            panic!()
        };
        assert_eq!(offset, bytes.len() as u64 - 1);
    }
}
