//! SDFM binary container.
//!
//! Two layouts share the `SDFM` magic and are told apart by the version word:
//!
//! * version 1, a single feature matrix:
//!   `"SDFM" | u32 version | u8 modality | u32 rows | u32 cols | f32 frame_rate | u8 has_mask |
//!   rows*cols f32 (row-major) | rows u8 mask (only when has_mask = 1)`
//! * version 2, named sections (PCA models, checkpoints):
//!   `"SDFM" | u32 version | u32 count | count x (u16 name_len | name | u8 dtype | u32 rows |
//!   u32 cols | payload)` where dtype 0 = f32, 1 = f64, 2 = UTF-8 text (`rows` = byte length).
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"SDFM";
pub const MATRIX_VERSION: u32 = 1;
pub const SECTIONS_VERSION: u32 = 2;

const HEADER_LEN: usize = 22;

pub fn encode_feature_matrix<T: Real>(m: &FeatureMatrix<T>) -> Vec<u8> {
    let (rows, cols) = m.data.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4 + rows);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.push(m.modality.tag());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&(m.frame_rate as f32).to_le_bytes());
    out.push(u8::from(m.mask.is_some()));
    for &v in m.data.as_slice() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    if let Some(mask) = &m.mask {
        out.extend(mask.iter().map(|&b| u8::from(b)));
    }
    out
}

pub fn decode_feature_matrix<T: Real>(bytes: &[u8], origin: &Path) -> Result<FeatureMatrix<T>> {
    let fail = |message: String| Error::Format {
        path: origin.to_path_buf(),
        message,
    };
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(&fail)? != MAGIC {
        return Err(fail("bad magic bytes".into()));
    }
    let version = r.u32().map_err(&fail)?;
    if version != MATRIX_VERSION {
        return Err(fail(format!("expected matrix layout version 1, found {version}")));
    }
    let tag = r.u8().map_err(&fail)?;
    let modality = Modality::from_tag(tag).ok_or_else(|| fail(format!("unknown modality tag {tag}")))?;
    let rows = r.u32().map_err(&fail)? as usize;
    let cols = r.u32().map_err(&fail)? as usize;
    let frame_rate = r.f32().map_err(&fail)? as f64;
    let has_mask = match r.u8().map_err(&fail)? {
        0 => false,
        1 => true,
        other => return Err(fail(format!("mask flag must be 0 or 1, found {other}"))),
    };
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| fail("dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(T::lit(r.f32().map_err(&fail)? as f64));
    }
    let mask = if has_mask {
        let raw = r.take(rows).map_err(&fail)?;
        Some(raw.iter().map(|&b| b != 0).collect())
    } else {
        None
    };
    if !r.is_empty() {
        return Err(fail(format!("{} trailing bytes", r.remaining())));
    }
    let data = Matrix::from_vec(rows, cols, data)?;
    FeatureMatrix::new(data, modality, frame_rate, mask).map_err(|e| fail(e.to_string()))
}

pub fn write_feature_file<T: Real>(path: &Path, m: &FeatureMatrix<T>) -> Result<()> {
    write_bytes(path, &encode_feature_matrix(m))
}

pub fn read_feature_file<T: Real>(path: &Path) -> Result<FeatureMatrix<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_matrix(&bytes, path)
}

/// Payload of one named section.
#[derive(Clone, Debug, PartialEq)]
pub enum SectionData {
    F32 { rows: usize, cols: usize, data: Vec<f32> },
    F64 { rows: usize, cols: usize, data: Vec<f64> },
    Text(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub data: SectionData,
}

impl Section {
    pub fn f64(name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            data: SectionData::F64 { rows, cols, data },
        }
    }

    pub fn text(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            data: SectionData::Text(text.into()),
        }
    }

    /// Values of a numeric section widened to `f64`, with its shape.
    pub fn as_f64(&self) -> Option<(usize, usize, Vec<f64>)> {
        match &self.data {
            SectionData::F32 { rows, cols, data } => {
                Some((*rows, *cols, data.iter().map(|&x| x as f64).collect()))
            }
            SectionData::F64 { rows, cols, data } => Some((*rows, *cols, data.clone())),
            SectionData::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match &self.data {
            SectionData::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub fn encode_sections(sections: &[Section]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SECTIONS_VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for s in sections {
        let name = s.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("section name too long: {}", s.name)));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        match &s.data {
            SectionData::F32 { rows, cols, data } => {
                check_len(&s.name, *rows, *cols, data.len())?;
                out.push(0);
                out.extend_from_slice(&(*rows as u32).to_le_bytes());
                out.extend_from_slice(&(*cols as u32).to_le_bytes());
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            SectionData::F64 { rows, cols, data } => {
                check_len(&s.name, *rows, *cols, data.len())?;
                out.push(1);
                out.extend_from_slice(&(*rows as u32).to_le_bytes());
                out.extend_from_slice(&(*cols as u32).to_le_bytes());
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            SectionData::Text(text) => {
                out.push(2);
                out.extend_from_slice(&(text.len() as u32).to_le_bytes());
                out.extend_from_slice(&1u32.to_le_bytes());
                out.extend_from_slice(text.as_bytes());
            }
        }
    }
    Ok(out)
}

fn check_len(name: &str, rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows * cols != len {
        return Err(Error::Shape(format!(
            "section {name}: {len} values for a {rows}x{cols} block"
        )));
    }
    Ok(())
}

pub fn decode_sections(bytes: &[u8], origin: &Path) -> Result<Vec<Section>> {
    let fail = |message: String| Error::Format {
        path: origin.to_path_buf(),
        message,
    };
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(&fail)? != MAGIC {
        return Err(fail("bad magic bytes".into()));
    }
    let version = r.u32().map_err(&fail)?;
    if version != SECTIONS_VERSION {
        return Err(fail(format!("expected section layout version 2, found {version}")));
    }
    let count = r.u32().map_err(&fail)? as usize;
    let mut sections = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u16().map_err(&fail)? as usize;
        let name = std::str::from_utf8(r.take(name_len).map_err(&fail)?)
            .map_err(|e| fail(format!("section name: {e}")))?
            .to_string();
        let dtype = r.u8().map_err(&fail)?;
        let rows = r.u32().map_err(&fail)? as usize;
        let cols = r.u32().map_err(&fail)? as usize;
        let data = match dtype {
            0 => {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(r.f32().map_err(&fail)?);
                }
                SectionData::F32 { rows, cols, data }
            }
            1 => {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(r.f64().map_err(&fail)?);
                }
                SectionData::F64 { rows, cols, data }
            }
            2 => {
                let raw = r.take(rows).map_err(&fail)?;
                let text = std::str::from_utf8(raw)
                    .map_err(|e| fail(format!("section {name}: {e}")))?
                    .to_string();
                SectionData::Text(text)
            }
            other => return Err(fail(format!("section {name}: unknown dtype {other}"))),
        };
        sections.push(Section { name, data });
    }
    if !r.is_empty() {
        return Err(fail(format!("{} trailing bytes", r.remaining())));
    }
    Ok(sections)
}

pub fn write_sections(path: &Path, sections: &[Section]) -> Result<()> {
    write_bytes(path, &encode_sections(sections)?)
}

pub fn read_sections(path: &Path) -> Result<Vec<Section>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sections(&bytes, path)
}

pub fn find_section<'a>(sections: &'a [Section], name: &str) -> Option<&'a Section> {
    sections.iter().find(|s| s.name == name)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix<f32> {
        let data = Matrix::from_rows(&[vec![1.0, -2.5], vec![0.25, 4.0], vec![8.0, 0.0]]).unwrap();
        FeatureMatrix::new(data, Modality::VisualAuGaze, 30.0, Some(vec![true, false, true])).unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_feature_matrix(&sample());
        assert_eq!(&bytes[0..4], b"SDFM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], Modality::VisualAuGaze.tag());
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[17..21].try_into().unwrap()), 30.0);
        assert_eq!(bytes[21], 1);
        assert_eq!(f32::from_le_bytes(bytes[22..26].try_into().unwrap()), 1.0);
        assert_eq!(&bytes[bytes.len() - 3..], &[1, 0, 1]);
        assert_eq!(bytes.len(), 22 + 6 * 4 + 3);
    }

    #[test]
    fn matrix_round_trip() {
        let m = sample();
        let back: FeatureMatrix<f32> = decode_feature_matrix(&encode_feature_matrix(&m), Path::new("x")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = encode_feature_matrix(&sample());
        let err = decode_feature_matrix::<f32>(&bytes[..bytes.len() - 1], Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_feature_matrix::<f32>(&bad, Path::new("x")).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_feature_matrix::<f32>(&extra, Path::new("x")).is_err());
    }

    #[test]
    fn sections_round_trip() {
        let sections = vec![
            Section::f64("mean", 1, 3, vec![1.0, 2.0, 3.0]),
            Section {
                name: "w".into(),
                data: SectionData::F32 {
                    rows: 2,
                    cols: 1,
                    data: vec![0.5, -0.5],
                },
            },
            Section::text("config", "a = 1\n"),
        ];
        let bytes = encode_sections(&sections).unwrap();
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        let back = decode_sections(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, sections);
        assert_eq!(find_section(&back, "config").unwrap().as_text(), Some("a = 1\n"));
        // a sectioned file is not a feature matrix
        assert!(decode_feature_matrix::<f64>(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn section_shape_checked() {
        let bad = vec![Section::f64("m", 2, 2, vec![1.0])];
        assert!(encode_sections(&bad).is_err());
    }
}
