//! Cube container and the on-disk cube format.
//!
//! A cube file is a 32-byte header followed by a band-sequential payload:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `SWLRTRC1`                        |
//! | 8      | 4    | format version, u32 (currently 1)       |
//! | 12     | 4    | rows `n1`, u32                          |
//! | 16     | 4    | cols `n2`, u32                          |
//! | 20     | 4    | bands `n3`, u32                         |
//! | 24     | 1    | dtype tag: 4 = f32, 8 = f64             |
//! | 25     | 1    | byte order tag: `b'L'` (little endian)  |
//! | 26     | 6    | reserved, zero                          |
//!
//! The payload stores bands in order; within a band, rows in order; within a
//! row, columns in order. All integers and floats are little endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

pub const MAGIC: &[u8; 8] = b"SWLRTRC1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn tag(self) -> u8 {
        self.size() as u8
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            4 => Ok(Dtype::F32),
            8 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedHeader(format!("dtype tag {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeHeader {
    pub version: u32,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub dtype: Dtype,
}

impl CubeHeader {
    pub fn payload_len(&self) -> usize {
        self.n1 * self.n2 * self.n3 * self.dtype.size()
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..8].copy_from_slice(MAGIC);
        h[8..12].copy_from_slice(&self.version.to_le_bytes());
        h[12..16].copy_from_slice(&(self.n1 as u32).to_le_bytes());
        h[16..20].copy_from_slice(&(self.n2 as u32).to_le_bytes());
        h[20..24].copy_from_slice(&(self.n3 as u32).to_le_bytes());
        h[24] = self.dtype.tag();
        h[25] = b'L';
        h
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedHeader(format!("version {version}")));
        }
        if bytes[25] != b'L' {
            return Err(Error::UnsupportedHeader(format!("byte order tag {:#x}", bytes[25])));
        }
        let header = CubeHeader {
            version,
            n1: u32_at(12) as usize,
            n2: u32_at(16) as usize,
            n3: u32_at(20) as usize,
            dtype: Dtype::from_tag(bytes[24])?,
        };
        if header.n1 == 0 || header.n2 == 0 || header.n3 == 0 {
            return Err(Error::UnsupportedHeader("zero dimension".into()));
        }
        Ok(header)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

/// Hyperspectral cube, `rows x cols x bands`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    data: DenseTensor3,
    /// Range of the values before [`normalize`], if it was applied.
    source_range: Option<ValueRange>,
}

impl HsiCube {
    pub fn new(data: DenseTensor3) -> Self {
        Self {
            data,
            source_range: None,
        }
    }

    pub fn data(&self) -> &DenseTensor3 {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DenseTensor3 {
        &mut self.data
    }

    pub fn into_data(self) -> DenseTensor3 {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.dims().0
    }

    pub fn cols(&self) -> usize {
        self.data.dims().1
    }

    pub fn bands(&self) -> usize {
        self.data.dims().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dims()
    }

    pub fn value_range(&self) -> ValueRange {
        let (min, max) = self.data.min_max();
        ValueRange { min, max }
    }

    pub fn source_range(&self) -> Option<ValueRange> {
        self.source_range
    }

    /// Undoes [`normalize`]; identity when the cube was never normalized.
    pub fn denormalize(&self) -> HsiCube {
        match self.source_range {
            Some(r) => HsiCube::new(self.data.map(|v| r.min + v * (r.max - r.min))),
            None => self.clone(),
        }
    }
}

impl From<DenseTensor3> for HsiCube {
    fn from(data: DenseTensor3) -> Self {
        HsiCube::new(data)
    }
}

/// Global affine map of the cube onto `[0, 1]`.
pub fn normalize(cube: &HsiCube) -> Result<HsiCube> {
    let range = cube.value_range();
    if range.max <= range.min {
        return Err(Error::ConstantCube(range.min));
    }
    let span = range.max - range.min;
    let data = cube.data.map(|v| ((v - range.min) / span).clamp(0.0, 1.0));
    let source_range = match cube.source_range {
        // compose with an earlier normalization so denormalize stays exact
        Some(prev) => ValueRange {
            min: prev.min + range.min * (prev.max - prev.min),
            max: prev.min + range.max * (prev.max - prev.min),
        },
        None => range,
    };
    Ok(HsiCube {
        data,
        source_range: Some(source_range),
    })
}

pub fn encode_cube(cube: &HsiCube, dtype: Dtype) -> Vec<u8> {
    let (n1, n2, n3) = cube.dims();
    let header = CubeHeader {
        version: FORMAT_VERSION,
        n1,
        n2,
        n3,
        dtype,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.encode());
    for b in 0..n3 {
        for r in 0..n1 {
            for c in 0..n2 {
                let v = cube.data.get(r, c, b);
                match dtype {
                    Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
    }
    out
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    let header = CubeHeader::decode(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len();
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::UnsupportedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let width = header.dtype.size();
    let mut data = DenseTensor3::zeros((header.n1, header.n2, header.n3));
    let mut chunks = payload.chunks_exact(width);
    for b in 0..header.n3 {
        for r in 0..header.n1 {
            for c in 0..header.n2 {
                let raw = chunks.next().expect("length checked");
                let v = match header.dtype {
                    Dtype::F32 => f32::from_le_bytes(raw.try_into().expect("4 bytes")) as f64,
                    Dtype::F64 => f64::from_le_bytes(raw.try_into().expect("8 bytes")),
                };
                if !v.is_finite() {
                    return Err(Error::NonFinite("cube payload"));
                }
                data.set(r, c, b, v);
            }
        }
    }
    Ok(HsiCube::new(data))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

/// Writes the cube as f64, which round-trips bit-exactly.
pub fn write_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    write_cube_as(cube, path, Dtype::F64)
}

pub fn write_cube_as(cube: &HsiCube, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cube(cube, dtype);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_assembled() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SWLRTRC1");
        bytes.extend_from_slice(&[1, 0, 0, 0]); // version
        bytes.extend_from_slice(&[2, 0, 0, 0]); // rows
        bytes.extend_from_slice(&[2, 0, 0, 0]); // cols
        bytes.extend_from_slice(&[2, 0, 0, 0]); // bands
        bytes.extend_from_slice(&[4, b'L', 0, 0, 0, 0, 0, 0]);
        // f32 little endian: 0.5 = 0x3F000000, 1.0 = 0x3F800000, 2.0 = 0x40000000, -1.0 = 0xBF800000
        let band0: [[u8; 4]; 4] = [[0, 0, 0, 0x3F], [0, 0, 0x80, 0x3F], [0, 0, 0, 0x40], [0, 0, 0x80, 0xBF]];
        let band1: [[u8; 4]; 4] = [[0, 0, 0, 0]; 4];
        for v in band0.iter().chain(band1.iter()) {
            bytes.extend_from_slice(v);
        }
        bytes
    }

    #[test]
    fn decodes_hand_assembled_bytes() {
        let cube = decode_cube(&hand_assembled()).unwrap();
        assert_eq!(cube.dims(), (2, 2, 2));
        // band 0 is row-major: (0,0)=0.5 (0,1)=1 (1,0)=2 (1,1)=-1
        assert_eq!(cube.data().get(0, 0, 0), 0.5);
        assert_eq!(cube.data().get(0, 1, 0), 1.0);
        assert_eq!(cube.data().get(1, 0, 0), 2.0);
        assert_eq!(cube.data().get(1, 1, 0), -1.0);
        assert!(cube.data().slice3(1).iter().all(|&v| v == 0.0));
        assert_eq!(encode_cube(&cube, Dtype::F32), hand_assembled());
    }

    #[test]
    fn truncated_payload() {
        let bytes = hand_assembled();
        let err = decode_cube(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = hand_assembled();
        bytes[0] = b'X';
        assert!(matches!(decode_cube(&bytes), Err(Error::BadMagic)));
        assert!(matches!(decode_cube(b"SW"), Err(Error::BadMagic)));
    }

    #[test]
    fn nan_payload_rejected() {
        let mut bytes = hand_assembled();
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_cube(&bytes), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_cube_file_size() {
        let cube = HsiCube::new(DenseTensor3::zeros((3, 5, 7)));
        assert_eq!(encode_cube(&cube, Dtype::F64).len(), HEADER_LEN + 3 * 5 * 7 * 8);
        assert_eq!(encode_cube(&cube, Dtype::F32).len(), HEADER_LEN + 3 * 5 * 7 * 4);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(read_cube("/nonexistent/cube.bin"), Err(Error::Io { .. })));
    }

    #[test]
    fn normalize_byte_range() {
        let cube = HsiCube::new(DenseTensor3::from_vec((2, 1, 1), vec![0.0, 255.0]).unwrap());
        let n = normalize(&cube).unwrap();
        assert_eq!(n.data().as_slice(), &[0.0, 1.0]);
        assert_eq!(n.source_range(), Some(ValueRange { min: 0.0, max: 255.0 }));
        assert_eq!(n.denormalize().data().as_slice(), &[0.0, 255.0]);
    }

    #[test]
    fn normalize_unit_cube_is_identity() {
        let vals = vec![0.0, 0.25, 0.5, 1.0];
        let cube = HsiCube::new(DenseTensor3::from_vec((2, 2, 1), vals.clone()).unwrap());
        let n = normalize(&cube).unwrap();
        for (a, b) in n.data().as_slice().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_cube_rejected() {
        let cube = HsiCube::new(DenseTensor3::filled((2, 2, 2), 3.0));
        assert!(matches!(normalize(&cube), Err(Error::ConstantCube(_))));
    }
}
