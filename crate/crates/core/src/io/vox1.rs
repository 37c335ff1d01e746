//! VOX1: a 24-byte header (`"VOX1"`, version u16 = 1, dtype u8, reserved
//! u8 = 0, dims u32 x 4 as F, H, W, C) followed by raw C-order data.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array4;

use super::{write_atomic, IoError};
use crate::heatmap::{FeatureVolume, HeatmapError};
use crate::volume::{DType, Shape, Volume, VolumeData, VolumeError};

pub const VOX1_MAGIC: [u8; 4] = *b"VOX1";
pub const VOX1_HEADER_LEN: usize = 24;
const VERSION: u16 = 1;

/// VOX1 content before channel-count checks. Any `C >= 1` is allowed here,
/// so feature volumes with many channels can share the format.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub dims: [usize; 4],
    pub data: VolumeData,
}

impl RawVolume {
    pub fn into_volume(self) -> Result<Volume, VolumeError> {
        let [f, h, w, c] = self.dims;
        Volume::new(Shape::new(f, h, w, c), self.data)
    }

    pub fn into_features(self) -> Result<FeatureVolume, HeatmapError> {
        let VolumeData::F32(values) = self.data else {
            return Err(HeatmapError::BadFeatures);
        };
        let [f, h, w, c] = self.dims;
        let a = Array4::from_shape_vec((f, h, w, c), values).map_err(|_| HeatmapError::BadFeatures)?;
        FeatureVolume::new(a)
    }
}

impl From<&Volume> for RawVolume {
    fn from(v: &Volume) -> Self {
        let s = v.shape();
        RawVolume {
            dims: [s.frames, s.height, s.width, s.channels],
            data: v.data().clone(),
        }
    }
}

struct Header {
    dtype: DType,
    dims: [usize; 4],
}

impl Header {
    fn payload_len(&self) -> Result<u64, IoError> {
        self.dims
            .iter()
            .try_fold(self.dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| IoError::BadHeader("declared size overflows".into()))
    }
}

fn parse_header(b: &[u8]) -> Result<Header, IoError> {
    if b.len() < VOX1_HEADER_LEN {
        return Err(IoError::TruncatedFile {
            expected: VOX1_HEADER_LEN as u64,
            actual: b.len() as u64,
        });
    }
    let magic: [u8; 4] = b[0..4].try_into().unwrap();
    if magic != VOX1_MAGIC {
        return Err(IoError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([b[4], b[5]]);
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let dtype = match b[6] {
        0 => DType::U8,
        1 => DType::F32,
        code => return Err(IoError::DtypeUnknown(code.to_string())),
    };
    if b[7] != 0 {
        return Err(IoError::BadHeader(format!("reserved byte is {}", b[7])));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let o = 8 + 4 * i;
        *d = u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as usize;
    }
    if dims.contains(&0) {
        return Err(IoError::BadHeader(format!("zero dimension in {dims:?}")));
    }
    Ok(Header { dtype, dims })
}

fn encode_header(dtype: DType, dims: [usize; 4]) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::with_capacity(VOX1_HEADER_LEN);
    out.extend_from_slice(&VOX1_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match dtype {
        DType::U8 => 0,
        DType::F32 => 1,
    });
    out.push(0);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| IoError::BadHeader(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

fn decode_payload(h: &Header, payload: &[u8]) -> Result<RawVolume, IoError> {
    let data = match h.dtype {
        DType::U8 => VolumeData::U8(payload.to_vec()),
        DType::F32 => {
            let values: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if let Some(i) = values.iter().position(|x| !x.is_finite()) {
                return Err(VolumeError::NonFinite(i).into());
            }
            VolumeData::F32(values)
        }
    };
    Ok(RawVolume { dims: h.dims, data })
}

fn check_length(expected: u64, actual: u64) -> Result<(), IoError> {
    if actual < expected {
        return Err(IoError::TruncatedFile { expected, actual });
    }
    if actual > expected {
        return Err(IoError::TrailingBytes(actual - expected));
    }
    Ok(())
}

pub fn encode_vox1(v: &RawVolume) -> Result<Vec<u8>, IoError> {
    let mut out = encode_header(v.data.dtype(), v.dims)?;
    match &v.data {
        VolumeData::U8(d) => out.extend_from_slice(d),
        VolumeData::F32(d) => {
            out.reserve(d.len() * 4);
            for x in d {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_vox1(bytes: &[u8]) -> Result<RawVolume, IoError> {
    let h = parse_header(bytes)?;
    let expected = VOX1_HEADER_LEN as u64 + h.payload_len()?;
    check_length(expected, bytes.len() as u64)?;
    decode_payload(&h, &bytes[VOX1_HEADER_LEN..])
}

/// Reads any VOX1 file. The declared size is checked against the file
/// length before the payload buffer is allocated.
pub fn read_vox1_raw(path: &Path) -> Result<RawVolume, IoError> {
    let mut file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let file_len = file.metadata().map_err(|e| IoError::io(path, e))?.len();
    let mut head = Vec::with_capacity(VOX1_HEADER_LEN);
    (&mut file)
        .take(VOX1_HEADER_LEN as u64)
        .read_to_end(&mut head)
        .map_err(|e| IoError::io(path, e))?;
    let h = parse_header(&head)?;
    let expected = VOX1_HEADER_LEN as u64 + h.payload_len()?;
    check_length(expected, file_len)?;
    let mut payload = Vec::with_capacity((expected - VOX1_HEADER_LEN as u64) as usize);
    file.take(expected).read_to_end(&mut payload).map_err(|e| IoError::io(path, e))?;
    check_length(expected, VOX1_HEADER_LEN as u64 + payload.len() as u64)?;
    decode_payload(&h, &payload)
}

/// Reads a VOX1 file holding a 1- or 3-channel volume.
pub fn read_vox1(path: &Path) -> Result<Volume, IoError> {
    Ok(read_vox1_raw(path)?.into_volume()?)
}

pub fn write_vox1_raw(path: &Path, v: &RawVolume) -> Result<(), IoError> {
    write_atomic(path, &encode_vox1(v)?)
}

pub fn write_vox1(path: &Path, v: &Volume) -> Result<(), IoError> {
    write_vox1_raw(path, &RawVolume::from(v))
}
