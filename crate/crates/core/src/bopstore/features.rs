//! SPKF dense-feature archive.
//!
//! ```text
//! "SPKF" | u16 version | u16 channel count
//! per channel:
//!   tag[4] | u8 dtype | u32 H | u32 W | u32 C | u64 payload length
//!   deflate payload (little-endian samples, row-major, channels interleaved)
//!   u32 CRC32 of the channel header and payload
//! ```

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::{io_err, write_atomic, BopError};
use crate::rasterizer::DenseFeatureMaps;

pub const SPKF_MAGIC: &[u8; 4] = b"SPKF";
pub const SPKF_VERSION: u16 = 1;

const CHANNEL_HEADER: usize = 4 + 1 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Dtype {
    U8 = 0,
    U32 = 1,
    F64 = 2,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::U32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }
}

// (tag, dtype, channels); DISP is optional
const CHANNELS: [(&[u8; 4], Dtype, u32); 8] = [
    (b"MASK", Dtype::U8, 1),
    (b"INST", Dtype::U32, 1),
    (b"DPTH", Dtype::F64, 1),
    (b"XYZ_", Dtype::F64, 3),
    (b"REGN", Dtype::U32, 1),
    (b"SOCC", Dtype::F64, 6),
    (b"SOCV", Dtype::U8, 3),
    (b"DISP", Dtype::F64, 1),
];

fn u8s<'a>(it: impl Iterator<Item = &'a bool>) -> Vec<u8> {
    it.map(|&b| b as u8).collect()
}

fn u32s(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn f64s<'a>(it: impl Iterator<Item = &'a f64>) -> Vec<u8> {
    it.flat_map(|x| x.to_le_bytes()).collect()
}

fn raw_channels(maps: &DenseFeatureMaps) -> Vec<Vec<u8>> {
    let mut out = vec![
        u8s(maps.mask.iter()),
        u32s(&maps.instance),
        f64s(maps.depth.iter()),
        f64s(maps.xyz.iter().flatten()),
        u32s(&maps.region),
        f64s(maps.selfocc.iter().flatten()),
        u8s(maps.selfocc_valid.iter().flatten()),
    ];
    if let Some(d) = &maps.disparity {
        out.push(f64s(d.iter()));
    }
    out
}

/// Serializes all channels. Fails if the maps are internally inconsistent.
pub fn encode_features(maps: &DenseFeatureMaps) -> Result<Vec<u8>, BopError> {
    maps.validate().map_err(|e| BopError::Inconsistent(e.to_string()))?;
    let raws = raw_channels(maps);
    let mut out = Vec::new();
    out.extend_from_slice(SPKF_MAGIC);
    out.extend_from_slice(&SPKF_VERSION.to_le_bytes());
    out.extend_from_slice(&(raws.len() as u16).to_le_bytes());
    for ((tag, dtype, c), raw) in CHANNELS.iter().zip(&raws) {
        let mut enc = DeflateEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(raw).expect("in-memory write");
        let payload = enc.finish().expect("in-memory write");
        let mut chunk = Vec::with_capacity(CHANNEL_HEADER + payload.len() + 4);
        chunk.extend_from_slice(*tag);
        chunk.push(*dtype as u8);
        chunk.extend_from_slice(&maps.height.to_le_bytes());
        chunk.extend_from_slice(&maps.width.to_le_bytes());
        chunk.extend_from_slice(&c.to_le_bytes());
        chunk.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        chunk.extend_from_slice(&payload);
        let crc = crc32fast::hash(&chunk);
        out.extend_from_slice(&chunk);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BopError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(BopError::Corrupt(format!("truncated at byte {} (need {n} more)", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, BopError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<DenseFeatureMaps, BopError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != SPKF_MAGIC {
        return Err(BopError::Corrupt("bad magic".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != SPKF_VERSION {
        return Err(BopError::Version(format!("version {version}, expected {SPKF_VERSION}")));
    }
    let count = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
    let mut raws: Vec<Option<Vec<u8>>> = vec![None; CHANNELS.len()];
    let mut dims: Option<(u32, u32)> = None;
    for _ in 0..count {
        let start = cur.pos;
        let tag: [u8; 4] = cur.take(4)?.try_into().unwrap();
        let dtype_byte = cur.take(1)?[0];
        let h = cur.u32()?;
        let w = cur.u32()?;
        let c = cur.u32()?;
        let len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| BopError::Corrupt("payload length overflow".into()))?;
        cur.take(len)?;
        let body = &bytes[start..cur.pos];
        let crc = cur.u32()?;
        if crc32fast::hash(body) != crc {
            return Err(BopError::Corrupt(format!("checksum mismatch in channel {}", String::from_utf8_lossy(&tag))));
        }
        let Some(slot) = CHANNELS.iter().position(|(t, _, _)| **t == tag) else {
            return Err(BopError::Version(format!("unknown channel tag {:?}", String::from_utf8_lossy(&tag))));
        };
        let (_, dtype, channels) = CHANNELS[slot];
        if Dtype::from_u8(dtype_byte) != Some(dtype) || c != channels {
            return Err(BopError::Corrupt(format!("channel {} has unexpected layout", String::from_utf8_lossy(&tag))));
        }
        if *dims.get_or_insert((w, h)) != (w, h) {
            return Err(BopError::Corrupt("channels disagree on image size".into()));
        }
        if raws[slot].is_some() {
            return Err(BopError::Corrupt(format!("duplicate channel {}", String::from_utf8_lossy(&tag))));
        }
        let expected = (w as usize * h as usize)
            .checked_mul(c as usize * dtype.size())
            .ok_or_else(|| BopError::Corrupt("image size overflow".into()))?;
        let mut raw = Vec::with_capacity(expected);
        DeflateDecoder::new(&body[CHANNEL_HEADER..])
            .take(expected as u64 + 1)
            .read_to_end(&mut raw)
            .map_err(|e| BopError::Corrupt(format!("inflate: {e}")))?;
        if raw.len() != expected {
            return Err(BopError::Corrupt(format!("channel {} decodes to {} bytes, expected {expected}", String::from_utf8_lossy(&tag), raw.len())));
        }
        raws[slot] = Some(raw);
    }
    if cur.pos != bytes.len() {
        return Err(BopError::Corrupt(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    if let Some(i) = raws[..7].iter().position(|r| r.is_none()) {
        return Err(BopError::Corrupt(format!("missing channel {}", String::from_utf8_lossy(CHANNELS[i].0))));
    }
    let (width, height) = dims.unwrap_or((0, 0));
    let mut raws = raws.into_iter();
    let mut next = || raws.next().unwrap();
    let bools = |r: Vec<u8>| r.into_iter().map(|b| b != 0).collect::<Vec<bool>>();
    let u32v = |r: Vec<u8>| r.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect::<Vec<u32>>();
    let f64v = |r: Vec<u8>| r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<f64>>();
    let mask = bools(next().unwrap());
    let instance = u32v(next().unwrap());
    let depth = f64v(next().unwrap());
    let xyz = f64v(next().unwrap()).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let region = u32v(next().unwrap());
    let selfocc = f64v(next().unwrap()).chunks_exact(6).map(|c| c.try_into().unwrap()).collect();
    let selfocc_valid = bools(next().unwrap()).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let disparity = next().map(f64v);
    let maps = DenseFeatureMaps {
        width,
        height,
        mask,
        instance,
        depth,
        xyz,
        region,
        selfocc,
        selfocc_valid,
        disparity,
    };
    maps.validate().map_err(|e| BopError::Corrupt(e.to_string()))?;
    Ok(maps)
}

/// Atomic write: temp file then rename.
pub fn write_features(maps: &DenseFeatureMaps, path: &Path) -> Result<(), BopError> {
    write_atomic(path, &encode_features(maps)?)
}

pub fn read_features(path: &Path) -> Result<DenseFeatureMaps, BopError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, Pose};
    use crate::rasterizer::{render_frame, TriMesh};
    use nalgebra::Vector3;

    fn frame() -> DenseFeatureMaps {
        let k = CameraIntrinsics::new(300.0, 300.0, 80.0, 60.0, 160, 120).unwrap();
        let a = TriMesh::cube(60.0).unwrap();
        let b = TriMesh::uv_sphere(30.0, 8, 16).unwrap();
        let objects = [
            (&a, Pose::from_axis_angle(Vector3::new(0.4, 0.5, 0.1), Vector3::new(-20.0, 0.0, 500.0))),
            (&b, Pose::from_axis_angle(Vector3::zeros(), Vector3::new(40.0, 10.0, 450.0))),
        ];
        let (mut maps, _) = render_frame(&objects, &k);
        maps.disparity = Some(maps.depth.iter().map(|&z| if z.is_finite() { 15000.0 / z } else { 0.0 }).collect());
        maps
    }

    fn bits(m: &DenseFeatureMaps) -> Vec<u8> {
        raw_channels(m).concat()
    }

    #[test]
    fn bit_exact_round_trip() {
        let maps = frame();
        let bytes = encode_features(&maps).unwrap();
        let back = decode_features(&bytes).unwrap();
        assert_eq!(bits(&back), bits(&maps));
        let mut no_disp = maps.clone();
        no_disp.disparity = None;
        let back = decode_features(&encode_features(&no_disp).unwrap()).unwrap();
        assert!(back.disparity.is_none());
        assert_eq!(bits(&back), bits(&no_disp));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f/000001.spkf");
        let maps = frame();
        write_features(&maps, &path).unwrap();
        assert_eq!(bits(&read_features(&path).unwrap()), bits(&maps));
        assert!(!dir.path().join("f/000001.spkf.tmp").exists());
    }

    #[test]
    fn background_frame_compresses() {
        let maps = DenseFeatureMaps::empty(640, 480);
        let raw: usize = raw_channels(&maps).iter().map(Vec::len).sum();
        let bytes = encode_features(&maps).unwrap();
        assert!(bytes.len() * 100 < raw, "{} vs {raw}", bytes.len());
    }

    #[test]
    fn every_flipped_byte_is_detected() {
        let maps = DenseFeatureMaps::empty(16, 8);
        let bytes = encode_features(&maps).unwrap();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x5a;
            assert!(decode_features(&bad).is_err(), "flip at {i} undetected");
        }
    }

    #[test]
    fn truncation_and_unknown_tags() {
        let bytes = encode_features(&frame()).unwrap();
        for cut in [0, 3, 8, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_features(&bytes[..cut]), Err(BopError::Corrupt(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_features(&extra), Err(BopError::Corrupt(_))));

        // a well-formed channel with a foreign tag
        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(b"ZZZZ");
        let body_end = 8 + CHANNEL_HEADER + u64::from_le_bytes(bad[25..33].try_into().unwrap()) as usize;
        let crc = crc32fast::hash(&bad[8..body_end]);
        bad[body_end..body_end + 4].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_features(&bad), Err(BopError::Version(_))));

        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(decode_features(&v2), Err(BopError::Version(_))));
    }
}
