//! Binary trajectory container.
//!
//! Little-endian layout:
//!
//! ```text
//! "AINA" | u16 version | u8 source | u8 frame_of_reference | u32 N
//! | u32 frame_count | f32 rate_hz | u32 len + task name (UTF-8)
//! | u32 prompt count | (u32 len + UTF-8)* | frame records | u32 CRC32
//! ```
//!
//! Each frame record is `f64 timestamp, N×3 f32 object points (row-major),
//! 5×3 f32 fingertips`. The CRC covers every preceding byte.

use std::path::Path;

use super::{DemoError, Frame, FrameOfReference, HandPose, ObjectPoints, Source, Trajectory, FINGERTIPS};
use crate::geom3d::Vec3;

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"AINA";
pub const TRAJECTORY_VERSION: u16 = 1;

pub fn encode_trajectory(t: &Trajectory) -> Vec<u8> {
    let n = t.n_points();
    let mut out = Vec::with_capacity(64 + t.frames.len() * (8 + 12 * (n + FINGERTIPS)));
    out.extend_from_slice(&TRAJECTORY_MAGIC);
    out.extend_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
    out.push(t.source.to_byte());
    out.push(t.frame_of_reference.to_byte());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(t.frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&(t.rate_hz as f32).to_le_bytes());
    put_str(&mut out, &t.task_name);
    out.extend_from_slice(&(t.prompts.len() as u32).to_le_bytes());
    for p in &t.prompts {
        put_str(&mut out, p);
    }
    for f in &t.frames {
        out.extend_from_slice(&f.timestamp.to_le_bytes());
        for p in f.objects.iter().chain(f.hand.fingertips.iter()) {
            for c in p.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DemoError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DemoError::TruncatedFile {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8, DemoError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DemoError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DemoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DemoError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DemoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn raw_string(&mut self) -> Result<&'a [u8], DemoError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn vec3(&mut self) -> Result<Vec3, DemoError> {
        Ok(Vec3::new(self.f32()? as f64, self.f32()? as f64, self.f32()? as f64))
    }
}

/// Parses a trajectory file image.
///
/// A file shorter than its header declares is `TruncatedFile`; any other
/// damage past the magic and version is caught by the trailing CRC.
pub fn decode_trajectory(bytes: &[u8]) -> Result<Trajectory, DemoError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != TRAJECTORY_MAGIC {
        return Err(DemoError::BadMagic);
    }
    let version = r.u16()?;
    if version != TRAJECTORY_VERSION {
        return Err(DemoError::UnsupportedVersion(version));
    }
    let source_byte = r.u8()?;
    let frame_byte = r.u8()?;
    let n = r.u32()? as usize;
    let frame_count = r.u32()? as usize;
    let rate_hz = r.f32()? as f64;
    let task_name = r.raw_string()?;
    let prompt_count = r.u32()? as usize;
    let mut prompts = Vec::new();
    for _ in 0..prompt_count {
        prompts.push(r.raw_string()?);
    }

    let record = 8u64 + 12 * (n as u64 + FINGERTIPS as u64);
    let expected = (r.pos as u64)
        .saturating_add(record.saturating_mul(frame_count as u64))
        .saturating_add(4);
    if (bytes.len() as u64) < expected {
        return Err(DemoError::TruncatedFile {
            expected: expected.min(usize::MAX as u64) as usize,
            found: bytes.len(),
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed || bytes.len() as u64 != expected {
        return Err(DemoError::ChecksumMismatch { stored, computed });
    }

    let source = Source::from_byte(source_byte)
        .ok_or_else(|| DemoError::InvalidTrajectory(format!("source byte {source_byte}")))?;
    let frame_of_reference = FrameOfReference::from_byte(frame_byte)
        .ok_or_else(|| DemoError::InvalidTrajectory(format!("frame byte {frame_byte}")))?;

    let utf8 = |raw: &[u8]| {
        String::from_utf8(raw.to_vec())
            .map_err(|_| DemoError::InvalidTrajectory("string field is not UTF-8".into()))
    };
    let task_name = utf8(task_name)?;
    let prompts = prompts.into_iter().map(utf8).collect::<Result<Vec<_>, _>>()?;

    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let timestamp = r.f64()?;
        let mut objects = Vec::with_capacity(n);
        for _ in 0..n {
            objects.push(r.vec3()?);
        }
        let mut tips = [Vec3::zeros(); FINGERTIPS];
        for tip in &mut tips {
            *tip = r.vec3()?;
        }
        frames.push(Frame {
            timestamp,
            objects: ObjectPoints(objects),
            hand: HandPose::new(tips),
        });
    }
    Ok(Trajectory {
        frames,
        source,
        frame_of_reference,
        rate_hz,
        task_name,
        prompts,
    })
}

pub fn save(t: &Trajectory, path: impl AsRef<Path>) -> Result<(), DemoError> {
    std::fs::write(path, encode_trajectory(t))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Trajectory, DemoError> {
    decode_trajectory(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let frames = (0..4)
            .map(|k| Frame {
                timestamp: k as f64 * 0.1,
                objects: ObjectPoints(
                    (0..3)
                        .map(|i| Vec3::new(0.5 + 0.01 * i as f64, 0.1 * k as f64, 0.02))
                        .collect(),
                ),
                hand: HandPose::new(std::array::from_fn(|i| {
                    Vec3::new(0.3, 0.02 * i as f64, 0.2 - 0.01 * k as f64)
                })),
            })
            .collect();
        Trajectory::new(
            frames,
            Source::InScene,
            FrameOfReference::RobotBase,
            "reach",
            vec!["ball".into(), "red cup".into()],
        )
        .unwrap()
        .quantized()
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample();
        let bytes = encode_trajectory(&t);
        let back = decode_trajectory(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_trajectory(&back), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_trajectory(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode_trajectory(&bytes), Err(DemoError::BadMagic)));
    }

    #[test]
    fn bad_version() {
        let mut bytes = encode_trajectory(&sample());
        bytes[4] = 9;
        assert!(matches!(
            decode_trajectory(&bytes),
            Err(DemoError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn truncated_mid_frame() {
        let bytes = encode_trajectory(&sample());
        let cut = &bytes[..bytes.len() - 30];
        assert!(matches!(
            decode_trajectory(cut),
            Err(DemoError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn payload_corruption_fails_checksum() {
        let mut bytes = encode_trajectory(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            decode_trajectory(&bytes),
            Err(DemoError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn every_header_byte_corruption_is_rejected() {
        let bytes = encode_trajectory(&sample());
        let header_len = 4 + 2 + 1 + 1 + 4 + 4 + 4 + 4 + 5 + 4 + 4 + 4 + 4 + 7;
        for i in 0..header_len {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut b = bytes.clone();
                b[i] ^= flip;
                let res = decode_trajectory(&b);
                assert!(res.is_err(), "byte {i} flip {flip:#x} accepted");
                if i >= 6 {
                    assert!(
                        matches!(
                            res,
                            Err(DemoError::ChecksumMismatch { .. }) | Err(DemoError::TruncatedFile { .. })
                        ),
                        "byte {i}: {res:?}"
                    );
                }
            }
        }
    }
}
