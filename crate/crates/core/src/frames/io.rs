//! Binary dataset format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        "STAGDS1\0"
//! u16          class_count
//! class_count  × (u16 len, UTF-8 bytes)
//! u32          recording_count
//! per recording:
//!   u8 session_id, u8 label, u32 frame_count, u32 imu_count
//!   frame_count × (1024 × u16, u64 timestamp_us)
//!   imu_count   × (6 × i16, u64 timestamp_us)
//! ```

use std::fs;
use std::path::Path;

use super::{
    Dataset, FramesError, ImuSample, Recording, Result, TactileFrame, ADC_MAX, TAXELS,
};

pub const DATASET_MAGIC: [u8; 8] = *b"STAGDS1\0";

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_dataset_bytes(dataset)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    read_dataset_bytes(&bytes)
}

pub fn write_dataset_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    let frames = dataset.frame_count();
    let mut out = Vec::with_capacity(64 + frames * (TAXELS * 2 + 8));
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&(dataset.class_names.len() as u16).to_le_bytes());
    for name in &dataset.class_names {
        let len = u16::try_from(name.len())
            .map_err(|_| FramesError::Invalid(format!("class name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    let count = u32::try_from(dataset.recording_count())
        .map_err(|_| FramesError::Invalid("too many recordings".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for rec in dataset.recordings() {
        out.push(rec.session_id);
        out.push(rec.label);
        out.extend_from_slice(&(rec.frames.len() as u32).to_le_bytes());
        out.extend_from_slice(&(rec.imu.len() as u32).to_le_bytes());
        for frame in &rec.frames {
            // Frames can only be built through validated constructors, but a
            // writer must never emit an out-of-range count.
            if frame.values.iter().any(|&v| v > ADC_MAX) {
                return Err(FramesError::Invalid("taxel value above 4095".into()));
            }
            for &v in &frame.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
        }
        for s in &rec.imu {
            for v in s.accel.iter().chain(&s.gyro) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&s.timestamp_us.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FramesError::Truncated {
                offset: self.buf.len(),
                what,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn read_dataset_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic_len = bytes.len().min(DATASET_MAGIC.len());
    if bytes[..magic_len] != DATASET_MAGIC[..magic_len] {
        return Err(FramesError::BadMagic {
            expected: DATASET_MAGIC,
            found: bytes[..magic_len].to_vec(),
        });
    }
    cur.take(DATASET_MAGIC.len(), "magic")?;

    let class_count = cur.u16("class count")? as usize;
    let mut class_names = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        let len = cur.u16("class name length")? as usize;
        let raw = cur.take(len, "class name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|e| FramesError::Invalid(format!("class name is not UTF-8: {e}")))?;
        class_names.push(name.to_string());
    }
    let mut dataset = Dataset::new(class_names)?;

    let recording_count = cur.u32("recording count")?;
    for _ in 0..recording_count {
        let session_id = cur.u8("session id")?;
        let label = cur.u8("label")?;
        let frame_count = cur.u32("frame count")? as usize;
        let imu_count = cur.u32("imu count")? as usize;
        // Bound the allocation by what the buffer can actually hold.
        let remaining = bytes.len() - cur.pos;
        let mut frames = Vec::with_capacity(frame_count.min(remaining / (TAXELS * 2 + 8)));
        for _ in 0..frame_count {
            let raw = cur.take(TAXELS * 2, "frame values")?;
            let values: Vec<u16> = raw
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            let ts = cur.u64("frame timestamp")?;
            frames.push(TactileFrame::new(values, ts)?);
        }
        let mut imu = Vec::with_capacity(imu_count.min(remaining / 20));
        for _ in 0..imu_count {
            let raw = cur.take(12, "imu sample")?;
            let mut ch = [0i16; 6];
            for (dst, c) in ch.iter_mut().zip(raw.chunks_exact(2)) {
                *dst = i16::from_le_bytes([c[0], c[1]]);
            }
            let ts = cur.u64("imu timestamp")?;
            imu.push(ImuSample {
                accel: [ch[0], ch[1], ch[2]],
                gyro: [ch[3], ch[4], ch[5]],
                timestamp_us: ts,
            });
        }
        dataset.push(Recording::new(label, session_id, frames, imu)?);
    }
    if cur.pos != bytes.len() {
        return Err(FramesError::Invalid(format!(
            "{} trailing bytes after last recording",
            bytes.len() - cur.pos
        )));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{FRAME_PERIOD_US, TAXELS};

    fn small_dataset() -> Dataset {
        let mut d = Dataset::default();
        let frames = (0..3)
            .map(|i| TactileFrame::uniform(0, i * FRAME_PERIOD_US))
            .collect();
        let imu = vec![ImuSample {
            accel: [1, -2, 16384],
            gyro: [-32768, 0, 32767],
            timestamp_us: 0,
        }];
        d.push(Recording::new(4, 2, frames, imu).unwrap());
        d
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = Dataset::default();
        let bytes = write_dataset_bytes(&d).unwrap();
        let names: usize = d.class_names().iter().map(|n| 2 + n.len()).sum();
        assert_eq!(bytes.len(), 8 + 2 + names + 4);
        assert_eq!(read_dataset_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn zero_frames_round_trip() {
        let d = small_dataset();
        let bytes = write_dataset_bytes(&d).unwrap();
        assert_eq!(read_dataset_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = write_dataset_bytes(&small_dataset()).unwrap();
        bytes[3] ^= 0xff;
        assert!(matches!(
            read_dataset_bytes(&bytes),
            Err(FramesError::BadMagic { .. })
        ));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = write_dataset_bytes(&small_dataset()).unwrap();
        for cut in 0..bytes.len() {
            match read_dataset_bytes(&bytes[..cut]) {
                Err(FramesError::Truncated { .. }) => {}
                other => panic!("cut at {cut}: expected truncation, got {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_out_of_range_taxel_on_disk() {
        let mut bytes = write_dataset_bytes(&small_dataset()).unwrap();
        // First taxel of the first frame follows the header and record header.
        let header = write_dataset_bytes(&Dataset::default()).unwrap().len() + 10;
        bytes[header..header + 2].copy_from_slice(&4096u16.to_le_bytes());
        assert!(matches!(
            read_dataset_bytes(&bytes),
            Err(FramesError::Invalid(_))
        ));
        assert_eq!(TAXELS, 1024);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = write_dataset_bytes(&small_dataset()).unwrap();
        bytes.push(0);
        assert!(matches!(
            read_dataset_bytes(&bytes),
            Err(FramesError::Invalid(_))
        ));
    }
}
