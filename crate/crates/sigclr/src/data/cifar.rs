//! CIFAR-10 binary ingestion: 3073-byte records, one label byte followed by
//! channel-major 32x32 R, G, B planes.

use super::{Image, ImageRecord};
use crate::error::{Error, Result};
use std::path::Path;

pub const CIFAR_RECORD_BYTES: usize = 3073;
const SIDE: usize = 32;
const CHANNELS: usize = 3;
const MAX_LABEL: u8 = 9;

/// Parse one CIFAR-10 binary file. The file size must be an exact multiple
/// of the record size; parse errors report the byte offset of the problem.
pub fn read_cifar10(path: &Path) -> Result<Vec<ImageRecord>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let complete = bytes.len() - bytes.len() % CIFAR_RECORD_BYTES;
        return Err(Error::Parse {
            offset: complete,
            msg: format!(
                "truncated file: {} bytes is not a multiple of the {}-byte record size",
                bytes.len(),
                CIFAR_RECORD_BYTES
            ),
        });
    }
    let mut records = Vec::with_capacity(bytes.len() / CIFAR_RECORD_BYTES);
    for (idx, chunk) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let offset = idx * CIFAR_RECORD_BYTES;
        let label = chunk[0];
        if label > MAX_LABEL {
            return Err(Error::Parse {
                offset,
                msg: format!("label byte {label} exceeds maximum {MAX_LABEL}"),
            });
        }
        let data: Vec<f64> = chunk[1..].iter().map(|&b| b as f64 / 255.0).collect();
        records.push(ImageRecord {
            label: label as usize,
            pixels: Image::from_planes(SIDE, SIDE, CHANNELS, data)?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crafted_record(label: u8, first_pixel: u8) -> Vec<u8> {
        let mut rec = vec![0u8; CIFAR_RECORD_BYTES];
        rec[0] = label;
        rec[1] = first_pixel;
        rec
    }

    #[test]
    fn crafted_record_parses_to_expected_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, crafted_record(7, 255)).unwrap();
        let records = read_cifar10(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].label, 7);
        // First pixel byte is the red plane at (0, 0).
        assert_eq!(records[0].pixels.get(0, 0, 0), 1.0);
        assert_eq!(records[0].pixels.get(1, 0, 0), 0.0);
    }

    #[test]
    fn multi_record_file_counts_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut bytes = crafted_record(0, 1);
        bytes.extend(crafted_record(9, 2));
        bytes.extend(crafted_record(3, 128));
        std::fs::write(&path, bytes).unwrap();
        let records = read_cifar10(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].label, 3);
        assert!((records[2].pixels.get(0, 0, 0) - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut bytes = crafted_record(1, 0);
        bytes.truncate(CIFAR_RECORD_BYTES - 1);
        std::fs::write(&path, bytes).unwrap();
        match read_cifar10(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        // A second record cut short points at the first complete boundary.
        let mut bytes = crafted_record(1, 0);
        bytes.extend(&crafted_record(2, 0)[..100]);
        std::fs::write(&path, bytes).unwrap();
        match read_cifar10(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, CIFAR_RECORD_BYTES),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut bytes = crafted_record(4, 0);
        bytes.extend(crafted_record(12, 0));
        std::fs::write(&path, bytes).unwrap();
        match read_cifar10(&path) {
            Err(Error::Parse { offset, msg }) => {
                assert_eq!(offset, CIFAR_RECORD_BYTES);
                assert!(msg.contains("12"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pixels_are_scaled_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut rec = vec![255u8; CIFAR_RECORD_BYTES];
        rec[0] = 5;
        std::fs::write(&path, rec).unwrap();
        let records = read_cifar10(&path).unwrap();
        assert!(records[0].pixels.data().iter().all(|&v| v == 1.0));
    }
}
