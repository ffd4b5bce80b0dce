//! Checkpoint file format: magic `SGCL`, one version byte, then a count of
//! length-prefixed named tensors. Names are UTF-8 with a u32 length prefix;
//! values are little-endian 32-bit floats preceded by u32 row and column
//! counts. Round-trips are bit-exact.

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SGCL";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: u32,
    pub cols: u32,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn scalar(name: &str, value: f64) -> Self {
        NamedTensor {
            name: name.to_string(),
            rows: 1,
            cols: 1,
            data: vec![value as f32],
        }
    }
}

pub fn save_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&t.rows.to_le_bytes())?;
        w.write_all(&t.cols.to_le_bytes())?;
        if t.data.len() != (t.rows * t.cols) as usize {
            return Err(Error::Shape(format!(
                "tensor `{}` claims {}x{} but holds {} values",
                t.name,
                t.rows,
                t.cols,
                t.data.len()
            )));
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut offset = 0usize;
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &mut offset)?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let mut version = [0u8; 1];
    read_exact(&mut r, &mut version, &mut offset)?;
    if version[0] != VERSION {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("unsupported checkpoint version {}", version[0]),
        });
    }
    let count = read_u32(&mut r, &mut offset)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r, &mut offset)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, &mut offset)?;
        let name = String::from_utf8(name_bytes).map_err(|e| Error::Parse {
            offset,
            msg: format!("tensor name is not UTF-8: {e}"),
        })?;
        let rows = read_u32(&mut r, &mut offset)?;
        let cols = read_u32(&mut r, &mut offset)?;
        let len = (rows as usize) * (cols as usize);
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let mut buf = [0u8; 4];
            read_exact(&mut r, &mut buf, &mut offset)?;
            data.push(f32::from_le_bytes(buf));
        }
        tensors.push(NamedTensor {
            name,
            rows,
            cols,
            data,
        });
    }
    Ok(tensors)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut usize) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Parse {
        offset: *offset,
        msg: format!("truncated checkpoint: {e}"),
    })?;
    *offset += buf.len();
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, offset: &mut usize) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, offset)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor {
                name: "encoder.0.weight".into(),
                rows: 2,
                cols: 3,
                data: vec![1.0, -2.5, 0.0, 3.25, f32::MIN_POSITIVE, 7.0],
            },
            NamedTensor::scalar("loss.bias", -10.0),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sgcl");
        let tensors = sample();
        save_tensors(&path, &tensors).unwrap();
        let loaded = load_tensors(&path).unwrap();
        assert_eq!(tensors, loaded);
        // Saving the loaded tensors reproduces the file byte-for-byte.
        let path2 = dir.path().join("model2.sgcl");
        save_tensors(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sgcl");
        save_tensors(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_tensors(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sgcl");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00").unwrap();
        let err = load_tensors(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }
}
