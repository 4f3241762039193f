//! Single-file named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"IGNT"
//! u32    format version (1)
//! u32    entry count
//! entry: u16 name length, name bytes (utf-8),
//!        u8 dtype (0 = f64, 1 = f32), u8 rank,
//!        u32 x rank extents, payload (little-endian scalars)
//! ```
//!
//! Checkpoints, optimizer state, and filter banks all ride on this.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"IGNT";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F64,
    F32,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CoreError {
    CoreError::Io { path: path.display().to_string(), detail: e.to_string() }
}

pub fn write_named_tensors(
    path: &Path,
    tensors: &BTreeMap<String, Tensor>,
    dtype: DType,
) -> Result<()> {
    let mut buf = Vec::new();
    encode_named_tensors(&mut buf, tensors, dtype);
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn encode_named_tensors(buf: &mut Vec<u8>, tensors: &BTreeMap<String, Tensor>, dtype: DType) {
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let nb = name.as_bytes();
        assert!(nb.len() <= u16::MAX as usize, "tensor name too long");
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(match dtype {
            DType::F64 => 0,
            DType::F32 => 1,
        });
        buf.push(t.rank() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match dtype {
            DType::F64 => {
                for &v in t.data() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            DType::F32 => {
                for &v in t.data() {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
}

pub fn read_named_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    decode_named_tensors(&bytes).map_err(|e| io_err(path, e))
}

pub fn decode_named_tensors(bytes: &[u8]) -> std::result::Result<BTreeMap<String, Tensor>, String> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> std::result::Result<&[u8], String> {
        if *pos + n > bytes.len() {
            return Err(format!("truncated container at offset {pos}"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err("bad magic; not a named-tensor container".to_string());
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported container version {version}"));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|e| e.to_string())?;
        let dtype = take(&mut pos, 1)?[0];
        let rank = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let data = match dtype {
            0 => take(&mut pos, numel * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>(),
            1 => take(&mut pos, numel * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect::<Vec<f64>>(),
            d => return Err(format!("unknown dtype tag {d}")),
        };
        let t = Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?;
        if out.insert(name.clone(), t).is_some() {
            return Err(format!("duplicate tensor name {name:?}"));
        }
    }
    if pos != bytes.len() {
        return Err(format!("{} trailing bytes after last entry", bytes.len() - pos));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("igkit-container-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ignt");
        let mut rng = Rng::new(70);
        let mut tensors = BTreeMap::new();
        for (i, shape) in [vec![3usize], vec![2, 4], vec![1, 2, 3, 4]].iter().enumerate() {
            let mut data = vec![0.0; shape.iter().product()];
            rng.fill_normal(&mut data, 1.0);
            tensors.insert(format!("t{i}"), Tensor::from_vec(shape, data).unwrap());
        }
        write_named_tensors(&path, &tensors, DType::F64).unwrap();
        let back = read_named_tensors(&path).unwrap();
        assert_eq!(back.len(), tensors.len());
        for (name, t) in &tensors {
            let b = &back[name];
            assert_eq!(b.shape(), t.shape());
            for (x, y) in b.data().iter().zip(t.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn f32_payload_loads_with_narrowed_precision() {
        let mut tensors = BTreeMap::new();
        tensors.insert("x".to_string(), Tensor::scalar(std::f64::consts::PI));
        let mut buf = Vec::new();
        encode_named_tensors(&mut buf, &tensors, DType::F32);
        let back = decode_named_tensors(&buf).unwrap();
        let v = back["x"].data()[0];
        assert_eq!(v, std::f64::consts::PI as f32 as f64);
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        let mut tensors = BTreeMap::new();
        tensors.insert("x".to_string(), Tensor::scalar(1.0));
        let mut buf = Vec::new();
        encode_named_tensors(&mut buf, &tensors, DType::F64);
        assert!(decode_named_tensors(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(decode_named_tensors(&bad).is_err());
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(decode_named_tensors(&trailing).is_err());
    }
}
