//! `ATNB1` raw tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ATNB1"                      5 bytes magic
//! header_len: u32               byte length of the JSON header
//! header: UTF-8 JSON            {"shape":[...],"dtype":"f32"}
//! data: f32 * prod(shape)       row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"ATNB1";

#[derive(Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    dtype: String,
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        shape: t.shape().to_vec(),
        dtype: "f32".into(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(9 + header.len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut r = bytes;
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated ATNB1 magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not an ATNB1 file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("truncated ATNB1 header length".into()))?;
    let len = u32::from_le_bytes(len) as usize;
    if r.len() < len {
        return Err(Error::Format("truncated ATNB1 header".into()));
    }
    let (header, payload) = r.split_at(len);
    let header: Header = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("bad ATNB1 header: {e}")))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let n: usize = header.shape.iter().product();
    if payload.len() != 4 * n {
        return Err(Error::Format(format!(
            "ATNB1 payload holds {} bytes, shape {:?} needs {}",
            payload.len(),
            header.shape,
            4 * n
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(header.shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let bytes = encode(&t);
        let header = br#"{"shape":[1,2],"dtype":"f32"}"#;
        assert_eq!(&bytes[..5], b"ATNB1");
        assert_eq!(&bytes[5..9], &(header.len() as u32).to_le_bytes());
        assert_eq!(&bytes[9..9 + header.len()], header);
        assert_eq!(&bytes[9 + header.len()..], &[0, 0, 128, 63, 0, 0, 32, 192]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode(b"ATNB2").is_err());
        let mut bytes = encode(&Tensor::zeros(&[2, 2]));
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let t = crate::rng::Rng::new(seed).normal_tensor(&[rows, cols], 3.0);
            prop_assert_eq!(decode(&encode(&t)).unwrap(), t);
        }
    }
}
