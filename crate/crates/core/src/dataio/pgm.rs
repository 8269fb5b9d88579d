//! Binary PGM (`P5`, maxval 255) grayscale images, scaled to `[0, 1]`.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    width: usize,
    height: usize,
    /// Offset of the first pixel byte.
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Format("PGM header number out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format(
            "PGM header must end with one whitespace byte".into(),
        ));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PGM maxval {maxval}, expected 255"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM has zero size".into()));
    }
    Ok(Header {
        width,
        height,
        offset: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let pixels = bytes.get(h.offset..h.offset + n).ok_or_else(|| {
        Error::Format(format!(
            "truncated PGM: expected {n} pixel bytes, found {}",
            bytes.len() - h.offset
        ))
    })?;
    Tensor::new(
        vec![h.height, h.width],
        pixels.iter().map(|&p| p as f32 / 255.0).collect(),
    )
}

/// Values are clamped to `[0, 1]` and rounded to the nearest of 256 levels.
pub fn encode_pgm(t: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = t.dims2()?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        t.data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_pgm(t: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(t)?).map_err(|e| Error::io(path, e))
}

/// `(height, width)` from the header alone.
pub fn pgm_dimensions(path: &Path) -> Result<(usize, usize)> {
    let mut head = Vec::with_capacity(512);
    fs::File::open(path)
        .and_then(|f| f.take(512).read_to_end(&mut head))
        .map_err(|e| Error::io(path, e))?;
    let h = parse_header(&head).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((h.height, h.width))
}
