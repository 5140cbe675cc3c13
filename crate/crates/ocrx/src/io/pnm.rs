//! Binary PPM (P6) frames and PGM (P5) masks, 8-bit.
//!
//! Pixels map to [0,1] as v/255 on read; writing quantizes round-half-up, so
//! read->write reproduces any valid file byte for byte.

use std::fs;
use std::path::Path;

use super::{IoError, Result};
use crate::tensor::Tensor;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> IoError {
        IoError::Parse {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.bytes.len() < self.pos + magic.len() || &self.bytes[self.pos..self.pos + 2] != magic
        {
            return Err(self.err(format!(
                "missing {} magic",
                String::from_utf8_lossy(magic)
            )));
        }
        self.pos += magic.len();
        Ok(())
    }

    /// Whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) -> Result<()> {
        let mut advanced = false;
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
                advanced = true;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        if !advanced {
            return Err(self.err("expected whitespace"));
        }
        Ok(())
    }

    fn read_uint(&mut self) -> Result<usize> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected integer"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| self.err(format!("bad integer: {e}")))
    }
}

fn parse_header<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(usize, usize, Cursor<'a>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    cur.expect_magic(magic)?;
    cur.skip_separators()?;
    let w = cur.read_uint()?;
    cur.skip_separators()?;
    let h = cur.read_uint()?;
    cur.skip_separators()?;
    let maxval = cur.read_uint()?;
    if maxval != 255 {
        return Err(cur.err(format!("only maxval 255 supported, got {maxval}")));
    }
    // exactly one whitespace byte before the payload
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(cur.err("expected single whitespace before payload"));
    }
    cur.pos += 1;
    if w == 0 || h == 0 {
        return Err(cur.err("zero image dimension"));
    }
    Ok((w, h, cur))
}

/// Read a P6 file into a [3,H,W] tensor in [0,1].
pub fn read_frame(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path)?;
    let (w, h, cur) = parse_header(&bytes, b"P6")?;
    let need = w * h * 3;
    let payload = &bytes[cur.pos..];
    if payload.len() != need {
        return Err(IoError::Parse {
            offset: cur.pos + payload.len().min(need),
            msg: format!("payload has {} bytes, expected {need}", payload.len()),
        });
    }
    // interleaved RGB -> planar CHW
    let mut data = vec![0.0f32; need];
    for y in 0..h {
        for x in 0..w {
            let p = (y * w + x) * 3;
            for c in 0..3 {
                data[c * h * w + y * w + x] = payload[p + c] as f32 / 255.0;
            }
        }
    }
    Ok(Tensor::from_vec(data, &[3, h, w])?)
}

fn quantize(v: f32) -> u8 {
    ((v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0)) as u8
}

/// Write a [3,H,W] tensor as binary P6.
pub fn write_frame(frame: &Tensor<f32>, path: &Path) -> Result<()> {
    let s = frame.shape();
    assert_eq!(s.len(), 3, "write_frame expects [3,H,W], got {s:?}");
    assert_eq!(s[0], 3, "write_frame expects 3 channels, got {s:?}");
    let (h, w) = (s[1], s[2]);
    let data = frame.data();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(quantize(data[c * h * w + y * w + x]));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a P5 file into a {0,1}-valued [1,H,W] mask (any nonzero byte is 1).
pub fn read_mask(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path)?;
    let (w, h, cur) = parse_header(&bytes, b"P5")?;
    let payload = &bytes[cur.pos..];
    if payload.len() != w * h {
        return Err(IoError::Parse {
            offset: cur.pos + payload.len().min(w * h),
            msg: format!("payload has {} bytes, expected {}", payload.len(), w * h),
        });
    }
    let data: Vec<f32> = payload
        .iter()
        .map(|&b| if b != 0 { 1.0 } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(data, &[1, h, w])?)
}

/// Write a {0,1} mask as P5 with values 0/255.
pub fn write_mask(mask: &Tensor<f32>, path: &Path) -> Result<()> {
    let s = mask.shape();
    assert_eq!(s.len(), 3, "write_mask expects [1,H,W], got {s:?}");
    assert_eq!(s[0], 1, "write_mask expects 1 channel, got {s:?}");
    let (h, w) = (s[1], s[2]);
    let data = mask.data();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(data.iter().map(|&v| if v > 0.5 { 255u8 } else { 0u8 }));
    fs::write(path, out)?;
    Ok(())
}
