//! Binary containers: `WSV1` volumes/masks and `WSP1` pyramids.
//!
//! `WSV1`: magic, little-endian `u32` nx, ny, nz, `3 x f64` origin,
//! `3 x f64` spacing, `u8` dtype tag, then the payload in canonical layout.
//! Tag 0 is `f32` scalars, tag 2 is `u8` mask bits (0/1).
//!
//! `WSP1`: magic, `u32` levels J, `u8` bank-name length + UTF-8 name,
//! `(J + 1) x 3 x u32` per-level dims (level 0 first), then the coarse volume
//! and the detail volumes `D^J .. D^1`, each as a complete `WSV1` block.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{voxel_count, Dims, RegionMask3, Volume3};
use crate::wavelet::{FilterBank, WaveletPyramid};

pub const VOLUME_MAGIC: &[u8; 4] = b"WSV1";
pub const PYRAMID_MAGIC: &[u8; 4] = b"WSP1";

pub const DTYPE_F32: u8 = 0;
pub const DTYPE_MASK: u8 = 2;

const MAX_AXIS: u32 = 4096;

fn write_header(out: &mut Vec<u8>, dims: Dims, origin: [f64; 3], spacing: [f64; 3], dtype: u8) {
    out.extend_from_slice(VOLUME_MAGIC);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for o in origin {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for s in spacing {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.push(dtype);
}

pub fn encode_volume(v: &Volume3, out: &mut Vec<u8>) {
    write_header(out, v.dims(), v.origin(), v.spacing(), DTYPE_F32);
    out.reserve(v.len() * 4);
    for &x in v.values() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

pub fn encode_mask(m: &RegionMask3, out: &mut Vec<u8>) {
    write_header(out, m.dims(), [0.0; 3], [1.0; 3], DTYPE_MASK);
    out.extend(m.bits().iter().map(|&b| b as u8));
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::InvalidData("truncated container".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<Dims> {
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let v = self.u32()?;
            if v == 0 || v > MAX_AXIS {
                return Err(Error::InvalidData(format!("axis length {v} out of range")));
            }
            *d = v as usize;
        }
        Ok(dims)
    }
}

enum Block {
    Volume(Volume3),
    Mask(RegionMask3),
}

fn decode_block(cur: &mut Cursor) -> Result<Block> {
    if cur.take(4)? != VOLUME_MAGIC {
        return Err(Error::InvalidData("bad magic, expected WSV1".into()));
    }
    let dims = cur.dims()?;
    let mut origin = [0.0; 3];
    for o in &mut origin {
        *o = cur.f64()?;
    }
    let mut spacing = [0.0; 3];
    for s in &mut spacing {
        *s = cur.f64()?;
    }
    let n = voxel_count(dims);
    match cur.u8()? {
        DTYPE_F32 => {
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(cur.f32()? as f64);
            }
            Ok(Block::Volume(Volume3::new(dims, origin, spacing, values)?))
        }
        DTYPE_MASK => {
            let raw = cur.take(n)?;
            let mut bits = Vec::with_capacity(n);
            for &b in raw {
                match b {
                    0 => bits.push(false),
                    1 => bits.push(true),
                    other => return Err(Error::InvalidData(format!("mask byte {other} is not 0/1"))),
                }
            }
            Ok(Block::Mask(RegionMask3::new(dims, bits)?))
        }
        tag => Err(Error::InvalidData(format!("unknown dtype tag {tag}"))),
    }
}

fn expect_end(cur: &Cursor) -> Result<()> {
    if cur.pos != cur.buf.len() {
        return Err(Error::InvalidData(format!(
            "{} trailing bytes",
            cur.buf.len() - cur.pos
        )));
    }
    Ok(())
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume3> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    match decode_block(&mut cur)? {
        Block::Volume(v) => {
            expect_end(&cur)?;
            Ok(v)
        }
        Block::Mask(_) => Err(Error::InvalidData("expected a scalar volume, found a mask".into())),
    }
}

pub fn decode_mask(bytes: &[u8]) -> Result<RegionMask3> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    match decode_block(&mut cur)? {
        Block::Mask(m) => {
            expect_end(&cur)?;
            Ok(m)
        }
        Block::Volume(_) => Err(Error::InvalidData("expected a mask, found a scalar volume".into())),
    }
}

pub fn encode_pyramid(p: &WaveletPyramid) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PYRAMID_MAGIC);
    out.extend_from_slice(&(p.levels() as u32).to_le_bytes());
    let name = p.bank().name().as_bytes();
    out.push(name.len() as u8);
    out.extend_from_slice(name);
    for dims in p.level_dims() {
        for d in dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    encode_volume(p.coarse(), &mut out);
    for d in p.details() {
        encode_volume(d, &mut out);
    }
    out
}

pub fn decode_pyramid(bytes: &[u8]) -> Result<WaveletPyramid> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != PYRAMID_MAGIC {
        return Err(Error::InvalidData("bad magic, expected WSP1".into()));
    }
    let levels = cur.u32()? as usize;
    if levels == 0 || levels > 16 {
        return Err(Error::InvalidData(format!("level count {levels} out of range")));
    }
    let name_len = cur.u8()? as usize;
    let name =
        std::str::from_utf8(cur.take(name_len)?).map_err(|_| Error::InvalidData("bank name is not UTF-8".into()))?;
    let bank = FilterBank::by_name(name)?;
    let mut level_dims = Vec::with_capacity(levels + 1);
    for _ in 0..=levels {
        level_dims.push(cur.dims()?);
    }
    let coarse = match decode_block(&mut cur)? {
        Block::Volume(v) => v,
        Block::Mask(_) => return Err(Error::InvalidData("mask block inside pyramid".into())),
    };
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        match decode_block(&mut cur)? {
            Block::Volume(v) => details.push(v),
            Block::Mask(_) => return Err(Error::InvalidData("mask block inside pyramid".into())),
        }
    }
    expect_end(&cur)?;
    WaveletPyramid::from_parts(bank, level_dims, coarse, details)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn write_volume(path: impl AsRef<Path>, v: &Volume3) -> Result<()> {
    let mut out = Vec::new();
    encode_volume(v, &mut out);
    write_all(path.as_ref(), &out)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3> {
    decode_volume(&read_all(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, m: &RegionMask3) -> Result<()> {
    let mut out = Vec::new();
    encode_mask(m, &mut out);
    write_all(path.as_ref(), &out)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<RegionMask3> {
    decode_mask(&read_all(path.as_ref())?)
}

pub fn write_pyramid(path: impl AsRef<Path>, p: &WaveletPyramid) -> Result<()> {
    write_all(path.as_ref(), &encode_pyramid(p))
}

pub fn read_pyramid(path: impl AsRef<Path>) -> Result<WaveletPyramid> {
    decode_pyramid(&read_all(path.as_ref())?)
}
