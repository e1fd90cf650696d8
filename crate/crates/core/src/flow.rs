//! Dense optical flow and the Middlebury `.flo` byte layout.
//!
//! Layout: a 12-byte header (`f32` magic 202021.25, `i32` width, `i32`
//! height, all little-endian) followed by `height` rows of `width` pixels,
//! each pixel stored as two little-endian `f32` values `(u, v)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{check_dims, check_len};

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_HEADER_LEN: usize = 12;

/// What to do with NaN or infinite components while decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonFinitePolicy {
    #[default]
    Reject,
    /// Replace the whole pixel with zero displacement.
    ZeroFill,
}

/// Per-pixel displacement from one frame to the next. `u` is positive
/// rightward, `v` positive downward, both in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        let n = check_dims(width, height)?;
        if i32::try_from(width).is_err() || i32::try_from(height).is_err() {
            return Err(Error::InvalidDimensions {
                width: width as i64,
                height: height as i64,
            });
        }
        check_len(n, u.len())?;
        check_len(n, v.len())?;
        if let Some(i) = u.iter().zip(&v).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::NonFiniteFlow(i));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, du: f32, dv: f32) -> Result<Self> {
        let n = check_dims(width, height)?;
        Self::new(width, height, vec![du; n], vec![dv; n])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Result<Self> {
        let n = check_dims(width, height)?;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                let (du, dv) = f(x, y);
                u.push(du);
                v.push(dv);
            }
        }
        Self::new(width, height, u, v)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn decode_flo(bytes: &[u8], policy: NonFinitePolicy) -> Result<Self> {
        if bytes.len() < FLO_HEADER_LEN {
            return Err(Error::TruncatedFile {
                expected: FLO_HEADER_LEN,
                got: bytes.len(),
            });
        }
        let magic = f32::from_le_bytes(word(bytes, 0));
        if magic != FLO_MAGIC {
            return Err(Error::MagicMismatch(magic));
        }
        let width = i32::from_le_bytes(word(bytes, 4));
        let height = i32::from_le_bytes(word(bytes, 8));
        if width < 1 || height < 1 {
            return Err(Error::InvalidDimensions {
                width: width.into(),
                height: height.into(),
            });
        }
        let (width, height) = (width as usize, height as usize);
        let n = check_dims(width, height)?;
        let expected = n
            .checked_mul(8)
            .and_then(|p| p.checked_add(FLO_HEADER_LEN))
            .ok_or(Error::InvalidDimensions {
                width: width as i64,
                height: height as i64,
            })?;
        if bytes.len() < expected {
            return Err(Error::TruncatedFile {
                expected,
                got: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingBytes(bytes.len() - expected));
        }

        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for (i, px) in bytes[FLO_HEADER_LEN..].chunks_exact(8).enumerate() {
            let mut du = f32::from_le_bytes(word(px, 0));
            let mut dv = f32::from_le_bytes(word(px, 4));
            if !du.is_finite() || !dv.is_finite() {
                match policy {
                    NonFinitePolicy::Reject => return Err(Error::NonFiniteFlow(i)),
                    NonFinitePolicy::ZeroFill => {
                        du = 0.0;
                        dv = 0.0;
                    }
                }
            }
            u.push(du);
            v.push(dv);
        }
        Ok(Self { width, height, u, v })
    }

    pub fn encode_flo(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FLO_HEADER_LEN + 8 * self.u.len());
        out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        out.extend_from_slice(&(self.width as i32).to_le_bytes());
        out.extend_from_slice(&(self.height as i32).to_le_bytes());
        for (du, dv) in self.u.iter().zip(&self.v) {
            out.extend_from_slice(&du.to_le_bytes());
            out.extend_from_slice(&dv.to_le_bytes());
        }
        out
    }
}

fn word(bytes: &[u8], at: usize) -> [u8; 4] {
    [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]
}
