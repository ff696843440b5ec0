//! Raw grayscale images as carried in frame payloads by the reference
//! user-logic plugins, plus an in-process 90° rotation used to check them.
//!
//! Layout: width u32 LE, height u32 LE, then `width * height` bytes row-major.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image payload is {0} bytes, shorter than the 8-byte header")]
    MissingHeader(usize),
    #[error("{width}x{height} image needs {expected} pixel bytes, found {found}")]
    SizeMismatch {
        width: u32,
        height: u32,
        expected: u64,
        found: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width as u64 * height as u64;
        if pixels.len() as u64 != expected {
            return Err(ImageError::SizeMismatch {
                width,
                height,
                expected,
                found: pixels.len() as u64,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn decode(payload: &[u8]) -> Result<Self, ImageError> {
        if payload.len() < 8 {
            return Err(ImageError::MissingHeader(payload.len()));
        }
        let width = u32::from_le_bytes(payload[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(payload[4..8].try_into().unwrap());
        Self::new(width, height, payload[8..].to_vec())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.pixels.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.pixels[(row as usize) * self.width as usize + col as usize]
    }

    /// Rotates 90° clockwise: `out[r][c] = in[h-1-c][r]`, with the output
    /// `h` wide and `w` tall.
    pub fn rotate90(&self) -> RawImage {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut pixels = vec![0u8; w * h];
        // Output has h columns and w rows.
        for r in 0..w {
            for c in 0..h {
                pixels[r * h + c] = self.pixels[(h - 1 - c) * w + r];
            }
        }
        RawImage {
            width: self.height,
            height: self.width,
            pixels,
        }
    }
}
