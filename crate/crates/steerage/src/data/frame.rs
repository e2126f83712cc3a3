//! Frame raster IO (binary PPM, 8-bit RGB) and pixel normalization.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// 8-bit RGB image, interleaved row-major (H×W×3).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::shape(format!(
                "image {width}×{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    f.write_all(header.as_bytes())
        .and_then(|_| f.write_all(&img.pixels))
        .map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes).map_err(|msg| Error::Header {
        path: path.to_path_buf(),
        msg,
    })
}

fn parse_ppm(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> std::result::Result<String, String> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(bytes)? != "P6" {
        return Err("not a binary PPM (missing P6 magic)".into());
    }
    let width: usize = token(bytes)?.parse().map_err(|_| "bad width".to_string())?;
    let height: usize = token(bytes)?.parse().map_err(|_| "bad height".to_string())?;
    let maxval: usize = token(bytes)?.parse().map_err(|_| "bad maxval".to_string())?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval} (only 255)"));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    pos += 1;
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(format!(
            "pixel data truncated: need {need} bytes, found {}",
            bytes.len().saturating_sub(pos)
        ));
    }
    RgbImage::new(width, height, bytes[pos..pos + need].to_vec()).map_err(|e| e.to_string())
}

/// Interleaved 8-bit pixels → planar [C×H×W] tensor via x/127.5 − 1.
pub fn normalize_image(img: &RgbImage) -> Tensor {
    let (h, w) = (img.height, img.width);
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[(c * h + y) * w + x] = img.pixels[(y * w + x) * 3 + c] as f64 / 127.5 - 1.0;
            }
        }
    }
    Tensor::new(vec![3, h, w], data).expect("shape is consistent by construction")
}

/// Inverse of [`normalize_image`] with rounding back to 8-bit.
pub fn denormalize_image(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::shape(format!("expected [3×H×W] tensor, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut pixels = vec![0u8; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = (t.data()[(c * h + y) * w + x] + 1.0) * 127.5;
                pixels[(y * w + x) * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage::new(w, h, pixels)
}

/// m consecutive frames stacked depth-wise into one [3×m×H×W] tensor, the
/// worker's convolution input.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    tensor: Tensor,
}

impl FrameSequence {
    /// `frames` must be [3×H×W] tensors of one shape with values in [−1,1],
    /// ordered oldest→newest.
    pub fn stack(frames: &[Tensor]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::shape("frame sequence cannot be empty"));
        }
        let s0 = frames[0].shape().to_vec();
        if s0.len() != 3 || s0[0] != 3 {
            return Err(Error::shape(format!(
                "frames must be [3×H×W], got {s0:?}"
            )));
        }
        let (h, w) = (s0[1], s0[2]);
        let m = frames.len();
        let mut data = vec![0.0; 3 * m * h * w];
        for (d, f) in frames.iter().enumerate() {
            if f.shape() != s0 {
                return Err(Error::shape(format!(
                    "frame {d} shape {:?} differs from {s0:?}",
                    f.shape()
                )));
            }
            for (i, &v) in f.data().iter().enumerate() {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::contract(format!(
                        "frame {d} has pixel {v} outside [-1, 1]"
                    )));
                }
                let c = i / (h * w);
                let rest = i % (h * w);
                data[(c * m + d) * h * w + rest] = v;
            }
        }
        Ok(Self {
            tensor: Tensor::new(vec![3, m, h, w], data)?,
        })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn m(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[3]
    }

    /// Wraps an already-stacked [3×m×H×W] tensor.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        let s = tensor.shape();
        if s.len() != 4 || s[0] != 3 {
            return Err(Error::shape(format!("expected [3×m×H×W], got {s:?}")));
        }
        Ok(Self { tensor })
    }
}

/// Frames `n−m+1 ..= n` from a cache of per-sample tensors, stacked.
/// Index bounds are asserted here so every caller inherits the guarantee.
pub fn sequence_ending_at(frames: &[Tensor], n: usize, m: usize) -> Result<FrameSequence> {
    if m == 0 {
        return Err(Error::config("frame count m must be >= 1"));
    }
    if n + 1 < m || n >= frames.len() {
        return Err(Error::contract(format!(
            "insufficient history: frame sequence ending at {n} needs indices {}..={n} within 0..{}",
            n as isize - (m as isize - 1),
            frames.len()
        )));
    }
    FrameSequence::stack(&frames[n + 1 - m..=n])
}
