//! The VGT1 tensor container and binary PPM images.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, VgaError};
use crate::tensorcore::Tensor;

pub const VGT_MAGIC: &[u8; 4] = b"VGT1";

/// Serialize to VGT1 bytes: magic, u32 LE rank, u32 LE extents, row-major f32 LE values.
///
/// Values are narrowed to `f32`; tensors already holding `f32`-representable values round-trip
/// bit for bit.
pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.numel());
    out.extend_from_slice(VGT_MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 || &bytes[..4] != VGT_MAGIC {
        return Err(VgaError::Format("missing VGT1 magic".into()));
    }
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| VgaError::Format("truncated VGT1 header".into()))
    };
    let rank = word(4)? as usize;
    if rank == 0 {
        return Err(VgaError::Format("VGT1 rank must be positive".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        shape.push(word(8 + 4 * i)? as usize);
    }
    let start = 8 + 4 * rank;
    let n = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
    let n = n.ok_or_else(|| VgaError::Format(format!("VGT1 shape {shape:?} overflows")))?;
    let expected = n.checked_mul(4).and_then(|b| b.checked_add(start));
    if expected != Some(bytes.len()) {
        return Err(VgaError::Format(format!(
            "VGT1 payload for shape {shape:?} needs {} bytes, file has {}",
            n * 4,
            bytes.len().saturating_sub(start)
        )));
    }
    let data = bytes[start..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(shape, data).map_err(|e| VgaError::Format(e.to_string()))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| VgaError::file(path, e))?;
    f.write_all(&encode_tensor(t))
        .map_err(|e| VgaError::file(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| VgaError::file(path, e))?;
    decode_tensor(&bytes).map_err(|e| match e {
        VgaError::Format(m) => VgaError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Decode a binary P6 PPM with maxval 255 into an `H×W×3` tensor scaled to `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments between header tokens
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(VgaError::Format("truncated PPM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(VgaError::Format(format!(
            "expected P6 PPM, found '{}'",
            fields[0]
        )));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| VgaError::Format(format!("bad PPM {what} '{s}'")))
    };
    let (w, h, maxval) = (
        num(&fields[1], "width")?,
        num(&fields[2], "height")?,
        num(&fields[3], "maxval")?,
    );
    if maxval != 255 {
        return Err(VgaError::Format(format!(
            "PPM maxval must be 255, found {maxval}"
        )));
    }
    if w == 0 || h == 0 {
        return Err(VgaError::Format("PPM has zero extent".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = w * h * 3;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| VgaError::Format(format!("PPM raster truncated: need {n} bytes")))?;
    let data = raster.iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![h, w, 3], data)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| VgaError::file(path, e))?;
    decode_ppm(&bytes).map_err(|e| match e {
        VgaError::Format(m) => VgaError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Encode an `H×W×3` tensor with values in `[0, 1]` as P6, rounding to the nearest level.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let [h, w, 3] = image.shape() else {
        return Err(VgaError::dim(format!(
            "PPM needs an H×W×3 tensor, got {:?}",
            image.shape()
        )));
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

/// Load an image from either a `.ppm` file or a VGT1 tensor of shape `H×W×3`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let img = if is_ppm {
        load_ppm(path)?
    } else {
        load_tensor(path)?
    };
    match img.shape() {
        [_, _, 3] => Ok(img),
        s => Err(VgaError::dim(format!(
            "{}: image must be H×W×3, got {s:?}",
            path.display()
        ))),
    }
}
