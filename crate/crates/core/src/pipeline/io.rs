//! File formats: binary PPM/PGM images and the CYLT tensor container.
//!
//! CYLT layout: the magic `CYLT`, one dtype byte (0 = f32, 1 = f64), four
//! little-endian `u32` dims, then the values in row-major little-endian
//! order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dtype, Scalar, Tensor};

const MAGIC: &[u8; 4] = b"CYLT";

/// `[-1, 1]` to 8 bits with round-half-up and clamping.
pub fn to_u8(v: f64) -> u8 {
    ((v + 1.0) * 127.5 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn from_u8(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

pub fn encode_cylt<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + t.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE as u8);
    for d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

/// Decodes into `T`, converting from the stored dtype if needed.
pub fn decode_cylt<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 21 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a CYLT tensor".into()));
    }
    let dtype = Dtype::from_byte(bytes[4]).ok_or_else(|| Error::Format(format!("unknown CYLT dtype {}", bytes[4])))?;
    let mut shape = [0usize; 4];
    for (i, d) in shape.iter_mut().enumerate() {
        let o = 5 + 4 * i;
        *d = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    }
    let n: usize = shape.iter().product();
    let body = &bytes[21..];
    if body.len() != n * dtype.size() {
        return Err(Error::Format(format!("CYLT payload has {} bytes, shape {shape:?} needs {}", body.len(), n * dtype.size())));
    }
    let data: Vec<T> = match dtype {
        Dtype::F32 => body.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect(),
        Dtype::F64 => body.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect(),
    };
    Tensor::from_vec(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_cylt<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode_cylt(t))?;
    Ok(())
}

pub fn read_cylt<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    decode_cylt(&fs::read(path)?)
}

/// Encodes the first batch item of a 3-channel image as binary P6.
pub fn encode_ppm<T: Scalar>(image: &Tensor<T>) -> Result<Vec<u8>> {
    let [_, c, h, w] = image.shape();
    if c != 3 || image.batch() == 0 {
        return Err(Error::Shape(format!("PPM needs a [N, 3, H, W] image, got {:?}", image.shape())));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out.push(to_u8(image.at(0, ch, y, x).f64()));
            }
        }
    }
    Ok(out)
}

/// Grey-scale P5, linearly rescaled from `[lo, hi]`.
pub fn encode_pgm(values: &[f64], height: usize, width: usize, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::Size(format!("PGM of {height}x{width} given {} values", values.len())));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| ((v - lo) / span * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8));
    Ok(out)
}

/// Writes a map as PGM scaled by its own min/max.
pub fn write_pgm_auto(path: impl AsRef<Path>, values: &[f64], height: usize, width: usize) -> Result<()> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    fs::write(path, encode_pgm(values, height, width, lo, hi)?)?;
    Ok(())
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    body: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::Format("truncated image header".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated image header".into())),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad number in image header".into()))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("missing separator after image header".into()));
    }
    Ok(Header { magic, width: fields[0], height: fields[1], maxval: fields[2], body: pos + 1 })
}

/// Decodes binary P6 (maxval 255) into a `[1, 3, H, W]` tensor in `[-1, 1]`.
pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(Error::Format("not a binary PPM (P6) image".into()));
    }
    if h.maxval != 255 {
        return Err(Error::Format(format!("only maxval 255 is supported, got {}", h.maxval)));
    }
    let n = h.width * h.height * 3;
    let body = &bytes[h.body..];
    if body.len() < n {
        return Err(Error::Format(format!("PPM body has {} bytes, expected {n}", body.len())));
    }
    let (w, hh) = (h.width, h.height);
    Ok(Tensor::from_fn([1, 3, hh, w], |_, c, y, x| T::of(from_u8(body[(y * w + x) * 3 + c]))))
}

pub fn write_ppm<T: Scalar>(path: impl AsRef<Path>, image: &Tensor<T>) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

pub fn read_ppm<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    decode_ppm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_mapping() {
        assert_eq!(to_u8(-1.0), 0);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(5.0), 255);
        // 127.5 rounds half up
        assert_eq!(to_u8(0.0), 128);
        for b in 0..=255u8 {
            assert_eq!(to_u8(from_u8(b)), b);
        }
    }

    #[test]
    fn cylt_round_trip_and_cross_dtype() {
        let t = Tensor::from_fn([2, 1, 3, 4], |n, _, y, x| (n * 100 + y * 10 + x) as f64 * 0.5);
        let bytes = encode_cylt(&t);
        assert_eq!(&bytes[..5], b"CYLT\x01");
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        let back: Tensor<f64> = decode_cylt(&bytes).unwrap();
        assert_eq!(back, t);
        let f: Tensor<f32> = decode_cylt(&bytes).unwrap();
        assert_eq!(f.at(1, 0, 2, 3), 61.5);
    }

    #[test]
    fn cylt_rejects_garbage() {
        assert!(matches!(decode_cylt::<f32>(b"NOPE"), Err(Error::Format(_))));
        let mut b = encode_cylt(&Tensor::<f32>::zeros([1, 1, 2, 2]));
        b.pop();
        assert!(matches!(decode_cylt::<f32>(&b), Err(Error::Format(_))));
    }

    #[test]
    fn ppm_round_trip_and_comments() {
        let img = Tensor::from_fn([1, 3, 2, 3], |_, c, y, x| from_u8((c * 50 + y * 20 + x * 7) as u8));
        let bytes = encode_ppm(&img).unwrap();
        let back: Tensor<f64> = decode_ppm(&bytes).unwrap();
        assert_eq!(back, img);
        let mut with_comment = b"P6\n# made by hand\n3 2\n255\n".to_vec();
        with_comment.extend_from_slice(&bytes[bytes.len() - 18..]);
        assert_eq!(decode_ppm::<f64>(&with_comment).unwrap(), img);
    }
}
