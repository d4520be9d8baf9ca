//! Pixel tensors, Netpbm (P5/P6) and raw tensor ("RTEN") I/O, and bilinear
//! resizing.
//!
//! Layout is row-major with channels interleaved: the value of channel `c` at
//! `(x, y, z)` lives at `((z * h + y) * w + x) * channels + c`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{domain, Error, Result};

const RTEN_MAGIC: &[u8; 4] = b"RTEN";
const RTEN_VERSION: u32 = 1;

/// Dense tensor of 32-bit samples without range constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    channels: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, channels: usize, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) || channels == 0 {
            return domain(format!(
                "tensor dims {dims:?} x {channels} channels must be positive"
            ));
        }
        let len = dims.iter().product::<usize>() * channels;
        if data.len() != len {
            return domain(format!("tensor needs {len} samples, got {}", data.len()));
        }
        Ok(Self {
            dims,
            channels,
            data,
        })
    }

    pub fn zeros(dims: Vec<usize>, channels: usize) -> Result<Self> {
        let len = dims.iter().product::<usize>() * channels;
        Self::new(dims, channels, vec![0.0; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Flat index of the first channel of the pixel at `coords`.
    #[inline]
    pub fn offset(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (&c, &d) in coords.iter().zip(&self.dims) {
            idx += c * stride;
            stride *= d;
        }
        idx * self.channels
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.data.chunks(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let count = self.pixel_count() as f64;
        sums.iter().map(|s| s / count).collect()
    }
}

/// Image or volume with every sample in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn new(dims: Vec<usize>, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::try_from(Tensor::new(dims, channels, data)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn dims(&self) -> &[usize] {
        self.0.dims()
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }

    pub fn data(&self) -> &[f32] {
        self.0.data()
    }
}

impl TryFrom<Tensor> for ImageTensor {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        if t.data
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return domain("image samples must be finite and within [0, 1]");
        }
        Ok(Self(t))
    }
}

fn parse_err<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        offset,
        msg: msg.into(),
    })
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return parse_err(start, format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| parse_err(start, format!("{what} out of range")), Ok)
    }
}

/// Decodes a binary PGM (P5) or PPM (P6) image with maxval 255.
pub fn decode_netpbm(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 2 {
        return parse_err(0, "file too short for a netpbm magic");
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return parse_err(0, "expected magic P5 or P6"),
    };
    let mut r = HeaderReader { bytes, pos: 2 };
    let w = r.number("width")?;
    let h = r.number("height")?;
    r.skip_space_and_comments();
    let maxval_at = r.pos;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        return parse_err(maxval_at, format!("maxval {maxval} unsupported, only 255"));
    }
    if w == 0 || h == 0 {
        return parse_err(maxval_at, "zero image dimension");
    }
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        _ => return parse_err(r.pos, "expected a single whitespace before pixel data"),
    }
    let need = w * h * channels;
    let payload = &bytes[r.pos..];
    if payload.len() < need {
        return parse_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        );
    }
    let data = payload[..need].iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::new(vec![w, h], channels, data)
}

/// Encodes a 2D image with 1 or 3 channels as P5 or P6, rounding to 8 bits.
pub fn encode_netpbm(img: &ImageTensor) -> Result<Vec<u8>> {
    let t = img.tensor();
    if t.dims().len() != 2 {
        return domain("netpbm can only hold 2D images");
    }
    let magic = match t.channels() {
        1 => "P5",
        3 => "P6",
        c => return domain(format!("netpbm needs 1 or 3 channels, got {c}")),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", t.dims()[0], t.dims()[1]).into_bytes();
    out.extend(
        t.data()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

/// `"RTEN"`, version, rank, extents, channels (all u32 LE), then f32 LE samples.
pub fn encode_rten(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * t.dims().len() + 4 * t.data().len());
    out.extend_from_slice(RTEN_MAGIC);
    out.extend_from_slice(&RTEN_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(t.channels() as u32).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_rten(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut word = |what: &str| -> Result<u32> {
        match bytes.get(pos..pos + 4) {
            Some(b) => {
                pos += 4;
                Ok(u32::from_le_bytes(b.try_into().unwrap()))
            }
            None => parse_err(pos, format!("truncated header reading {what}")),
        }
    };
    if bytes.get(..4) != Some(RTEN_MAGIC.as_slice()) {
        return parse_err(0, "expected magic RTEN");
    }
    word("magic")?;
    let version = word("version")?;
    if version != RTEN_VERSION {
        return parse_err(4, format!("unsupported RTEN version {version}"));
    }
    let rank = word("rank")? as usize;
    if rank == 0 || rank > 8 {
        return parse_err(8, format!("bad rank {rank}"));
    }
    let dims = (0..rank)
        .map(|_| word("extent").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let channels = word("channels")? as usize;
    let header = 16 + 4 * rank;
    let count = dims.iter().try_fold(channels, |acc, &d| acc.checked_mul(d));
    let Some(count) = count.filter(|&c| c > 0) else {
        return parse_err(header - 4, "empty or oversized tensor");
    };
    let payload = &bytes[header..];
    if payload.len() < count * 4 {
        return parse_err(
            bytes.len(),
            format!(
                "truncated payload: {} of {} bytes",
                payload.len(),
                count * 4
            ),
        );
    }
    let data = payload[..count * 4]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::new(dims, channels, data)
}

/// Loads a PGM/PPM image or an RTEN tensor, chosen by magic bytes.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(RTEN_MAGIC) {
        ImageTensor::try_from(decode_rten(&bytes)?)
    } else {
        decode_netpbm(&bytes)
    }
}

/// Writes `.pgm`/`.ppm` as Netpbm and anything else as RTEN.
pub fn save_image(img: &ImageTensor, path: &Path) -> Result<()> {
    let is_netpbm = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("pgm") | Some("ppm")
    );
    let bytes = if is_netpbm {
        encode_netpbm(img)?
    } else {
        encode_rten(img.tensor())
    };
    write_file(path, &bytes)
}

pub fn save_tensor(t: &Tensor, path: &Path) -> Result<()> {
    write_file(path, &encode_rten(t))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    decode_rten(&fs::read(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Linear interpolation weights along one axis, half-pixel centres.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (x - lo as f64) as f32)
        })
        .collect()
}

/// Separable (bi/tri)linear resize with half-pixel centres.
pub fn resize_bilinear(img: &ImageTensor, new_dims: &[usize]) -> Result<ImageTensor> {
    let out = resize_tensor(img.tensor(), new_dims)?;
    // Convex combinations of [0, 1] samples stay in range up to rounding.
    let mut t = out;
    t.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    ImageTensor::try_from(t)
}

pub fn resize_tensor(t: &Tensor, new_dims: &[usize]) -> Result<Tensor> {
    if new_dims.len() != t.dims().len() || new_dims.contains(&0) {
        return domain(format!("cannot resize {:?} to {new_dims:?}", t.dims()));
    }
    if new_dims == t.dims() {
        return Ok(t.clone());
    }
    let mut cur = t.clone();
    for axis in 0..new_dims.len() {
        if cur.dims()[axis] != new_dims[axis] {
            cur = resize_axis(&cur, axis, new_dims[axis]);
        }
    }
    Ok(cur)
}

fn resize_axis(t: &Tensor, axis: usize, len: usize) -> Tensor {
    let c = t.channels();
    let inner: usize = t.dims()[..axis].iter().product::<usize>() * c;
    let src_len = t.dims()[axis];
    let outer: usize = t.dims()[axis + 1..].iter().product();
    let taps = axis_taps(src_len, len);
    let mut dims = t.dims().to_vec();
    dims[axis] = len;
    let mut data = vec![0.0f32; outer * len * inner];
    let src = t.data();
    for o in 0..outer {
        let src_block = &src[o * src_len * inner..(o + 1) * src_len * inner];
        let dst_block = &mut data[o * len * inner..(o + 1) * len * inner];
        for (i, &(lo, hi, f)) in taps.iter().enumerate() {
            let a = &src_block[lo * inner..(lo + 1) * inner];
            let b = &src_block[hi * inner..(hi + 1) * inner];
            for ((d, &x), &y) in dst_block[i * inner..(i + 1) * inner]
                .iter_mut()
                .zip(a)
                .zip(b)
            {
                *d = x + (y - x) * f;
            }
        }
    }
    Tensor {
        dims,
        channels: t.channels,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_p5_scaling() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 128, 255, 64]);
        let img = decode_netpbm(&bytes).unwrap();
        assert_eq!(img.dims(), &[2, 2]);
        assert_eq!(img.data(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # rgb\n1 # w\n1\n255\n".to_vec();
        bytes.extend([10u8, 20, 30]);
        let img = decode_netpbm(&bytes).unwrap();
        assert_eq!(img.channels(), 3);
    }

    #[test]
    fn rejects_bad_netpbm() {
        let mut bytes = b"P6\n1 1\n65535\n".to_vec();
        bytes.extend([0u8; 6]);
        assert!(matches!(
            decode_netpbm(&bytes),
            Err(Error::Parse { offset: 7, .. })
        ));
        let short = b"P5\n4 4\n255\n\x00\x01".to_vec();
        assert!(matches!(
            decode_netpbm(&short),
            Err(Error::Parse { offset: 13, .. })
        ));
        assert!(matches!(
            decode_netpbm(b"P3\n1 1\n255\n0"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(decode_netpbm(b"P5\nx 1\n255\n").is_err());
    }

    #[test]
    fn netpbm_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P6\n3 2\n255\n".to_vec();
        bytes.extend((0u8..18).map(|i| i * 13));
        let path = dir.path().join("a.ppm");
        fs::write(&path, &bytes).unwrap();
        let a = load_image(&path).unwrap();
        let out = dir.path().join("b.ppm");
        save_image(&a, &out).unwrap();
        assert_eq!(fs::read(&out).unwrap(), bytes);
        assert_eq!(load_image(&out).unwrap(), a);
    }

    #[test]
    fn rten_round_trip_and_errors() {
        let t = Tensor::new(
            vec![2, 3, 2],
            1,
            (0..12).map(|i| i as f32 * 0.5 - 2.0).collect(),
        )
        .unwrap();
        let bytes = encode_rten(&t);
        assert_eq!(&bytes[..4], b"RTEN");
        assert_eq!(decode_rten(&bytes).unwrap(), t);
        assert!(matches!(
            decode_rten(&bytes[..bytes.len() - 3]),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            decode_rten(b"RTEX"),
            Err(Error::Parse { offset: 0, .. })
        ));
        // Out-of-range samples are fine as tensors but not as images.
        assert!(ImageTensor::try_from(t).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ImageTensor::new(vec![3, 2], 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resize_bilinear(&img, &[3, 2]).unwrap(), img);
        let c = ImageTensor::new(vec![5, 4], 3, vec![0.25; 60]).unwrap();
        let r = resize_bilinear(&c, &[11, 7]).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn resize_half_pixel_centres() {
        let img = ImageTensor::new(vec![2, 1], 1, vec![0.0, 1.0]).unwrap();
        let r = resize_bilinear(&img, &[4, 1]).unwrap();
        // Output centres map to source x = -0.25, 0.25, 0.75, 1.25.
        assert_eq!(r.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resize_volume() {
        let t = Tensor::new(
            vec![2, 2, 2],
            1,
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let r = resize_tensor(&t, &[2, 2, 4]).unwrap();
        assert_eq!(r.dims(), &[2, 2, 4]);
        let z: Vec<f32> = (0..4).map(|k| r.data()[r.offset(&[0, 0, k])]).collect();
        assert_eq!(z, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
