//! 8-bit raster images and the pixel-domain operators used by the metrics.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("dimension mismatch: {0}x{1}x{2} vs {3}x{4}x{5}")]
    DimensionMismatch(usize, usize, usize, usize, usize, usize),
    #[error("invalid image buffer: {0}")]
    InvalidBuffer(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major, interleaved 8-bit image with 1 (luma) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidBuffer(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidBuffer(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width * height * channels;
        if samples.len() != expected {
            return Err(ImageError::InvalidBuffer(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Image with every sample set to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds a luma image by evaluating `f(x, y)` at every pixel.
    pub fn from_luma_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, 1, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &ImageBuffer) -> Result<(), ImageError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                self.channels,
                other.width,
                other.height,
                other.channels,
            ))
        }
    }
}

/// Loads a PNG or uncompressed BMP file. Alpha channels are dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ImageError::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_image(&bytes)
}

/// Decodes an in-memory PNG or BMP by sniffing its signature.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"BM") {
        decode_bmp(bytes)
    } else {
        Err(ImageError::UnsupportedFormat(
            "expected PNG or BMP signature".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let corrupt = |e: png::DecodingError| ImageError::CorruptImage(e.to_string());
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::CorruptImage("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    buf.truncate(info.buffer_size());
    let (width, height) = (info.width as usize, info.height as usize);
    let src_channels = info.color_type.samples();
    // rows may be padded past width * channels
    let line = info.line_size;
    let mut packed = Vec::with_capacity(width * height * src_channels);
    for row in buf.chunks(line).take(height) {
        packed.extend_from_slice(&row[..width * src_channels]);
    }
    let (channels, samples) = match info.color_type {
        png::ColorType::Grayscale => (1, packed),
        png::ColorType::GrayscaleAlpha => (1, packed.chunks_exact(2).map(|p| p[0]).collect()),
        png::ColorType::Rgb => (3, packed),
        png::ColorType::Rgba => (
            3,
            packed
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
        ),
        png::ColorType::Indexed => {
            return Err(ImageError::UnsupportedFormat(
                "indexed PNG was not expanded".into(),
            ))
        }
    };
    ImageBuffer::new(width, height, channels, samples)
}

fn read_u16(bytes: &[u8], at: usize) -> Result<u16, ImageError> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| ImageError::CorruptImage("truncated BMP header".into()))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, ImageError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| ImageError::CorruptImage("truncated BMP header".into()))
}

/// Uncompressed BMP: 24-bit BGR or 8-bit palettized, bottom-up or top-down.
fn decode_bmp(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let pixel_offset = read_u32(bytes, 10)? as usize;
    let dib_size = read_u32(bytes, 14)? as usize;
    let (width, raw_height, bpp, compression, palette_len) = if dib_size == 12 {
        (
            read_u16(bytes, 18)? as i64,
            read_u16(bytes, 20)? as i64,
            read_u16(bytes, 24)?,
            0,
            0usize,
        )
    } else if dib_size >= 40 {
        (
            read_u32(bytes, 18)? as i32 as i64,
            read_u32(bytes, 22)? as i32 as i64,
            read_u16(bytes, 28)?,
            read_u32(bytes, 30)?,
            read_u32(bytes, 46)? as usize,
        )
    } else {
        return Err(ImageError::CorruptImage(format!(
            "unknown BMP header size {dib_size}"
        )));
    };
    if compression != 0 {
        return Err(ImageError::UnsupportedFormat(format!(
            "compressed BMP (method {compression})"
        )));
    }
    if width <= 0 || raw_height == 0 {
        return Err(ImageError::CorruptImage(format!(
            "invalid BMP dimensions {width}x{raw_height}"
        )));
    }
    let width = width as usize;
    let height = raw_height.unsigned_abs() as usize;
    let top_down = raw_height < 0;

    let (channels, palette) = match bpp {
        24 => (3, None),
        8 => {
            let entries = if palette_len == 0 { 256 } else { palette_len };
            let entry_size = if dib_size == 12 { 3 } else { 4 };
            let start = 14 + dib_size;
            let table = bytes
                .get(start..start + entries * entry_size)
                .ok_or_else(|| ImageError::CorruptImage("truncated BMP palette".into()))?;
            let colors: Vec<[u8; 3]> = table
                .chunks_exact(entry_size)
                .map(|e| [e[2], e[1], e[0]])
                .collect();
            let gray = colors.iter().all(|c| c[0] == c[1] && c[1] == c[2]);
            (if gray { 1 } else { 3 }, Some(colors))
        }
        other => return Err(ImageError::UnsupportedFormat(format!("{other}-bit BMP"))),
    };

    let row_bytes = (width * bpp as usize / 8 + 3) & !3;
    let data = bytes
        .get(pixel_offset..)
        .filter(|d| d.len() >= row_bytes * height)
        .ok_or_else(|| ImageError::CorruptImage("truncated BMP pixel data".into()))?;

    let mut samples = Vec::with_capacity(width * height * channels);
    for y in 0..height {
        let src_row = if top_down { y } else { height - 1 - y };
        let row = &data[src_row * row_bytes..src_row * row_bytes + row_bytes];
        match &palette {
            None => {
                for px in row[..width * 3].chunks_exact(3) {
                    samples.extend_from_slice(&[px[2], px[1], px[0]]);
                }
            }
            Some(colors) => {
                for &idx in &row[..width] {
                    let c = colors.get(idx as usize).ok_or_else(|| {
                        ImageError::CorruptImage(format!("palette index {idx} out of range"))
                    })?;
                    if channels == 1 {
                        samples.push(c[0]);
                    } else {
                        samples.extend_from_slice(c);
                    }
                }
            }
        }
    }
    ImageBuffer::new(width, height, channels, samples)
}

/// Encodes as an 8-bit grayscale or RGB PNG.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(if img.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| ImageError::Io(std::io::Error::other(e.to_string())))?;
        writer
            .write_image_data(&img.samples)
            .map_err(|e| ImageError::Io(std::io::Error::other(e.to_string())))?;
    }
    Ok(out)
}

pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes = encode_png(img)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    std::io::Write::write_all(&mut w, &bytes)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Encodes as a bottom-up 24-bit BMP (luma is expanded to gray RGB).
pub fn encode_bmp(img: &ImageBuffer) -> Vec<u8> {
    let row_bytes = (img.width * 3 + 3) & !3;
    let data_len = row_bytes * img.height;
    let mut out = Vec::with_capacity(54 + data_len);
    out.extend_from_slice(b"BM");
    out.extend_from_slice(&((54 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&54u32.to_le_bytes());
    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&(img.width as i32).to_le_bytes());
    out.extend_from_slice(&(img.height as i32).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    out.extend_from_slice(&2835u32.to_le_bytes());
    out.extend_from_slice(&2835u32.to_le_bytes());
    out.extend_from_slice(&[0; 8]);
    for y in (0..img.height).rev() {
        let start = out.len();
        for x in 0..img.width {
            let i = (y * img.width + x) * img.channels;
            let (r, g, b) = if img.channels == 1 {
                (img.samples[i], img.samples[i], img.samples[i])
            } else {
                (img.samples[i], img.samples[i + 1], img.samples[i + 2])
            };
            out.extend_from_slice(&[b, g, r]);
        }
        out.resize(start + row_bytes, 0);
    }
    out
}

fn quantize(v: f64) -> u8 {
    // f64::round is half-away-from-zero
    v.round().clamp(0.0, 255.0) as u8
}

/// ITU-R BT.601 luma. Single-channel input is returned unchanged.
pub fn to_luma(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let samples = img
        .samples
        .chunks_exact(3)
        .map(|p| quantize(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
        .collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 1,
        samples,
    }
}

/// Pixel-domain morph: `round(alpha * i1 + (1 - alpha) * i2)` per sample.
pub fn alpha_blend_morph(
    i1: &ImageBuffer,
    i2: &ImageBuffer,
    alpha: f64,
) -> Result<ImageBuffer, ImageError> {
    i1.check_same_shape(i2)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ImageError::InvalidParameter(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    // Weights are always formed from the smaller of alpha and 1 - alpha so
    // that swapping the inputs and complementing alpha reproduces the same
    // floating-point products.
    let (first, second, w_first) = if alpha > 0.5 {
        (i2, i1, 1.0 - alpha)
    } else {
        (i1, i2, alpha)
    };
    let w_second = 1.0 - w_first;
    let samples = first
        .samples
        .iter()
        .zip(&second.samples)
        .map(|(&a, &b)| quantize(w_first * a as f64 + w_second * b as f64))
        .collect();
    Ok(ImageBuffer {
        width: i1.width,
        height: i1.height,
        channels: i1.channels,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegradationKind {
    GaussianNoise,
    GaussianBlur,
}

/// `sigma` is the noise std-dev in intensity units, or the blur std-dev in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub sigma: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn noise(sigma: f64, seed: u64) -> Self {
        Self {
            kind: DegradationKind::GaussianNoise,
            sigma,
            seed,
        }
    }

    pub fn blur(sigma: f64) -> Self {
        Self {
            kind: DegradationKind::GaussianBlur,
            sigma,
            seed: 0,
        }
    }
}

pub fn degrade(img: &ImageBuffer, spec: &DegradationSpec) -> Result<ImageBuffer, ImageError> {
    if !spec.sigma.is_finite() || spec.sigma < 0.0 {
        return Err(ImageError::InvalidParameter(format!(
            "sigma must be finite and nonnegative, got {}",
            spec.sigma
        )));
    }
    if spec.sigma == 0.0 {
        return Ok(img.clone());
    }
    Ok(match spec.kind {
        DegradationKind::GaussianNoise => add_gaussian_noise(img, spec.sigma, spec.seed),
        DegradationKind::GaussianBlur => gaussian_blur(img, spec.sigma),
    })
}

fn add_gaussian_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and positive");
    let samples = img
        .samples
        .iter()
        .map(|&s| quantize(s as f64 + normal.sample(&mut rng)))
        .collect();
    ImageBuffer {
        samples,
        ..img.clone()
    }
}

/// Normalized 1-D Gaussian taps of radius `ceil(3 * sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Reflect-101 index (`d c b | a b c d | c b a`), folded until in range.
fn reflect(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < len as i64 { m } else { period - m }) as usize
}

fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    let taps = gaussian_kernel_1d(sigma);
    let radius = (taps.len() / 2) as i64;
    let (w, h, c) = (img.width, img.height, img.channels);

    let mut horizontal = vec![0.0f64; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, tap) in taps.iter().enumerate() {
                    let sx = reflect(x as i64 + k as i64 - radius, w);
                    acc += tap * img.samples[(y * w + sx) * c + ch] as f64;
                }
                horizontal[(y * w + x) * c + ch] = acc;
            }
        }
    }

    let mut samples = vec![0u8; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, tap) in taps.iter().enumerate() {
                    let sy = reflect(y as i64 + k as i64 - radius, h);
                    acc += tap * horizontal[(sy * w + x) * c + ch];
                }
                samples[(y * w + x) * c + ch] = quantize(acc);
            }
        }
    }
    ImageBuffer {
        samples,
        ..img.clone()
    }
}
