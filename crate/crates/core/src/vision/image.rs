use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::VisionError;

/// Row-major intensities in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

fn check_field(width: u32, height: u32, values: &[f64], what: &str) -> Result<(), VisionError> {
    if width == 0 || height == 0 {
        return Err(VisionError::InvalidImage(format!("{what} must be at least 1x1")));
    }
    if values.len() != width as usize * height as usize {
        return Err(VisionError::InvalidImage(format!(
            "{} values for a {width}x{height} {what}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(VisionError::InvalidImage(format!("{what} value {v} outside [0,1]")));
    }
    Ok(())
}

impl GrayImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, VisionError> {
        check_field(width, height, &values, "image")?;
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> Result<Self, VisionError> {
        let values = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, values)
    }

    pub fn constant(width: u32, height: u32, value: f64) -> Result<Self, VisionError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    /// Values are clamped into [0,1] rather than rejected.
    pub(crate) fn from_raw_clamped(width: u32, height: u32, values: Vec<f64>) -> Self {
        Self {
            width,
            height,
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> f64 {
        let n = self.values.len() as f64;
        let m = self.values.iter().sum::<f64>() / n;
        // one correction pass removes most of the summation error
        m + self.values.iter().map(|v| v - m).sum::<f64>() / n
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Quarter turn: the result is `height x width` with
    /// `out(x, y) = self(width - 1 - y, x)`.
    pub fn rot90(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            values: rot90_values(&self.values, self.width, self.height),
        }
    }

    /// Intensities quantized to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.values.iter().map(|v| (v * 255.0).round() as u8).collect()
    }
}

pub(crate) fn rot90_values<T: Copy>(values: &[T], width: u32, height: u32) -> Vec<T> {
    let (w, h) = (width as usize, height as usize);
    let mut out = Vec::with_capacity(values.len());
    // output is h wide, w tall
    for y in 0..w {
        for x in 0..h {
            out.push(values[x * w + (w - 1 - y)]);
        }
    }
    out
}

/// Per-pixel pre-segmentation confidence in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, VisionError> {
        check_field(width, height, &values, "probability map")?;
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn rot90(&self) -> Self {
        Self {
            width: self.height,
            height: self.width,
            values: rot90_values(&self.values, self.width, self.height),
        }
    }
}

/// A decoded 8-bit PNG, grayscale (1 channel) or RGB (3 channels).
/// Alpha is dropped.
#[derive(Clone, Debug)]
pub struct PngImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    /// Interleaved samples, `channels` per pixel.
    pub samples: Vec<u8>,
}

impl PngImage {
    /// Rec. 601 luma (or the gray channel) scaled to [0,1].
    pub fn luma(&self) -> GrayImage {
        let values = match self.channels {
            1 => self.samples.iter().map(|&v| f64::from(v) / 255.0).collect(),
            _ => self
                .samples
                .chunks_exact(3)
                .map(|p| rec601(f64::from(p[0]), f64::from(p[1]), f64::from(p[2])) / 255.0)
                .collect(),
        };
        GrayImage::from_raw_clamped(self.width, self.height, values)
    }
}

pub(crate) fn rec601(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn decode_png(bytes: &[u8]) -> Result<PngImage, VisionError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| VisionError::Decode(e.to_string()))?;
    let (width, height) = (img.width(), img.height());
    if width == 0 || height == 0 {
        return Err(VisionError::InvalidImage("image has no pixels".into()));
    }
    let (channels, samples) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(_) => (3, img.to_rgb8().into_raw()),
        other => {
            return Err(VisionError::Unsupported(format!(
                "only 8-bit gray or RGB PNGs are accepted, got {:?}",
                other.color()
            )))
        }
    };
    Ok(PngImage {
        width,
        height,
        channels,
        samples,
    })
}

pub fn encode_png(width: u32, height: u32, channels: u8, samples: &[u8]) -> Result<Vec<u8>, VisionError> {
    let color = match channels {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        n => return Err(VisionError::Unsupported(format!("{n} channels"))),
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(samples, width, height, color)
        .map_err(|e| VisionError::Decode(e.to_string()))?;
    Ok(out)
}
