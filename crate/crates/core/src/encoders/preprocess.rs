//! Image decode, resize, crop and standardization.
//!
//! The resampler reproduces Pillow's two-pass fixed-point bicubic filter
//! (`a = -0.5`, support widened by the scale factor when downsampling,
//! 22-bit coefficients, horizontal pass first) so that tensors agree with
//! the reference Python pipeline to the pixel.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::EncoderError;

pub const CHANNELS: usize = 3;

const PRECISION_BITS: u32 = 32 - 8 - 2;
const BICUBIC_A: f64 = -0.5;
const BICUBIC_SUPPORT: f64 = 2.0;

/// Per-channel standardization constants and target resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub image_size: u32,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    #[serde(default = "default_interpolation")]
    pub interpolation: String,
}

fn default_interpolation() -> String {
    "bicubic".to_string()
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.image_size == 0 {
            return Err(EncoderError::Manifest("image_size must be positive".into()));
        }
        if self.interpolation != "bicubic" {
            return Err(EncoderError::Manifest(format!(
                "unsupported interpolation `{}`",
                self.interpolation
            )));
        }
        if self.std.iter().any(|s| !s.is_finite() || *s <= 0.0)
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(EncoderError::Manifest("invalid mean/std constants".into()));
        }
        Ok(())
    }
}

/// Standardized pixels in channel-major (CHW) RGB layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Vec<f32>,
    size: usize,
}

impl ImageTensor {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn shape(&self) -> [usize; 3] {
        [CHANNELS, self.size, self.size]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.size + y) * self.size + x]
    }
}

/// Decodes PNG/JPEG bytes and runs the full preprocessing pipeline.
pub fn preprocess_image(raw: &[u8], cfg: &PreprocessConfig) -> Result<ImageTensor, EncoderError> {
    preprocess_rgb(&decode_rgb(raw)?, cfg)
}

/// Decodes to 8-bit RGB; grayscale films are replicated across channels.
///
/// JPEG goes through libjpeg-turbo's decoder (IDCT and chroma upsampling
/// differ by a few levels between decoders); everything else through `image`.
pub fn decode_rgb(raw: &[u8]) -> Result<RgbImage, EncoderError> {
    if raw.starts_with(&[0xFF, 0xD8, 0xFF]) {
        if let Some(img) = decode_jpeg(raw)? {
            return Ok(img);
        }
    }
    let img = image::load_from_memory(raw).map_err(|e| EncoderError::Decode(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(EncoderError::EmptyImage);
    }
    Ok(img.to_rgb8())
}

/// `Ok(None)` means the color space is not handled here (e.g. CMYK).
fn decode_jpeg(raw: &[u8]) -> Result<Option<RgbImage>, EncoderError> {
    let decoded = std::panic::catch_unwind(|| -> std::io::Result<Option<(usize, usize, Vec<u8>)>> {
        let d = mozjpeg::Decompress::new_mem(raw)?;
        if !matches!(d.color_space(), mozjpeg::ColorSpace::JCS_GRAYSCALE | mozjpeg::ColorSpace::JCS_YCbCr | mozjpeg::ColorSpace::JCS_RGB) {
            return Ok(None);
        }
        let mut img = d.rgb()?;
        let (w, h) = (img.width(), img.height());
        let px: Vec<[u8; 3]> = img.read_scanlines()?;
        img.finish()?;
        Ok(Some((w, h, px.into_iter().flatten().collect())))
    })
    .map_err(|_| EncoderError::Decode("corrupt JPEG data".into()))?
    .map_err(|e| EncoderError::Decode(e.to_string()))?;
    match decoded {
        None => Ok(None),
        Some((0, _, _)) | Some((_, 0, _)) => Err(EncoderError::EmptyImage),
        Some((w, h, data)) => RgbImage::from_raw(w as u32, h as u32, data)
            .map(Some)
            .ok_or_else(|| EncoderError::Decode("truncated JPEG scanlines".into())),
    }
}

pub fn preprocess_rgb(img: &RgbImage, cfg: &PreprocessConfig) -> Result<ImageTensor, EncoderError> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(EncoderError::EmptyImage);
    }
    let target = cfg.image_size;
    let (new_w, new_h) = shortest_side_size(w, h, target);
    let resized = resize_bicubic(img, new_w, new_h);
    let top = round_half_even(f64::from(new_h.saturating_sub(target)) / 2.0) as u32;
    let left = round_half_even(f64::from(new_w.saturating_sub(target)) / 2.0) as u32;

    let size = target as usize;
    let mut data = vec![0f32; CHANNELS * size * size];
    let mean = cfg.mean.map(|m| m as f32);
    let std = cfg.std.map(|s| s as f32);
    for y in 0..size {
        for x in 0..size {
            let px = resized.get_pixel(left + x as u32, top + y as u32);
            for c in 0..CHANNELS {
                let v = f32::from(px[c]) / 255.0;
                data[(c * size + y) * size + x] = (v - mean[c]) / std[c];
            }
        }
    }
    Ok(ImageTensor { data, size })
}

/// Output size when scaling the shorter side to `target`, long side truncated.
pub fn shortest_side_size(w: u32, h: u32, target: u32) -> (u32, u32) {
    let (short, long) = if w <= h { (w, h) } else { (h, w) };
    if short == target {
        return (w, h);
    }
    let new_long = (f64::from(target) * f64::from(long) / f64::from(short)) as u32;
    if w <= h {
        (target, new_long)
    } else {
        (new_long, target)
    }
}

fn round_half_even(v: f64) -> f64 {
    let r = v.round();
    if (v - v.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
        r - v.signum()
    } else {
        r
    }
}

fn bicubic(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((BICUBIC_A + 2.0) * x - (BICUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * BICUBIC_A
    } else {
        0.0
    }
}

struct Coeffs {
    ksize: usize,
    bounds: Vec<(usize, usize)>,
    weights: Vec<i32>,
}

fn precompute_coeffs(in_size: u32, out_size: u32) -> Coeffs {
    let scale = f64::from(in_size) / f64::from(out_size);
    let filterscale = scale.max(1.0);
    let support = BICUBIC_SUPPORT * filterscale;
    let ksize = support.ceil() as usize * 2 + 1;
    let ss = 1.0 / filterscale;

    let mut bounds = Vec::with_capacity(out_size as usize);
    let mut weights = vec![0i32; out_size as usize * ksize];
    let mut k = vec![0f64; ksize];
    for xx in 0..out_size as usize {
        let center = (xx as f64 + 0.5) * scale;
        // C casts truncate toward zero
        let xmin = ((center - support + 0.5) as i64).max(0) as usize;
        let xmax = ((center + support + 0.5) as i64).min(i64::from(in_size)) as usize - xmin;
        let mut ww = 0.0;
        for (x, kx) in k.iter_mut().enumerate().take(xmax) {
            let w = bicubic((x as f64 + xmin as f64 - center + 0.5) * ss);
            *kx = w;
            ww += w;
        }
        let row = &mut weights[xx * ksize..(xx + 1) * ksize];
        for x in 0..xmax {
            let w = if ww != 0.0 { k[x] / ww } else { k[x] };
            let fixed = w * f64::from(1u32 << PRECISION_BITS);
            row[x] = if w < 0.0 { (-0.5 + fixed) as i32 } else { (0.5 + fixed) as i32 };
        }
        bounds.push((xmin, xmax));
    }
    Coeffs { ksize, bounds, weights }
}

#[inline]
fn clip8(v: i32) -> u8 {
    (v >> PRECISION_BITS).clamp(0, 255) as u8
}

/// Pillow-compatible bicubic resize of an 8-bit RGB image.
pub fn resize_bicubic(img: &RgbImage, new_w: u32, new_h: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    let mut current = img.clone();
    if new_w != w {
        let coeffs = precompute_coeffs(w, new_w);
        let mut out = RgbImage::new(new_w, h);
        for y in 0..h {
            for (xx, &(xmin, xmax)) in coeffs.bounds.iter().enumerate() {
                let k = &coeffs.weights[xx * coeffs.ksize..];
                let mut ss = [1i32 << (PRECISION_BITS - 1); 3];
                for x in 0..xmax {
                    let px = current.get_pixel((x + xmin) as u32, y);
                    for c in 0..3 {
                        ss[c] += i32::from(px[c]) * k[x];
                    }
                }
                out.put_pixel(xx as u32, y, image::Rgb(ss.map(clip8)));
            }
        }
        current = out;
    }
    if new_h != h {
        let coeffs = precompute_coeffs(h, new_h);
        let cw = current.width();
        let mut out = RgbImage::new(cw, new_h);
        for (yy, &(ymin, ymax)) in coeffs.bounds.iter().enumerate() {
            let k = &coeffs.weights[yy * coeffs.ksize..];
            for x in 0..cw {
                let mut ss = [1i32 << (PRECISION_BITS - 1); 3];
                for y in 0..ymax {
                    let px = current.get_pixel(x, (y + ymin) as u32);
                    for c in 0..3 {
                        ss[c] += i32::from(px[c]) * k[y];
                    }
                }
                out.put_pixel(x, yy as u32, image::Rgb(ss.map(clip8)));
            }
        }
        current = out;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig {
            image_size: 224,
            mean: [0.48145466, 0.4578275, 0.40821073],
            std: [0.26862954, 0.26130258, 0.27577711],
            interpolation: "bicubic".into(),
        }
    }

    fn png(img: &RgbImage) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        buf.into_inner()
    }

    #[test]
    fn resize_sizes() {
        assert_eq!(shortest_side_size(448, 336, 224), (298, 224));
        assert_eq!(shortest_side_size(250, 300, 224), (224, 268));
        assert_eq!(shortest_side_size(224, 500, 224), (224, 500));
        assert_eq!(shortest_side_size(160, 120, 224), (298, 224));
    }

    #[test]
    fn banker_rounding_for_crop_offset() {
        assert_eq!(round_half_even(37.5), 38.0);
        assert_eq!(round_half_even(36.5), 36.0);
        assert_eq!(round_half_even(22.0), 22.0);
        assert_eq!(round_half_even(0.5), 0.0);
    }

    #[test]
    fn constant_image_survives_resize() {
        let img = RgbImage::from_pixel(37, 91, image::Rgb([12, 200, 77]));
        let out = resize_bicubic(&img, 224, 551);
        assert!(out.pixels().all(|p| p.0 == [12, 200, 77]));
        let out = resize_bicubic(&img, 5, 9);
        assert!(out.pixels().all(|p| p.0 == [12, 200, 77]));
    }

    #[test]
    fn mean_pixels_standardize_to_zero() {
        // pick the 8-bit value closest to each channel mean, then shift the
        // mean constants onto that exact value
        let px = cfg().mean.map(|m| (m * 255.0).round() as u8);
        let mut c = cfg();
        c.mean = px.map(|v| f64::from(f32::from(v) / 255.0));
        let img = RgbImage::from_pixel(224, 224, image::Rgb(px));
        let t = preprocess_image(&png(&img), &c).unwrap();
        assert_eq!(t.shape(), [3, 224, 224]);
        assert!(t.data().iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn output_shape_is_fixed() {
        for (w, h) in [(448, 336), (336, 448), (224, 224), (50, 700), (1, 1), (1000, 3)] {
            let img = RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 9]));
            let t = preprocess_rgb(&img, &cfg()).unwrap();
            assert_eq!(t.shape(), [3, 224, 224], "{w}x{h}");
            assert_eq!(t.data().len(), 3 * 224 * 224);
            assert!(t.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn grayscale_is_replicated() {
        let gray = image::GrayImage::from_fn(240, 260, |x, y| image::Luma([((x * 3 + y) % 256) as u8]));
        let mut buf = Cursor::new(Vec::new());
        gray.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        let mut c = cfg();
        c.mean = [0.5; 3];
        c.std = [0.25; 3];
        let t = preprocess_image(buf.get_ref(), &c).unwrap();
        for (y, x) in [(0, 0), (100, 17), (223, 223)] {
            assert_eq!(t.at(0, y, x), t.at(1, y, x));
            assert_eq!(t.at(1, y, x), t.at(2, y, x));
        }
    }

    #[test]
    fn undecodable_bytes_fail() {
        assert!(matches!(
            preprocess_image(b"definitely not an image", &cfg()),
            Err(EncoderError::Decode(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.std[1] = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.interpolation = "nearest".into();
        assert!(c.validate().is_err());
    }
}
