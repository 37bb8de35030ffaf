//! Camera image metrics and the template-matching proxy detector.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Light;

/// RGB image with channel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
    pub exposure: Light,
}

/// Rec.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>, exposure: Light) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if pixels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            pixels,
            exposure,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
            exposure: Light::Day,
        }
    }

    pub fn from_gray(width: usize, height: usize, gray: &[f64]) -> Result<Self> {
        Self::new(width, height, gray.iter().map(|&g| [g, g, g]).collect(), Light::Day)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn luminance(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::domain("crop outside image"));
        }
        let mut px = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            px.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Image {
            width: w,
            height: h,
            pixels: px,
            exposure: self.exposure,
        })
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            out.pixels[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }

    pub fn flip_vertical(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            let src = self.height - 1 - y;
            out.pixels[y * self.width..(y + 1) * self.width]
                .copy_from_slice(&self.pixels[src * self.width..(src + 1) * self.width]);
        }
        out
    }

    /// Every channel multiplied by `c`, clamped to `[0, 1]`.
    pub fn scaled(&self, c: f64) -> Image {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            pixels: self
                .pixels
                .iter()
                .map(|p| [f(p[0]).clamp(0.0, 1.0), f(p[1]).clamp(0.0, 1.0), f(p[2]).clamp(0.0, 1.0)])
                .collect(),
            ..self.clone()
        }
    }

    /// Separable Gaussian blur with kernel half-width `radius`, edges clamped.
    pub fn gaussian_blur(&self, sigma: f64, radius: usize) -> Image {
        let k: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = k.iter().sum();
        let k: Vec<f64> = k.iter().map(|v| v / s).collect();
        let (w, h) = (self.width, self.height);
        let r = radius as isize;
        let mut tmp = vec![[0.0; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (i, kv) in k.iter().enumerate() {
                    let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                    let p = self.pixels[y * w + xx];
                    for c in 0..3 {
                        acc[c] += kv * p[c];
                    }
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![[0.0; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (i, kv) in k.iter().enumerate() {
                    let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                    let p = tmp[yy * w + x];
                    for c in 0..3 {
                        acc[c] += kv * p[c];
                    }
                }
                out[y * w + x] = [acc[0].clamp(0.0, 1.0), acc[1].clamp(0.0, 1.0), acc[2].clamp(0.0, 1.0)];
            }
        }
        Image {
            pixels: out,
            ..self.clone()
        }
    }

    /// Binary PPM (P6), 8 bits per channel.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend(p.iter().map(|v| quantize(*v)));
        }
        out
    }

    /// Binary PGM (P5) of the Rec.601 luminance.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.luminance().iter().map(|v| quantize(*v)));
        out
    }

    /// Reads P6 (colour) or P5 (grey, replicated to three channels).
    pub fn from_pnm(bytes: &[u8], origin: &Path) -> Result<Image> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format(origin, "truncated header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        let channels = match fields[0].as_str() {
            "P6" => 3,
            "P5" => 1,
            m => return Err(Error::format(origin, format!("unsupported magic '{m}'"))),
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(origin, format!("bad header field '{s}'")));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(Error::format(origin, "only 8-bit images are supported"));
        }
        let need = w * h * channels;
        if bytes.len() < pos + need {
            return Err(Error::format(origin, format!("expected {need} pixel bytes, found {}", bytes.len().saturating_sub(pos))));
        }
        let data = &bytes[pos..pos + need];
        let pixels = if channels == 3 {
            data.chunks_exact(3)
                .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
                .collect()
        } else {
            data.iter().map(|&g| [g as f64 / 255.0; 3]).collect()
        };
        Image::new(w, h, pixels, Light::Day).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_ppm())
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pgm())
    }

    pub fn load(path: &Path) -> Result<Image> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Image::from_pnm(&bytes, path)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_interior(img: &Image) -> Result<()> {
    if img.width < 3 || img.height < 3 {
        return Err(Error::domain(format!(
            "image {}x{} has no interior for the Laplacian",
            img.width, img.height
        )));
    }
    Ok(())
}

/// Variance of the 4-neighbour Laplacian of the luminance over the valid
/// (interior) region.
pub fn sharpness(img: &Image) -> Result<f64> {
    check_interior(img)?;
    let l = img.luminance();
    let w = img.width;
    let mut resp = Vec::with_capacity((img.width - 2) * (img.height - 2));
    for y in 1..img.height - 1 {
        for x in 1..w - 1 {
            let c = l[y * w + x];
            resp.push(l[(y - 1) * w + x] + l[(y + 1) * w + x] + l[y * w + x - 1] + l[y * w + x + 1] - 4.0 * c);
        }
    }
    Ok(crate::stats::population_variance(&resp).unwrap_or(0.0))
}

/// Mean HSV value, `V = max(R, G, B)`.
pub fn brightness(img: &Image) -> f64 {
    if img.pixels.is_empty() {
        return 0.0;
    }
    img.pixels.iter().map(|p| p[0].max(p[1]).max(p[2])).sum::<f64>() / img.pixels.len() as f64
}

/// Standard deviation of the luminance.
pub fn rms_contrast(img: &Image) -> f64 {
    crate::stats::population_variance(&img.luminance()).map_or(0.0, f64::sqrt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraFeatureVector {
    pub sharpness: f64,
    pub brightness: f64,
    pub contrast: f64,
}

impl CameraFeatureVector {
    pub const NAMES: [&'static str; 3] = ["brightness", "contrast", "sharpness"];

    pub fn values(&self) -> Vec<Option<f64>> {
        vec![Some(self.brightness), Some(self.contrast), Some(self.sharpness)]
    }
}

pub fn camera_features(img: &Image) -> Result<CameraFeatureVector> {
    Ok(CameraFeatureVector {
        sharpness: sharpness(img)?,
        brightness: brightness(img),
        contrast: rms_contrast(img),
    })
}

/// Axis-aligned pixel box `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Box2D {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

/// Intersection over union; 0 when both boxes are degenerate.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyDetection {
    pub confidence: f64,
    pub detected_box: Box2D,
    pub iou: f64,
}

fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (fr, fc) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        fr.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        fc.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Normalised cross-correlation of the template luminance at every valid
/// offset, row-major over `(W - w + 1) × (H - h + 1)`. Windows with zero
/// variance score 0.
pub fn ncc_map(img: &Image, template: &Image) -> Result<Vec<f64>> {
    let (iw, ih, tw, th) = (img.width, img.height, template.width, template.height);
    if tw > iw || th > ih || tw == 0 || th == 0 {
        return Err(Error::domain("template must fit inside the image"));
    }
    let t = template.luminance();
    let n = (tw * th) as f64;
    let t_mean = t.iter().sum::<f64>() / n;
    let t0: Vec<f64> = t.iter().map(|v| v - t_mean).collect();
    let t_norm = t0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if t_norm <= 1e-12 {
        return Err(Error::domain("template has zero variance"));
    }
    let l = img.luminance();

    let (fw, fh) = (iw.next_power_of_two(), ih.next_power_of_two());
    let mut a = vec![Complex64::new(0.0, 0.0); fw * fh];
    let mut b = vec![Complex64::new(0.0, 0.0); fw * fh];
    for y in 0..ih {
        for x in 0..iw {
            a[y * fw + x].re = l[y * iw + x];
        }
    }
    for y in 0..th {
        for x in 0..tw {
            b[y * fw + x].re = t0[y * tw + x];
        }
    }
    fft2(&mut a, fw, fh, false);
    fft2(&mut b, fw, fh, false);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q.conj();
    }
    fft2(&mut a, fw, fh, true);
    let scale = 1.0 / (fw * fh) as f64;

    // Integral images of luminance and its square.
    let stride = iw + 1;
    let mut s1 = vec![0.0; stride * (ih + 1)];
    let mut s2 = vec![0.0; stride * (ih + 1)];
    for y in 0..ih {
        for x in 0..iw {
            let v = l[y * iw + x];
            let i = (y + 1) * stride + x + 1;
            s1[i] = v + s1[i - 1] + s1[i - stride] - s1[i - stride - 1];
            s2[i] = v * v + s2[i - 1] + s2[i - stride] - s2[i - stride - 1];
        }
    }
    let rect = |s: &[f64], x: usize, y: usize| {
        s[(y + th) * stride + x + tw] - s[y * stride + x + tw] - s[(y + th) * stride + x] + s[y * stride + x]
    };

    let (ow, oh) = (iw - tw + 1, ih - th + 1);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let sum = rect(&s1, x, y);
            let sq = rect(&s2, x, y);
            let var = (sq - sum * sum / n).max(0.0);
            let den = var.sqrt() * t_norm;
            let num = a[y * fw + x].re * scale;
            out.push(if den > 1e-9 { (num / den).clamp(-1.0, 1.0) } else { 0.0 });
        }
    }
    Ok(out)
}

/// Template-matching stand-in for an object detector: confidence is the
/// best NCC clamped to `[0, 1]`, the detected box is the template footprint
/// at that offset (first maximum in row-major order).
pub fn proxy_detect(img: &Image, template: &Image, truth: &Box2D) -> Result<ProxyDetection> {
    let scores = ncc_map(img, template)?;
    let ow = img.width - template.width + 1;
    let (best, score) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let (x, y) = ((best % ow) as f64, (best / ow) as f64);
    let detected_box = Box2D {
        x0: x,
        y0: y,
        x1: x + template.width as f64,
        y1: y + template.height as f64,
    };
    Ok(ProxyDetection {
        confidence: score.clamp(0.0, 1.0),
        detected_box,
        iou: iou(&detected_box, truth),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let g: Vec<f64> = (0..w * h).map(|i| f(i % w, i / w)).collect();
        Image::from_gray(w, h, &g).unwrap()
    }

    fn textured(w: usize, h: usize) -> Image {
        gray(w, h, |x, y| {
            let v = ((x * 7 + y * 13) % 17) as f64 / 16.0;
            0.5 * v + 0.25 * ((x as f64 * 0.3).sin() * (y as f64 * 0.2).cos() + 1.0)
        })
    }

    #[test]
    fn metric_identities() {
        let c = Image::filled(8, 8, [0.4; 3]);
        assert!(sharpness(&c).unwrap() < 1e-24);
        assert!(rms_contrast(&c) < 1e-12);
        let ramp = gray(16, 8, |x, _| x as f64 / 16.0);
        assert!(sharpness(&ramp).unwrap().abs() < 1e-12);
        let half = gray(8, 8, |x, _| if x < 4 { 0.0 } else { 1.0 });
        assert!((rms_contrast(&half) - 0.5).abs() < 1e-12);
        assert_eq!(brightness(&Image::filled(4, 4, [1.0, 0.0, 0.0])), 1.0);
        assert_eq!(brightness(&Image::filled(4, 4, [1.0; 3])), 1.0);
        assert!(sharpness(&Image::filled(2, 8, [0.0; 3])).is_err());
    }

    #[test]
    fn blur_reduces_sharpness() {
        let img = textured(40, 30);
        assert!(sharpness(&img.gaussian_blur(2.0, 2)).unwrap() < sharpness(&img).unwrap());
    }

    #[test]
    fn self_match() {
        let img = textured(64, 48);
        let t = img.crop(20, 10, 16, 12).unwrap();
        let truth = Box2D { x0: 20.0, y0: 10.0, x1: 36.0, y1: 22.0 };
        let d = proxy_detect(&img, &t, &truth).unwrap();
        assert!((d.confidence - 1.0).abs() < 1e-9);
        assert_eq!(d.detected_box, truth);
        assert!((d.iou - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ncc_matches_direct_evaluation() {
        let img = textured(20, 15);
        let t = gray(5, 4, |x, y| ((x * 3 + y) % 4) as f64 / 3.0);
        let fast = ncc_map(&img, &t).unwrap();
        let (l, tl) = (img.luminance(), t.luminance());
        let tm = tl.iter().sum::<f64>() / 20.0;
        for oy in 0..12 {
            for ox in 0..16 {
                let win: Vec<f64> = (0..20).map(|i| l[(oy + i / 5) * 20 + ox + i % 5]).collect();
                let wm = win.iter().sum::<f64>() / 20.0;
                let num: f64 = (0..20).map(|i| (win[i] - wm) * (tl[i] - tm)).sum();
                let den = (win.iter().map(|v| (v - wm).powi(2)).sum::<f64>()
                    * tl.iter().map(|v| (v - tm).powi(2)).sum::<f64>())
                .sqrt();
                assert!((fast[oy * 16 + ox] - num / den).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_template_is_rejected() {
        let img = textured(20, 20);
        assert!(ncc_map(&img, &Image::filled(4, 4, [0.5; 3])).is_err());
    }

    #[test]
    fn iou_basics() {
        let a = Box2D { x0: 0.0, y0: 0.0, x1: 2.0, y1: 2.0 };
        let b = Box2D { x0: 1.0, y0: 0.0, x1: 3.0, y1: 2.0 };
        let c = Box2D { x0: 5.0, y0: 5.0, x1: 6.0, y1: 6.0 };
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &b), iou(&b, &a));
        assert_eq!(iou(&a, &c), 0.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn pnm_roundtrip() {
        let img = gray(5, 3, |x, y| ((x + y) * 40) as f64 / 255.0);
        let back = Image::from_pnm(&img.to_ppm(), Path::new("a.ppm")).unwrap();
        assert_eq!(back, img);
        let g = Image::from_pnm(&img.to_pgm(), Path::new("a.pgm")).unwrap();
        assert_eq!(g.width, 5);
        let err = Image::from_pnm(&img.to_ppm()[..20], Path::new("frame_2.ppm")).unwrap_err();
        assert!(err.to_string().contains("frame_2.ppm"));
    }
}
