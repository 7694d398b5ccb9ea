//! Synthetic cross-marker renders and a classical sub-pixel center detector.
//!
//! Pixel `(i, j)` covers the unit square centred on `(u, v) = (i, j)`.
//! The marker is a black square border with a centred black cross on a
//! white card, seen against a mid-grey background.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelPoint;

/// Physical side of the printed marker.
pub const MARKER_SIDE_CM: f64 = 3.0;
pub const BACKGROUND: f64 = 0.6;
const CARD: f64 = 1.0;
const INK: f64 = 0.0;
/// Black fraction of the marker square: border 28/64 plus cross 11/64.
const INK_FRACTION: f64 = 39.0 / 64.0;
pub const MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MarkerError {
    #[error("{0}")]
    Argument(String),
    #[error("{path}: {message}")]
    Pgm { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major, values in `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[j * self.width + i]
    }

    /// Writes a binary 8-bit PGM (P5).
    pub fn save_pgm(&self, path: &Path) -> Result<(), MarkerError> {
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| MarkerError::Argument("pixel buffer does not match dimensions".into()))?;
        let pgm = |e: image::ImageError| MarkerError::Pgm {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let file = std::fs::File::create(path).map_err(|e| pgm(e.into()))?;
        let encoder = image::codecs::pnm::PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary));
        buf.write_with_encoder(encoder).map_err(pgm)
    }

    pub fn load_pgm(path: &Path) -> Result<Self, MarkerError> {
        let err = |message: String| MarkerError::Pgm {
            path: path.display().to_string(),
            message,
        };
        let reader = image::ImageReader::open(path)
            .map_err(|e| err(e.to_string()))?
            .with_guessed_format()
            .map_err(|e| err(e.to_string()))?;
        if reader.format() != Some(image::ImageFormat::Pnm) {
            return Err(err("not a PNM file".into()));
        }
        let img = reader.decode().map_err(|e| err(e.to_string()))?.into_luma16();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        })
    }
}

/// Pose and appearance of one render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    pub width: usize,
    pub height: usize,
    pub center_u: f64,
    pub center_v: f64,
    /// Pixels per centimetre at the marker.
    pub scale: f64,
    pub rotation: f64,
    pub noise_sigma: f64,
    /// Box blur radius in pixels applied before noise (0 = none).
    pub blur_radius: usize,
    pub seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            center_u: 80.0,
            center_v: 60.0,
            scale: 10.0,
            rotation: 0.0,
            noise_sigma: 0.0,
            blur_radius: 0,
            seed: 0,
        }
    }
}

/// Intensity of the marker pattern at offset `(du, dv)` from its center.
fn pattern(du: f64, dv: f64, side: f64, cos: f64, sin: f64) -> f64 {
    // Marker-local coordinates; the pattern is symmetric so only |p|, |q| matter.
    let p = (cos * du + sin * dv).abs();
    let q = (-sin * du + cos * dv).abs();
    let half = 0.5 * side;
    if p > half || q > half {
        return BACKGROUND;
    }
    let bar = side / 8.0;
    if p >= half - bar || q >= half - bar || p <= 0.5 * bar || q <= 0.5 * bar {
        INK
    } else {
        CARD
    }
}

const SUB: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];

/// Area-averaged intensity of pixel `(u, v)` for a marker at `(cu, cv)`.
fn pixel_value(u: f64, v: f64, cu: f64, cv: f64, side: f64, cos: f64, sin: f64) -> f64 {
    let mut acc = 0.0;
    for dy in SUB {
        for dx in SUB {
            acc += pattern(u + dx - cu, v + dy - cv, side, cos, sin);
        }
    }
    acc / 16.0
}

pub fn render_marker(params: &RenderParams) -> Result<Image, MarkerError> {
    let side = MARKER_SIDE_CM * params.scale;
    if !(side >= 8.0) {
        return Err(MarkerError::Argument(format!("marker must be at least 8 px wide, got {side}")));
    }
    if params.width == 0 || params.height == 0 {
        return Err(MarkerError::Argument("image must be nonempty".into()));
    }
    if !(params.noise_sigma >= 0.0) {
        return Err(MarkerError::Argument("noise_sigma must be non-negative".into()));
    }
    let (sin, cos) = params.rotation.sin_cos();
    let mut img = Image::filled(params.width, params.height, BACKGROUND);
    // Only pixels near the marker need the pattern.
    let reach = side * std::f64::consts::FRAC_1_SQRT_2 + 1.0;
    let lo_u = ((params.center_u - reach).floor().max(0.0)) as usize;
    let lo_v = ((params.center_v - reach).floor().max(0.0)) as usize;
    let hi_u = (params.center_u + reach).ceil().min(params.width as f64 - 1.0);
    let hi_v = (params.center_v + reach).ceil().min(params.height as f64 - 1.0);
    if hi_u >= 0.0 && hi_v >= 0.0 {
        for j in lo_v..=hi_v as usize {
            for i in lo_u..=hi_u as usize {
                img.pixels[j * params.width + i] =
                    pixel_value(i as f64, j as f64, params.center_u, params.center_v, side, cos, sin);
            }
        }
    }
    if params.blur_radius > 0 {
        img = box_blur(&img, params.blur_radius);
    }
    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0, params.noise_sigma).expect("finite sigma");
        for p in &mut img.pixels {
            *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(img)
}

fn box_blur(img: &Image, r: usize) -> Image {
    let (w, h) = (img.width, img.height);
    let mut out = img.clone();
    for j in 0..h {
        for i in 0..w {
            let (mut acc, mut n) = (0.0, 0usize);
            for y in j.saturating_sub(r)..=(j + r).min(h - 1) {
                for x in i.saturating_sub(r)..=(i + r).min(w - 1) {
                    acc += img.get(x, y);
                    n += 1;
                }
            }
            out.pixels[j * w + i] = acc / n as f64;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub center: Option<PixelPoint<f64>>,
    pub confidence: f64,
    pub found: bool,
}

impl Detection {
    fn missing(confidence: f64) -> Self {
        Self {
            center: None,
            confidence,
            found: false,
        }
    }
}

/// Largest 8-connected component of dark pixels: (area, centroid).
fn largest_dark_component(img: &Image, threshold: f64) -> Option<(usize, f64, f64)> {
    let (w, h) = (img.width, img.height);
    let mut label = vec![false; w * h];
    let mut best: Option<(usize, f64, f64)> = None;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if label[start] || img.pixels[start] >= threshold {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let (mut n, mut su, mut sv) = (0usize, 0.0, 0.0);
        while let Some(idx) = stack.pop() {
            let (i, j) = (idx % w, idx / w);
            n += 1;
            su += i as f64;
            sv += j as f64;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (x, y) = (i as i64 + di, j as i64 + dj);
                    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                        continue;
                    }
                    let k = y as usize * w + x as usize;
                    if !label[k] && img.pixels[k] < threshold {
                        label[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        if best.is_none_or(|b| n > b.0) {
            best = Some((n, su / n as f64, sv / n as f64));
        }
    }
    best
}

/// Normalised cross-correlation between the image and an ideal render
/// over a square window around the hypothesised center.
fn ncc(img: &Image, cu: f64, cv: f64, side: f64, rotation: f64) -> f64 {
    let (sin, cos) = rotation.sin_cos();
    let reach = 0.5 * side * std::f64::consts::SQRT_2 + 2.0;
    let lo_u = (cu - reach).floor().max(0.0) as usize;
    let lo_v = (cv - reach).floor().max(0.0) as usize;
    let hi_u = ((cu + reach).ceil() as usize).min(img.width - 1);
    let hi_v = ((cv + reach).ceil() as usize).min(img.height - 1);
    let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for j in lo_v..=hi_v {
        for i in lo_u..=hi_u {
            let a = img.get(i, j);
            let b = pixel_value(i as f64, j as f64, cu, cv, side, cos, sin);
            n += 1.0;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let var_a = saa - sa * sa / n;
    let var_b = sbb - sb * sb / n;
    if var_a <= 1e-12 || var_b <= 1e-12 {
        return 0.0;
    }
    (sab - sa * sb / n) / (var_a * var_b).sqrt()
}

/// Vertex offset of the parabola through `(-h, a), (0, b), (h, c)`, clamped to `[-h, h]`.
fn parabola_peak(a: f64, b: f64, c: f64, h: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * h * (a - c) / denom).clamp(-h, h)
}

pub fn detect_center(img: &Image) -> Detection {
    if img.pixels.is_empty() {
        return Detection::missing(0.0);
    }
    let mut sorted = img.pixels.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = 0.5 * sorted[sorted.len() / 2];
    let Some((area, mut cu, mut cv)) = largest_dark_component(img, threshold) else {
        return Detection::missing(0.0);
    };
    if area < 16 {
        return Detection::missing(0.0);
    }
    let side = (area as f64 / INK_FRACTION).sqrt();

    // Rotation: the pattern repeats every quarter turn.
    let quarter = std::f64::consts::FRAC_PI_2;
    let mut rotation = 0.0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..45 {
        let r = -0.5 * quarter + k as f64 * quarter / 45.0;
        let s = ncc(img, cu, cv, side, r);
        if s > best {
            best = s;
            rotation = r;
        }
    }

    // Integer search then two halving refinements, one axis at a time.
    let mut step = 1.0;
    for _ in 0..3 {
        let mut improved = true;
        let mut guard = 0;
        while improved && guard < 8 {
            improved = false;
            guard += 1;
            for (du, dv) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let s = ncc(img, cu + du, cv + dv, side, rotation);
                if s > best {
                    best = s;
                    cu += du;
                    cv += dv;
                    improved = true;
                }
            }
        }
        for dr in [-0.02, 0.02] {
            let s = ncc(img, cu, cv, side, rotation + dr);
            if s > best {
                best = s;
                rotation += dr;
            }
        }
        step *= 0.5;
    }
    let h = 2.0 * step;
    let du = parabola_peak(ncc(img, cu - h, cv, side, rotation), best, ncc(img, cu + h, cv, side, rotation), h);
    let dv = parabola_peak(ncc(img, cu, cv - h, side, rotation), best, ncc(img, cu, cv + h, side, rotation), h);
    cu += du;
    cv += dv;

    let confidence = ncc(img, cu, cv, side, rotation).max(best).clamp(0.0, 1.0);
    if confidence < MIN_CONFIDENCE {
        return Detection::missing(confidence);
    }
    Detection {
        center: Some(PixelPoint::new(cu, cv)),
        confidence,
        found: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn grid_centred_render_is_point_symmetric() {
        let p = RenderParams {
            center_u: 80.0,
            center_v: 60.0,
            rotation: 0.3,
            ..RenderParams::default()
        };
        let img = render_marker(&p).unwrap();
        for j in 1..img.height {
            for i in 1..img.width {
                let (mi, mj) = (160 - i, 120 - j);
                assert!((img.get(i, j) - img.get(mi, mj)).abs() < 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn clipping_and_fully_outside() {
        let p = RenderParams {
            center_u: 2.0,
            ..RenderParams::default()
        };
        let img = render_marker(&p).unwrap();
        let dark = img.pixels.iter().filter(|&&x| x < 0.3).count();
        let full = render_marker(&RenderParams::default()).unwrap();
        let full_dark = full.pixels.iter().filter(|&&x| x < 0.3).count();
        assert!(dark > 0 && dark < full_dark);
        let gone = render_marker(&RenderParams {
            center_u: -100.0,
            ..RenderParams::default()
        })
        .unwrap();
        assert!(gone.pixels.iter().all(|&x| x == BACKGROUND));
        assert!(render_marker(&RenderParams {
            scale: 2.0,
            ..RenderParams::default()
        })
        .is_err());
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let p = RenderParams {
            noise_sigma: 0.05,
            seed: 9,
            ..RenderParams::default()
        };
        assert_eq!(render_marker(&p).unwrap(), render_marker(&p).unwrap());
    }

    #[test]
    fn detects_off_grid_center() {
        let p = RenderParams {
            center_u: 123.4,
            center_v: 87.6,
            width: 200,
            height: 150,
            noise_sigma: 0.02,
            seed: 3,
            ..RenderParams::default()
        };
        let d = detect_center(&render_marker(&p).unwrap());
        let c = d.center.unwrap();
        assert!(d.found && d.confidence > 0.9);
        assert!((c.u - 123.4).abs() < 1.0 && (c.v - 87.6).abs() < 1.0, "{c:?}");
    }

    #[test]
    fn blank_image_is_not_found() {
        let d = detect_center(&Image::filled(64, 48, BACKGROUND));
        assert!(!d.found && d.center.is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Image {
            width: 64,
            height: 48,
            pixels: (0..64 * 48).map(|_| rng.random::<f64>()).collect(),
        };
        assert!(!detect_center(&noise).found);
    }

    #[test]
    fn integer_shift_is_equivariant() {
        let base = RenderParams {
            center_u: 70.3,
            center_v: 55.8,
            rotation: 0.2,
            ..RenderParams::default()
        };
        let a = detect_center(&render_marker(&base).unwrap()).center.unwrap();
        let shifted = RenderParams {
            center_u: 77.3,
            center_v: 51.8,
            ..base
        };
        let b = detect_center(&render_marker(&shifted).unwrap()).center.unwrap();
        assert!((b.u - a.u - 7.0).abs() < 0.1 && (b.v - a.v + 4.0).abs() < 0.1);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = std::env::temp_dir().join(format!("gv-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.pgm");
        let img = render_marker(&RenderParams::default()).unwrap();
        img.save_pgm(&path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert!(raw.starts_with(b"P5"));
        let back = Image::load_pgm(&path).unwrap();
        assert_eq!((back.width, back.height), (img.width, img.height));
        for (a, b) in back.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
