//! Two-view stochastic augmentation pipeline, pinned for reproducibility:
//! random resized crop (bilinear), horizontal flip, color jitter in a fixed
//! brightness-contrast-saturation-hue order, grayscale conversion, and
//! separable Gaussian blur with symmetric-reflection padding. All outputs
//! stay in [0,1] and are deterministic given the RNG state.

use super::{Image, ImageRecord};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct AugmentationConfig {
    /// Crop area as a fraction of the source area.
    pub crop_scale_range: (f64, f64),
    /// Crop aspect ratio (w/h), sampled log-uniformly.
    pub crop_aspect_range: (f64, f64),
    pub flip_prob: f64,
    /// Probability of applying the whole jitter block.
    pub jitter_apply_prob: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue rotation as a fraction of the full hue circle.
    pub hue: f64,
    pub grayscale_prob: f64,
    /// Blur probabilities for the two views; equal by default, set apart
    /// for asymmetric (BYOL-style) pipelines.
    pub blur_prob_a: f64,
    pub blur_prob_b: f64,
    pub blur_sigma_range: (f64, f64),
    /// Output (height, width) of every augmented view.
    pub output_size: (usize, usize),
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            crop_scale_range: (0.2, 1.0),
            crop_aspect_range: (0.75, 4.0 / 3.0),
            flip_prob: 0.5,
            jitter_apply_prob: 0.8,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            grayscale_prob: 0.2,
            blur_prob_a: 0.5,
            blur_prob_b: 0.5,
            blur_sigma_range: (0.1, 2.0),
            output_size: (32, 32),
        }
    }
}

impl AugmentationConfig {
    /// Pipeline that reproduces the (resized) input exactly: full-image
    /// crop, no flips, no jitter, no blur.
    pub fn identity(output_size: (usize, usize)) -> Self {
        AugmentationConfig {
            crop_scale_range: (1.0, 1.0),
            crop_aspect_range: (1.0, 1.0),
            flip_prob: 0.0,
            jitter_apply_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            grayscale_prob: 0.0,
            blur_prob_a: 0.0,
            blur_prob_b: 0.0,
            blur_sigma_range: (0.1, 2.0),
            output_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("flip_prob", self.flip_prob),
            ("jitter_apply_prob", self.jitter_apply_prob),
            ("grayscale_prob", self.grayscale_prob),
            ("blur_prob_a", self.blur_prob_a),
            ("blur_prob_b", self.blur_prob_b),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let (lo, hi) = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "crop_scale_range ({lo}, {hi}) must satisfy 0 < min <= max <= 1"
            )));
        }
        let (alo, ahi) = self.crop_aspect_range;
        if !(alo > 0.0 && alo <= ahi) {
            return Err(Error::Config(format!(
                "crop_aspect_range ({alo}, {ahi}) invalid"
            )));
        }
        let (slo, shi) = self.blur_sigma_range;
        if !(slo > 0.0 && slo <= shi) {
            return Err(Error::Config(format!(
                "blur_sigma_range ({slo}, {shi}) invalid"
            )));
        }
        if self.output_size.0 == 0 || self.output_size.1 == 0 {
            return Err(Error::Config("output_size must be positive".into()));
        }
        for (name, s) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if s < 0.0 {
                return Err(Error::Config(format!("{name} strength must be >= 0")));
            }
        }
        if !(0.0..=0.5).contains(&self.hue) {
            return Err(Error::Config("hue strength must be in [0, 0.5]".into()));
        }
        Ok(())
    }
}

/// Linear-evaluation transform phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPhase {
    /// Random crop + resize + horizontal flip.
    Train,
    /// Deterministic resize then center crop; ignores the RNG.
    Test,
}

/// Two independently sampled augmentation chains applied to one record,
/// flattened to the model input layout. View A draws first, then view B,
/// from the same stream.
pub fn two_views(
    record: &ImageRecord,
    config: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = augment_view(&record.pixels, config, config.blur_prob_a, rng)?;
    let b = augment_view(&record.pixels, config, config.blur_prob_b, rng)?;
    Ok((a.flatten(), b.flatten()))
}

/// Linear-evaluation transform: stochastic crop/flip in the train phase,
/// deterministic resize + center crop in the test phase. Both phases
/// produce the configured output shape.
pub fn eval_transform(
    record: &ImageRecord,
    config: &AugmentationConfig,
    phase: EvalPhase,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    config.validate()?;
    let (oh, ow) = config.output_size;
    match phase {
        EvalPhase::Train => {
            let mut out = random_resized_crop(&record.pixels, config, rng);
            if rng.gen::<f64>() < config.flip_prob {
                out = hflip(&out);
            }
            Ok(out.flatten())
        }
        EvalPhase::Test => {
            // Resize to 9/8 of the target, then cut the center.
            let rh = ((oh as f64) * 1.125).round() as usize;
            let rw = ((ow as f64) * 1.125).round() as usize;
            let resized = resize_bilinear(&record.pixels, rh.max(oh), rw.max(ow));
            Ok(center_crop(&resized, oh, ow).flatten())
        }
    }
}

/// One augmentation chain: crop+resize, flip, jitter, grayscale, blur.
fn augment_view(
    img: &Image,
    config: &AugmentationConfig,
    blur_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Image> {
    config.validate()?;
    let mut out = random_resized_crop(img, config, rng);
    if rng.gen::<f64>() < config.flip_prob {
        out = hflip(&out);
    }
    if rng.gen::<f64>() < config.jitter_apply_prob {
        out = color_jitter(&out, config, rng);
    }
    if rng.gen::<f64>() < config.grayscale_prob {
        out = to_grayscale(&out);
    }
    if rng.gen::<f64>() < blur_prob {
        let sigma = rng.gen_range(config.blur_sigma_range.0..=config.blur_sigma_range.1);
        out = gaussian_blur(&out, sigma);
    }
    Ok(out)
}

/// Sample a crop rectangle by target area and log-uniform aspect ratio,
/// falling back to the full image after ten failed draws, then resize to
/// the output size.
fn random_resized_crop(img: &Image, config: &AugmentationConfig, rng: &mut ChaCha8Rng) -> Image {
    let (h, w) = (img.height(), img.width());
    let area = (h * w) as f64;
    let (smin, smax) = config.crop_scale_range;
    let (amin, amax) = config.crop_aspect_range;
    let mut rect = None;
    for _ in 0..10 {
        let target = area * rng.gen_range(smin..=smax);
        let aspect = rng.gen_range(amin.ln()..=amax.ln()).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let top = rng.gen_range(0..=h - ch);
            let left = rng.gen_range(0..=w - cw);
            rect = Some((top, left, ch, cw));
            break;
        }
    }
    let (top, left, ch, cw) = rect.unwrap_or((0, 0, h, w));
    let cropped = crop_region(img, top, left, ch, cw);
    resize_bilinear(&cropped, config.output_size.0, config.output_size.1)
}

fn crop_region(img: &Image, top: usize, left: usize, h: usize, w: usize) -> Image {
    let mut out = Image::zeros(h, w, img.channels());
    for c in 0..img.channels() {
        for y in 0..h {
            for x in 0..w {
                out.set(c, y, x, img.get(c, top + y, left + x));
            }
        }
    }
    out
}

/// Bilinear resize with half-pixel centers (`src = (dst + 0.5) * scale - 0.5`).
/// Resizing to the same shape is an exact identity.
fn resize_bilinear(img: &Image, oh: usize, ow: usize) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = Image::zeros(oh, ow, img.channels());
    let sy_scale = h as f64 / oh as f64;
    let sx_scale = w as f64 / ow as f64;
    for c in 0..img.channels() {
        for y in 0..oh {
            let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for x in 0..ow {
                let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let v = (1.0 - fy) * (1.0 - fx) * img.get(c, y0, x0)
                    + (1.0 - fy) * fx * img.get(c, y0, x1)
                    + fy * (1.0 - fx) * img.get(c, y1, x0)
                    + fy * fx * img.get(c, y1, x1);
                out.set(c, y, x, v);
            }
        }
    }
    out
}

fn hflip(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = Image::zeros(h, w, img.channels());
    for c in 0..img.channels() {
        for y in 0..h {
            for x in 0..w {
                out.set(c, y, x, img.get(c, y, w - 1 - x));
            }
        }
    }
    out
}

/// Center crop to `oh x ow`; on an image already that size this is the
/// identity.
pub fn center_crop(img: &Image, oh: usize, ow: usize) -> Image {
    let top = (img.height() - oh) / 2;
    let left = (img.width() - ow) / 2;
    crop_region(img, top, left, oh, ow)
}

fn jitter_factor(strength: f64, rng: &mut ChaCha8Rng) -> f64 {
    let lo = (1.0 - strength).max(0.0);
    let hi = 1.0 + strength;
    rng.gen_range(lo..=hi)
}

/// Brightness, contrast, saturation, hue, in that pinned order. All four
/// factors are drawn up front so channel count never changes the draw
/// sequence; color-only steps are skipped on non-RGB images.
fn color_jitter(img: &Image, config: &AugmentationConfig, rng: &mut ChaCha8Rng) -> Image {
    let fb = jitter_factor(config.brightness, rng);
    let fc = jitter_factor(config.contrast, rng);
    let fs = jitter_factor(config.saturation, rng);
    let dh = config.hue * rng.gen_range(-1.0..=1.0);

    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v * fb).clamp(0.0, 1.0);
    }
    // Contrast blends toward the mean luminance.
    let (h, w) = (out.height(), out.width());
    let mut mean = 0.0;
    for y in 0..h {
        for x in 0..w {
            mean += out.luminance(y, x);
        }
    }
    mean /= (h * w) as f64;
    for v in out.data_mut() {
        *v = (fc * *v + (1.0 - fc) * mean).clamp(0.0, 1.0);
    }
    if out.channels() == 3 {
        // Saturation blends toward per-pixel luminance.
        for y in 0..h {
            for x in 0..w {
                let l = out.luminance(y, x);
                for c in 0..3 {
                    let v = fs * out.get(c, y, x) + (1.0 - fs) * l;
                    out.set(c, y, x, v.clamp(0.0, 1.0));
                }
            }
        }
        if dh != 0.0 {
            for y in 0..h {
                for x in 0..w {
                    let (hh, ss, vv) =
                        rgb_to_hsv(out.get(0, y, x), out.get(1, y, x), out.get(2, y, x));
                    let (r, g, b) = hsv_to_rgb((hh + dh).rem_euclid(1.0), ss, vv);
                    out.set(0, y, x, r.clamp(0.0, 1.0));
                    out.set(1, y, x, g.clamp(0.0, 1.0));
                    out.set(2, y, x, b.clamp(0.0, 1.0));
                }
            }
        }
    }
    out
}

fn to_grayscale(img: &Image) -> Image {
    if img.channels() != 3 {
        return img.clone();
    }
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let l = img.luminance(y, x);
            for c in 0..3 {
                out.set(c, y, x, l);
            }
        }
    }
    out
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Index reflection (symmetric, edge-inclusive) for blur padding.
fn reflect(idx: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with a normalized kernel of radius
/// `ceil(2 sigma)` and symmetric-reflection padding; preserves the mean
/// pixel value up to boundary reflection.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    assert!(sigma > 0.0);
    let radius = (2.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut total = 0.0;
    for i in -radius..=radius {
        let w = (-((i * i) as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(w);
        total += w;
    }
    for w in &mut kernel {
        *w /= total;
    }

    let (h, w) = (img.height(), img.width());
    // Horizontal pass then vertical pass.
    let mut tmp = Image::zeros(h, w, img.channels());
    for c in 0..img.channels() {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, kw) in kernel.iter().enumerate() {
                    let sx = reflect(x as i64 + ki as i64 - radius, w);
                    acc += kw * img.get(c, y, sx);
                }
                tmp.set(c, y, x, acc);
            }
        }
    }
    let mut out = Image::zeros(h, w, img.channels());
    for c in 0..img.channels() {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, kw) in kernel.iter().enumerate() {
                    let sy = reflect(y as i64 + ki as i64 - radius, h);
                    acc += kw * tmp.get(c, sy, x);
                }
                out.set(c, y, x, acc);
            }
        }
    }
    out
}
