//! Desk-scale synthetic datasets written in the regular manifest formats.
//!
//! Classification images are coloured stripe textures: each finding gets
//! its own hue, stripe orientation and period, so classes are separable
//! from colour alone and again from texture alone. Segmentation images are
//! a noisy mottled background with one elliptical "polyp" whose exact
//! footprint is the mask.

use std::f32::consts::PI;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{write_classification_manifest, write_segmentation_manifest, DataError, MaskPair};
use crate::hierarchy::LabelHierarchy;
use crate::rng::{rng_for, tag};

pub const DEFAULT_WIDTH: u32 = 80;
pub const DEFAULT_HEIGHT: u32 = 64;

/// What a generator wrote.
#[derive(Clone, Debug)]
pub struct SyntheticSummary {
    pub manifest: PathBuf,
    pub hierarchy: Option<PathBuf>,
    pub n: usize,
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn save_png<P, C>(img: &image::ImageBuffer<P, C>, path: &Path) -> Result<(), DataError>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DataError::Encode {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

/// One textured image for `class` out of `n_classes`.
pub fn class_texture(class: usize, n_classes: usize, width: u32, height: u32, rng: &mut impl Rng) -> RgbImage {
    let hue = class as f32 / n_classes as f32 + rng.random_range(-0.01..0.01);
    let sat = if class.is_multiple_of(2) { 0.85 } else { 0.55 };
    let base = hsv(hue, sat, 0.75);
    let theta = (class % 4) as f32 * PI / 4.0;
    let period = 4.0 + (class % 3) as f32 * 3.0;
    let phase = rng.random_range(0.0..2.0 * PI);
    let (dx, dy) = (theta.cos(), theta.sin());
    let noise = Normal::new(0.0f32, 0.03).expect("finite std");
    RgbImage::from_fn(width, height, |x, y| {
        let t = (x as f32 * dx + y as f32 * dy) * 2.0 * PI / period + phase;
        let stripe = 1.0 + 0.25 * t.sin();
        Rgb(std::array::from_fn(|c| to_u8(base[c] * stripe + noise.sample(rng))))
    })
}

/// Blob image and its exact binary mask (255 inside the ellipse).
pub fn blob_pair(width: u32, height: u32, rng: &mut impl Rng) -> (RgbImage, GrayImage) {
    let (w, h) = (width as f32, height as f32);
    let m = w.min(h);
    let (rx, ry) = (rng.random_range(0.14..0.28) * m, rng.random_range(0.14..0.28) * m);
    let cx = rng.random_range(rx + 2.0..w - rx - 2.0);
    let cy = rng.random_range(ry + 2.0..h - ry - 2.0);
    let rot = rng.random_range(0.0..PI);
    let (s, c) = rot.sin_cos();
    let inside = |x: f32, y: f32| {
        let (u, v) = (x - cx, y - cy);
        let (a, b) = (c * u + s * v, -s * u + c * v);
        (a / rx).powi(2) + (b / ry).powi(2) <= 1.0
    };
    // mucosa: pinkish with slow mottling; polyp: brighter, warmer, shaded
    let bg = hsv(rng.random_range(0.95..1.05), 0.45, 0.55);
    let fg = hsv(rng.random_range(0.04..0.10), 0.75, 0.95);
    let (fx, fy, fp) = (
        rng.random_range(0.05..0.15),
        rng.random_range(0.05..0.15),
        rng.random_range(0.0..2.0 * PI),
    );
    let noise = Normal::new(0.0f32, 0.04).expect("finite std");
    let mut img = RgbImage::new(width, height);
    let mut mask = GrayImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f32, y as f32);
            let (colour, shade) = if inside(xf, yf) {
                mask.put_pixel(x, y, Luma([255]));
                let d = ((xf - cx) / rx).powi(2) + ((yf - cy) / ry).powi(2);
                (fg, 1.0 - 0.25 * d)
            } else {
                (bg, 1.0 + 0.15 * (fx * xf + fp).sin() * (fy * yf).cos())
            };
            img.put_pixel(
                x,
                y,
                Rgb(std::array::from_fn(|ch| to_u8(colour[ch] * shade + noise.sample(rng)))),
            );
        }
    }
    (img, mask)
}

/// Per-class counts for `n` images over `n_classes`: as even as possible,
/// earlier classes take the remainder.
pub fn class_counts(n: usize, n_classes: usize) -> Vec<usize> {
    (0..n_classes)
        .map(|c| n / n_classes + usize::from(c < n % n_classes))
        .collect()
}

/// Writes `images/`, `manifest.csv` and `hierarchy.json` under `out`.
pub fn make_classification(
    out: &Path,
    n: usize,
    seed: u64,
    hierarchy: &LabelHierarchy,
    width: u32,
    height: u32,
) -> Result<SyntheticSummary, DataError> {
    let images = out.join("images");
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    let n_classes = hierarchy.n_find();
    let mut rows = Vec::with_capacity(n);
    for (class, count) in class_counts(n, n_classes).into_iter().enumerate() {
        let name = &hierarchy.findings()[class];
        for j in 0..count {
            let mut rng: ChaCha8Rng = rng_for(seed, &[tag::SYNTHETIC, class as u64, j as u64]);
            let img = class_texture(class, n_classes, width, height, &mut rng);
            let rel = format!("images/{name}_{j:04}.png");
            save_png(&img, &out.join(&rel))?;
            rows.push((rel, name.clone()));
        }
    }
    let manifest = out.join("manifest.csv");
    write_classification_manifest(&manifest, &rows)?;
    let hpath = out.join("hierarchy.json");
    let json = serde_json::to_string_pretty(&hierarchy.document()).expect("hierarchy serializes");
    std::fs::write(&hpath, json + "\n").map_err(io_err(&hpath))?;
    Ok(SyntheticSummary {
        manifest,
        hierarchy: Some(hpath),
        n: rows.len(),
    })
}

/// Writes `images/`, `masks/` and `manifest.csv` under `out`.
pub fn make_segmentation(out: &Path, n: usize, seed: u64, width: u32, height: u32) -> Result<SyntheticSummary, DataError> {
    let images = out.join("images");
    let masks = out.join("masks");
    for d in [&images, &masks] {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng: ChaCha8Rng = rng_for(seed, &[tag::SYNTHETIC, i as u64]);
        let (img, mask) = blob_pair(width, height, &mut rng);
        let row = MaskPair {
            image_path: format!("images/blob_{i:04}.png").into(),
            mask_path: format!("masks/blob_{i:04}.png").into(),
        };
        save_png(&img, &out.join(&row.image_path))?;
        save_png(&mask, &out.join(&row.mask_path))?;
        rows.push(row);
    }
    let manifest = out.join("manifest.csv");
    write_segmentation_manifest(&manifest, &rows)?;
    Ok(SyntheticSummary {
        manifest,
        hierarchy: None,
        n,
    })
}
