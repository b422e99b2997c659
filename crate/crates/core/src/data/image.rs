use std::path::Path;

use image::imageops::{self, FilterType};
use image::{GrayImage, Rgb32FImage};
use ndarray::Array3;

use super::{DataError, InputSpec};

fn decode(path: &Path) -> Result<image::DynamicImage, DataError> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => DataError::Io {
            path: path.display().to_string(),
            source,
        },
        other => DataError::Decode {
            path: path.display().to_string(),
            message: other.to_string(),
        },
    })
}

/// Decodes any supported image as RGB with channels in [0, 1].
pub fn load_rgb(path: &Path) -> Result<Rgb32FImage, DataError> {
    Ok(decode(path)?.to_rgb32f())
}

/// Decodes a mask as 8-bit grayscale (not yet binarized).
pub fn load_mask(path: &Path) -> Result<GrayImage, DataError> {
    Ok(decode(path)?.to_luma8())
}

/// (3, H, W) tensor from an RGB image.
pub fn rgb_to_tensor(img: &Rgb32FImage) -> Array3<f32> {
    let (w, h) = img.dimensions();
    Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
        img.get_pixel(x as u32, y as u32)[c]
    })
}

/// (1, H, W) tensor with values > 127 mapped to 1, the rest to 0.
pub fn mask_to_tensor(mask: &GrayImage) -> Array3<f32> {
    let (w, h) = mask.dimensions();
    Array3::from_shape_fn((1, h as usize, w as usize), |(_, y, x)| {
        f32::from(mask.get_pixel(x as u32, y as u32)[0] > 127)
    })
}

fn resize_rgb(img: &Rgb32FImage, spec: &InputSpec) -> Rgb32FImage {
    if img.dimensions() == (spec.width, spec.height) {
        return img.clone();
    }
    imageops::resize(img, spec.width, spec.height, FilterType::Triangle)
}

fn resize_mask(mask: &GrayImage, spec: &InputSpec) -> GrayImage {
    if mask.dimensions() == (spec.width, spec.height) {
        return mask.clone();
    }
    imageops::resize(mask, spec.width, spec.height, FilterType::Nearest)
}

/// Loads and bilinearly resizes an image, leaving values in [0, 1].
pub(crate) fn load_scaled(path: &Path, spec: &InputSpec) -> Result<Array3<f32>, DataError> {
    Ok(rgb_to_tensor(&resize_rgb(&load_rgb(path)?, spec)))
}

/// Loads an image/mask pair at the network resolution, values in [0, 1].
pub(crate) fn load_scaled_pair(
    image: &Path,
    mask: &Path,
    spec: &InputSpec,
) -> Result<(Array3<f32>, Array3<f32>), DataError> {
    let img = load_rgb(image)?;
    let m = load_mask(mask)?;
    if img.dimensions() != m.dimensions() {
        return Err(DataError::SizeMismatch {
            image: image.display().to_string(),
            mask: mask.display().to_string(),
            image_size: img.dimensions(),
            mask_size: m.dimensions(),
        });
    }
    Ok((
        rgb_to_tensor(&resize_rgb(&img, spec)),
        mask_to_tensor(&resize_mask(&m, spec)),
    ))
}

/// Full inference preprocessing: resize then normalize.
pub fn preprocess(path: &Path, spec: &InputSpec) -> Result<Array3<f32>, DataError> {
    let mut x = load_scaled(path, spec)?;
    spec.normalize(&mut x);
    Ok(x)
}

/// As [`preprocess`], plus the nearest-neighbour resized binary mask.
pub fn preprocess_pair(
    image: &Path,
    mask: &Path,
    spec: &InputSpec,
) -> Result<(Array3<f32>, Array3<f32>), DataError> {
    let (mut x, m) = load_scaled_pair(image, mask, spec)?;
    spec.normalize(&mut x);
    Ok((x, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Luma, Rgb, RgbImage};

    #[test]
    fn downscale_and_constant_invariance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        RgbImage::from_pixel(128, 96, Rgb([51, 102, 204])).save(&p).unwrap();
        let x = preprocess(&p, &InputSpec::toy(64, 48)).unwrap();
        assert_eq!(x.dim(), (3, 48, 64));
        for (c, want) in [0.2f32, 0.4, 0.8].iter().enumerate() {
            assert!(x.index_axis(ndarray::Axis(0), c).iter().all(|v| (v - want).abs() < 1e-6));
        }
    }

    #[test]
    fn mask_stays_binary_and_sizes_checked() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("i.png");
        let mask = dir.path().join("m.png");
        RgbImage::new(40, 30).save(&img).unwrap();
        GrayImage::from_fn(40, 30, |x, y| Luma([if (x + y) % 3 == 0 { 200 } else { 20 }]))
            .save(&mask)
            .unwrap();
        let (_, m) = preprocess_pair(&img, &mask, &InputSpec::toy(17, 13)).unwrap();
        assert_eq!(m.dim(), (1, 13, 17));
        assert!(m.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(m.iter().any(|&v| v == 1.0));

        GrayImage::new(41, 30).save(&mask).unwrap();
        let e = preprocess_pair(&img, &mask, &InputSpec::toy(17, 13)).unwrap_err();
        assert!(e.to_string().contains("m.png"), "{e}");
    }

    #[test]
    fn undecodable_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not an image").unwrap();
        let e = preprocess(&p, &InputSpec::toy(8, 8)).unwrap_err();
        assert!(e.to_string().contains("bad.png"));
    }
}
