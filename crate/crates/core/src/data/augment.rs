use ndarray::{Array3, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Augmentation knobs. Each transform fires independently with
/// probability one half, so the identity is always a possible outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub hflip: bool,
    pub vflip: bool,
    /// Rotations are drawn uniformly from ±`max_rotation_deg`.
    pub max_rotation_deg: f32,
    /// Relative jitter magnitudes; 0.2 means factors in [0.8, 1.2].
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hflip: true,
            vflip: true,
            max_rotation_deg: 15.0,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// One concrete draw of the augmentation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPlan {
    pub hflip: bool,
    pub vflip: bool,
    pub angle_deg: f32,
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl AugmentPlan {
    pub fn identity() -> Self {
        Self {
            hflip: false,
            vflip: false,
            angle_deg: 0.0,
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
        }
    }

    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let mut plan = Self::identity();
        if !cfg.enabled {
            return plan;
        }
        plan.hflip = rng.random_bool(0.5) && cfg.hflip;
        plan.vflip = rng.random_bool(0.5) && cfg.vflip;
        // symmetric draw around `center`, or `center` itself half the time
        let mut jitter = |center: f32, mag: f32| {
            if rng.random_bool(0.5) && mag > 0.0 {
                rng.random_range(center - mag..=center + mag)
            } else {
                center
            }
        };
        plan.angle_deg = jitter(0.0, cfg.max_rotation_deg.clamp(0.0, 180.0));
        plan.brightness = jitter(1.0, cfg.brightness);
        plan.contrast = jitter(1.0, cfg.contrast);
        plan.saturation = jitter(1.0, cfg.saturation);
        plan
    }

    pub fn is_geometric_identity(&self) -> bool {
        !self.hflip && !self.vflip && self.angle_deg == 0.0
    }

    /// Maps an output pixel to the (unreflected) source coordinate it is
    /// sampled from: inverse rotation about the centre, then inverse flips.
    pub fn source_coord(&self, x: f32, y: f32, width: usize, height: usize) -> (f32, f32) {
        let cx = (width as f32 - 1.0) / 2.0;
        let cy = (height as f32 - 1.0) / 2.0;
        let (u, v) = (x - cx, y - cy);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (mut su, mut sv) = (c * u + s * v, -s * u + c * v);
        if self.hflip {
            su = -su;
        }
        if self.vflip {
            sv = -sv;
        }
        (su + cx, sv + cy)
    }

    /// Applies the plan. Geometry is shared by image (bilinear) and mask
    /// (nearest); photometric jitter touches the image only.
    pub fn apply(&self, image: &Array3<f32>, mask: Option<&Array3<f32>>) -> (Array3<f32>, Option<Array3<f32>>) {
        let mut img = self.warp(image.view(), false);
        self.photometric(&mut img);
        (img, mask.map(|m| self.warp(m.view(), true)))
    }

    fn warp(&self, src: ArrayView3<f32>, nearest: bool) -> Array3<f32> {
        let (ch, h, w) = src.dim();
        if self.is_geometric_identity() {
            return src.to_owned();
        }
        if self.angle_deg == 0.0 {
            // pure flips: exact index remapping
            return Array3::from_shape_fn((ch, h, w), |(c, y, x)| {
                let sx = if self.hflip { w - 1 - x } else { x };
                let sy = if self.vflip { h - 1 - y } else { y };
                src[[c, sy, sx]]
            });
        }
        let mut out = Array3::zeros((ch, h, w));
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = self.source_coord(x as f32, y as f32, w, h);
                let (sx, sy) = (reflect(sx, w), reflect(sy, h));
                if nearest {
                    let (ix, iy) = (sx.round() as usize, sy.round() as usize);
                    for c in 0..ch {
                        out[[c, y, x]] = src[[c, iy, ix]];
                    }
                } else {
                    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                    let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
                    for c in 0..ch {
                        let top = src[[c, y0, x0]] * (1.0 - fx) + src[[c, y0, x1]] * fx;
                        let bot = src[[c, y1, x0]] * (1.0 - fx) + src[[c, y1, x1]] * fx;
                        out[[c, y, x]] = top * (1.0 - fy) + bot * fy;
                    }
                }
            }
        }
        out
    }

    fn photometric(&self, img: &mut Array3<f32>) {
        if self.brightness == 1.0 && self.contrast == 1.0 && self.saturation == 1.0 {
            return;
        }
        if self.brightness != 1.0 {
            img.mapv_inplace(|v| v * self.brightness);
        }
        let rgb = img.dim().0 == 3;
        if self.contrast != 1.0 {
            let mean = if rgb {
                let (_, h, w) = img.dim();
                let mut sum = 0.0f64;
                for y in 0..h {
                    for x in 0..w {
                        sum += f64::from(luma(img, y, x));
                    }
                }
                (sum / (h * w) as f64) as f32
            } else {
                img.mean().unwrap_or(0.0)
            };
            img.mapv_inplace(|v| mean + self.contrast * (v - mean));
        }
        if self.saturation != 1.0 && rgb {
            let (_, h, w) = img.dim();
            for y in 0..h {
                for x in 0..w {
                    let g = luma(img, y, x);
                    for c in 0..3 {
                        img[[c, y, x]] = g + self.saturation * (img[[c, y, x]] - g);
                    }
                }
            }
        }
        img.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }
}

fn luma(img: &Array3<f32>, y: usize, x: usize) -> f32 {
    0.299 * img[[0, y, x]] + 0.587 * img[[1, y, x]] + 0.114 * img[[2, y, x]]
}

/// Mirror reflection into [0, n − 1] without repeating the edge pixel.
fn reflect(t: f32, n: usize) -> f32 {
    if n == 1 {
        return 0.0;
    }
    let max = (n - 1) as f32;
    let period = 2.0 * max;
    let t = t.rem_euclid(period);
    let r = if t > max { period - t } else { t };
    r.clamp(0.0, max)
}

/// Draws a plan from `seed` and applies it.
pub fn augment(
    image: &Array3<f32>,
    mask: Option<&Array3<f32>>,
    cfg: &AugmentConfig,
    seed: u64,
) -> (Array3<f32>, Option<Array3<f32>>) {
    let plan = AugmentPlan::sample(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    plan.apply(image, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::random_tensor;

    fn sample_image(seed: u64) -> Array3<f32> {
        random_tensor((1, 3, 20, 28), seed)
            .mapv(|v| (v * 0.2 + 0.5).clamp(0.0, 1.0))
            .index_axis_move(ndarray::Axis(0), 0)
    }

    fn blob_mask() -> Array3<f32> {
        Array3::from_shape_fn((1, 20, 28), |(_, y, x)| f32::from((x as i32 - 10).pow(2) + (y as i32 - 8).pow(2) < 30))
    }

    #[test]
    fn deterministic_per_seed() {
        let img = sample_image(1);
        let cfg = AugmentConfig::default();
        for seed in 0..20 {
            assert_eq!(augment(&img, None, &cfg, seed), augment(&img, None, &cfg, seed));
        }
    }

    #[test]
    fn hflip_is_involution() {
        let img = sample_image(2);
        let plan = AugmentPlan {
            hflip: true,
            ..AugmentPlan::identity()
        };
        let (once, _) = plan.apply(&img, None);
        assert_ne!(once, img);
        assert_eq!(plan.apply(&once, None).0, img);
    }

    #[test]
    fn masks_stay_binary_and_identity_possible() {
        let img = sample_image(3);
        let mask = blob_mask();
        let cfg = AugmentConfig::default();
        let mut saw_identity = false;
        for seed in 0..200 {
            let (out, m) = augment(&img, Some(&mask), &cfg, seed);
            let m = m.unwrap();
            assert!(m.iter().all(|&v| v == 0.0 || v == 1.0));
            saw_identity |= out == img && m == mask;
        }
        assert!(saw_identity);
        let (out, _) = augment(&img, None, &AugmentConfig::disabled(), 5);
        assert_eq!(out, img);
    }

    #[test]
    fn image_and_mask_share_the_spatial_map() {
        let (h, w) = (20usize, 28usize);
        // channel 0 holds x, channel 1 holds y: bilinear sampling of a linear
        // field returns the (reflected) source coordinate itself
        let grid = Array3::from_shape_fn((3, h, w), |(c, y, x)| match c {
            0 => x as f32,
            1 => y as f32,
            _ => 0.0,
        });
        let mask = Array3::from_shape_fn((1, h, w), |(_, y, x)| f32::from((x * 7 + y * 3) % 5 < 2));
        for angle in [-14.0f32, -3.5, 9.0, 15.0] {
            let plan = AugmentPlan {
                hflip: angle > 0.0,
                vflip: angle.abs() > 5.0,
                angle_deg: angle,
                ..AugmentPlan::identity()
            };
            let (g, m) = plan.apply(&grid, Some(&mask));
            let m = m.unwrap();
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = plan.source_coord(x as f32, y as f32, w, h);
                    let (rx, ry) = (reflect(sx, w), reflect(sy, h));
                    assert!((g[[0, y, x]] - rx).abs() < 1e-3, "x at ({x},{y})");
                    assert!((g[[1, y, x]] - ry).abs() < 1e-3, "y at ({x},{y})");
                    assert_eq!(m[[0, y, x]], mask[[0, ry.round() as usize, rx.round() as usize]]);
                }
            }
        }
    }

    #[test]
    fn photometric_leaves_mask_alone() {
        let img = sample_image(4);
        let mask = blob_mask();
        let plan = AugmentPlan {
            brightness: 1.2,
            contrast: 0.8,
            saturation: 1.1,
            ..AugmentPlan::identity()
        };
        let (out, m) = plan.apply(&img, Some(&mask));
        assert_eq!(m.unwrap(), mask);
        assert_ne!(out, img);
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn reflect_folds_into_range() {
        assert_eq!(reflect(-1.0, 5), 1.0);
        assert_eq!(reflect(5.0, 5), 3.0);
        assert_eq!(reflect(2.5, 5), 2.5);
        assert_eq!(reflect(9.0, 5), 1.0);
    }
}
