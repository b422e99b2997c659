//! In-memory datasets at network resolution and batch assembly.
//!
//! Images are cached resized but unnormalized so that photometric
//! augmentation operates on [0, 1] values; normalization happens last.
//! Each sample's augmentation seed depends on (seed, epoch, position in the
//! epoch) only, so batch contents do not depend on the worker count.

use ndarray::{s, Array3, Array4};

use super::image::{load_scaled, load_scaled_pair};
use super::{AugmentConfig, AugmentPlan, DataError, InputSpec, MaskPair, SampleManifest};
use crate::exec::Execution;
use crate::rng::{rng_for, tag};

/// Augmentation context for one epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochAugment<'a> {
    pub cfg: &'a AugmentConfig,
    pub seed: u64,
    pub epoch: usize,
}

impl EpochAugment<'_> {
    fn plan(&self, position: usize) -> AugmentPlan {
        let mut rng = rng_for(self.seed, &[tag::AUGMENT, self.epoch as u64, position as u64]);
        AugmentPlan::sample(self.cfg, &mut rng)
    }
}

fn stack(items: Vec<Array3<f32>>) -> Array4<f32> {
    let (c, h, w) = items[0].dim();
    let mut out = Array4::zeros((items.len(), c, h, w));
    for (i, x) in items.into_iter().enumerate() {
        out.slice_mut(s![i, .., .., ..]).assign(&x);
    }
    out
}

#[derive(Clone, Debug)]
pub struct ClassificationData {
    pub spec: InputSpec,
    pub images: Vec<Array3<f32>>,
    pub labels: Vec<usize>,
}

impl ClassificationData {
    pub fn load(manifest: &SampleManifest, spec: &InputSpec, exec: Execution) -> Result<Self, DataError> {
        let images = exec
            .map(&manifest.records, |r| load_scaled(&r.path, spec))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec: spec.clone(),
            images,
            labels: manifest.labels(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Normalized (N, 3, H, W) batch of `indices`. `start` is the position
    /// of the first index within the epoch.
    pub fn batch(
        &self,
        indices: &[usize],
        start: usize,
        aug: Option<EpochAugment<'_>>,
        exec: Execution,
    ) -> (Array4<f32>, Vec<usize>) {
        let items = exec.map_range(indices.len(), |j| {
            let src = &self.images[indices[j]];
            let mut x = match &aug {
                Some(a) => a.plan(start + j).apply(src, None).0,
                None => src.clone(),
            };
            self.spec.normalize(&mut x);
            x
        });
        (stack(items), indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Clone, Debug)]
pub struct SegmentationData {
    pub spec: InputSpec,
    pub images: Vec<Array3<f32>>,
    pub masks: Vec<Array3<f32>>,
}

impl SegmentationData {
    pub fn load(pairs: &[MaskPair], spec: &InputSpec, exec: Execution) -> Result<Self, DataError> {
        let loaded = exec
            .map(pairs, |p| load_scaled_pair(&p.image_path, &p.mask_path, spec))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let (images, masks) = loaded.into_iter().unzip();
        Ok(Self {
            spec: spec.clone(),
            images,
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Normalized images (N, 3, H, W) and binary masks (N, 1, H, W).
    pub fn batch(
        &self,
        indices: &[usize],
        start: usize,
        aug: Option<EpochAugment<'_>>,
        exec: Execution,
    ) -> (Array4<f32>, Array4<f32>) {
        let pairs = exec.map_range(indices.len(), |j| {
            let (img, mask) = (&self.images[indices[j]], &self.masks[indices[j]]);
            let (mut x, m) = match &aug {
                Some(a) => {
                    let (x, m) = a.plan(start + j).apply(img, Some(mask));
                    (x, m.expect("mask requested"))
                }
                None => (img.clone(), mask.clone()),
            };
            self.spec.normalize(&mut x);
            (x, m)
        });
        let (xs, ms): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        (stack(xs), stack(ms))
    }
}
