//! Seeded synthetic descriptor datasets.
//!
//! Every class draws region descriptors from a Gaussian mixture: six
//! background components shared by all classes and three foreground
//! components of its own. With `spatial_signal`, classes 0/1 and 2/3 share
//! their foreground components, and the first class of each pair places
//! foreground regions in the left half of the image while the second uses
//! the right half. Background regions are placed uniformly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::descriptor::{
    write_descriptor_file, DatasetManifest, DescriptorSet, ManifestEntry, RegionBox, Split,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

const BACKGROUND_COMPONENTS: usize = 6;
const FOREGROUND_COMPONENTS: usize = 3;
const FOREGROUND_PROB: f64 = 0.5;
const NOISE_SIGMA: f64 = 0.3;
const MAX_HALF_EXTENT: u32 = 40;
/// Classes `(2m, 2m + 1)` for `m < SPATIAL_PAIRS` form the confusable pairs.
const SPATIAL_PAIRS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub regions_per_image: usize,
    pub dim: usize,
    pub spatial_signal: bool,
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
    /// Fraction of each class written as train, the rest as test.
    pub train_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            images_per_class: 20,
            regions_per_image: 50,
            dim: 32,
            spatial_signal: false,
            seed: 7,
            image_width: 320,
            image_height: 240,
            train_fraction: 0.675,
        }
    }
}

impl SyntheticSpec {
    pub fn class_name(index: usize) -> String {
        format!("class_{index:02}")
    }

    /// Pairs of classes with identical descriptor distributions.
    pub fn confusable_pairs(&self) -> Vec<(String, String)> {
        if !self.spatial_signal {
            return Vec::new();
        }
        (0..SPATIAL_PAIRS)
            .filter(|m| 2 * m + 1 < self.classes)
            .map(|m| (Self::class_name(2 * m), Self::class_name(2 * m + 1)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.classes == 0 || self.regions_per_image == 0 || self.dim == 0 {
            return bad("classes, regions_per_image and dim must be positive".into());
        }
        if self.images_per_class < 2 {
            return bad("images_per_class must be at least 2".into());
        }
        if self.image_width < 4 || self.image_height < 4 {
            return bad(format!(
                "image size {}x{} too small",
                self.image_width, self.image_height
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} not in (0, 1)", self.train_fraction));
        }
        Ok(())
    }

    fn train_count(&self) -> usize {
        let n = self.images_per_class;
        ((n as f64 * self.train_fraction).round() as usize).clamp(1, n - 1)
    }
}

/// Where foreground regions of a class may be centered.
#[derive(Clone, Copy)]
enum Placement {
    Anywhere,
    LeftHalf,
    RightHalf,
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, dim), || rng.sample(StandardNormal))
}

/// Integer center within `[lo, hi)` and a half extent that keeps the box
/// inside `[0, size]`.
fn place_axis(rng: &mut ChaCha8Rng, lo: u32, hi: u32, size: u32) -> (u32, u32) {
    let c = rng.random_range(lo.max(1)..hi.min(size - 1));
    let half = rng.random_range(1..=c.min(size - c).min(MAX_HALF_EXTENT));
    (c, half)
}

/// Writes `<id>.vlds` files and `manifest.jsonl` into `out_dir`.
pub fn generate_synthetic_dataset(
    spec: &SyntheticSpec,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let background = gaussian_rows(&mut rng, BACKGROUND_COMPONENTS, spec.dim);
    let mut foreground: Vec<Array2<f64>> = (0..spec.classes)
        .map(|_| gaussian_rows(&mut rng, FOREGROUND_COMPONENTS, spec.dim))
        .collect();
    let mut placement = vec![Placement::Anywhere; spec.classes];
    if spec.spatial_signal {
        for m in (0..SPATIAL_PAIRS).filter(|m| 2 * m + 1 < spec.classes) {
            foreground[2 * m + 1] = foreground[2 * m].clone();
            placement[2 * m] = Placement::LeftHalf;
            placement[2 * m + 1] = Placement::RightHalf;
        }
    }

    let (w, h) = (spec.image_width, spec.image_height);
    let n_train = spec.train_count();
    let mut entries = Vec::with_capacity(spec.classes * spec.images_per_class);
    for class in 0..spec.classes {
        let label = SyntheticSpec::class_name(class);
        for img in 0..spec.images_per_class {
            let mut regions = Vec::with_capacity(spec.regions_per_image);
            let mut descriptors = Array2::<f32>::zeros((spec.regions_per_image, spec.dim));
            for r in 0..spec.regions_per_image {
                let is_fg = rng.random::<f64>() < FOREGROUND_PROB;
                let (mean, x_range) = if is_fg {
                    let comp = rng.random_range(0..FOREGROUND_COMPONENTS);
                    let range = match placement[class] {
                        Placement::Anywhere => (0, w),
                        Placement::LeftHalf => (0, w / 2),
                        Placement::RightHalf => (w / 2, w),
                    };
                    (foreground[class].row(comp), range)
                } else {
                    let comp = rng.random_range(0..BACKGROUND_COMPONENTS);
                    (background.row(comp), (0, w))
                };
                for (d, &m) in descriptors.row_mut(r).iter_mut().zip(mean) {
                    let noise: f64 = rng.sample(StandardNormal);
                    *d = (m + NOISE_SIGMA * noise) as f32;
                }
                let (cx, hw) = place_axis(&mut rng, x_range.0, x_range.1, w);
                let (cy, hh) = place_axis(&mut rng, 0, h, h);
                regions.push(RegionBox::new(
                    (cx - hw) as f32,
                    (cy - hh) as f32,
                    (2 * hw) as f32,
                    (2 * hh) as f32,
                ));
            }
            let id = format!("{label}_{img:03}");
            let set = DescriptorSet::new(id.clone(), w, h, regions, descriptors)?;
            let file = format!("{id}.vlds");
            write_descriptor_file(&set, out_dir.join(&file))?;
            entries.push(ManifestEntry {
                id,
                path: file,
                label: label.clone(),
                split: if img < n_train { Split::Train } else { Split::Test },
            });
        }
    }
    let manifest = DatasetManifest::new(out_dir, entries)?;
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
