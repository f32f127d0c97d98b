//! End-to-end training, encoding, evaluation, and the setting ablation.
//!
//! Training runs in strictly ordered stages: PCA on a seeded sample of the
//! pooled train-split regions, k-means on the same sample after projection,
//! per-image encoding, then the one-vs-rest SVM.

mod bundle;
mod config;
mod report;
mod synthetic;

use std::borrow::Cow;
use std::path::PathBuf;

use ndarray::{Array2, Axis};

use crate::classifier::{svm_train_with, SvmOptions};
use crate::codebook::kmeans_fit;
use crate::descriptor::{
    read_descriptor_file, read_descriptor_header, DatasetManifest, DescriptorSet, Split,
};
use crate::error::{Error, Result};
use crate::pca::{sample_rows, CovarianceAccumulator};

pub use bundle::{
    code_from_bytes, code_to_bytes, encode_image, global_descriptor, read_code_file,
    write_code_file, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION,
};
pub use config::{PipelineConfig, Setting};
pub use report::{evaluate, EvaluationReport, Prediction};
pub use synthetic::{generate_synthetic_dataset, SyntheticSpec, MANIFEST_FILE};

/// Descriptor sets are cached in memory below this many payload bytes and
/// re-read from disk on every pass above it.
const CACHE_BUDGET_BYTES: usize = 1 << 30;

struct TrainImage {
    id: String,
    label: String,
    path: PathBuf,
    /// Rows kept after the region cap.
    rows: usize,
}

struct ImageSource {
    images: Vec<TrainImage>,
    cache: Option<Vec<DescriptorSet>>,
    region_cap: usize,
}

impl ImageSource {
    fn open(manifest: &DatasetManifest, split: Split, region_cap: usize) -> Result<(Self, usize)> {
        let mut images = Vec::new();
        let mut dim = None;
        let mut bytes = 0usize;
        for entry in manifest.split(split) {
            let path = manifest.resolve(entry);
            let header = read_descriptor_header(&path)?;
            match dim {
                None => dim = Some(header.dim),
                Some(d) if d != header.dim => {
                    return Err(Error::DimensionMismatch {
                        context: "descriptor files in manifest",
                        expected: d,
                        found: header.dim,
                    })
                }
                Some(_) => {}
            }
            let rows = header.regions.min(region_cap);
            bytes = bytes.saturating_add(header.regions * (header.dim + 4) * 4);
            images.push(TrainImage {
                id: entry.id.clone(),
                label: entry.label.clone(),
                path,
                rows,
            });
        }
        let dim = dim.ok_or_else(|| {
            Error::InsufficientData(format!("no {split:?} entries in manifest").to_lowercase())
        })?;
        let mut source = Self {
            images,
            cache: None,
            region_cap,
        };
        if bytes <= CACHE_BUDGET_BYTES {
            let sets = (0..source.images.len())
                .map(|i| source.load(i))
                .collect::<Result<Vec<_>>>()?;
            source.cache = Some(sets);
        }
        Ok((source, dim))
    }

    fn load(&self, i: usize) -> Result<DescriptorSet> {
        let img = &self.images[i];
        Ok(read_descriptor_file(&img.path)?
            .with_image_id(img.id.clone())
            .truncated(self.region_cap))
    }

    fn get(&self, i: usize) -> Result<Cow<'_, DescriptorSet>> {
        match &self.cache {
            Some(sets) => Ok(Cow::Borrowed(&sets[i])),
            None => self.load(i).map(Cow::Owned),
        }
    }

    /// Calls `f(image, local_rows)` with the sampled rows of every image,
    /// where `sample` holds sorted global row indices over the pooled images.
    fn for_each_sampled(
        &self,
        sample: &[usize],
        mut f: impl FnMut(&DescriptorSet, &[usize]) -> Result<()>,
    ) -> Result<()> {
        let mut offset = 0;
        let mut cursor = 0;
        let mut local = Vec::new();
        for (i, img) in self.images.iter().enumerate() {
            local.clear();
            while cursor < sample.len() && sample[cursor] < offset + img.rows {
                local.push(sample[cursor] - offset);
                cursor += 1;
            }
            if !local.is_empty() {
                let set = self.get(i)?;
                f(&set, &local)?;
            }
            offset += img.rows;
        }
        Ok(())
    }
}

fn check_class_sizes(source: &ImageSource) -> Result<()> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for img in &source.images {
        match counts.iter_mut().find(|(l, _)| *l == img.label) {
            Some((_, n)) => *n += 1,
            None => counts.push((&img.label, 1)),
        }
    }
    if let Some((label, n)) = counts.iter().find(|(_, n)| *n < 2) {
        return Err(Error::InsufficientData(format!(
            "class {label:?} has {n} training image(s); at least 2 required"
        )));
    }
    Ok(())
}

/// Trains a bundle on the manifest's train split.
pub fn train_pipeline(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<ModelBundle> {
    config.validate()?;
    let (source, dim) = ImageSource::open(manifest, Split::Train, config.region_cap)?;
    check_class_sizes(&source)?;

    let (pca, codebook) = match config.setting {
        Setting::RawFeatures => (None, None),
        Setting::Vlad | Setting::SpVlad => {
            if config.pca_output_dim > dim {
                return Err(Error::InvalidParameter(format!(
                    "pca_output_dim {} exceeds descriptor dim {dim}",
                    config.pca_output_dim
                )));
            }
            let pooled: usize = source.images.iter().map(|img| img.rows).sum();
            let sample = sample_rows(pooled, config.pca_sample_cap, config.seed);

            let mut acc = CovarianceAccumulator::new(dim);
            source.for_each_sampled(&sample, |set, rows| {
                acc.push(set.descriptors_f64().select(Axis(0), rows).view())
            })?;
            let pca = acc.finish(config.pca_output_dim, config.pca_whiten)?;

            let mut reduced = Array2::zeros((0, config.pca_output_dim));
            source.for_each_sampled(&sample, |set, rows| {
                let picked = set.descriptors_f64().select(Axis(0), rows);
                let projected = pca.transform(picked.view())?;
                reduced
                    .append(Axis(0), projected.view())
                    .map_err(|e| Error::Internal(e.to_string()))
            })?;
            let codebook = kmeans_fit(reduced.view(), config.k, config.kmeans_max_iters, config.seed)?;
            (Some(pca), Some(codebook))
        }
    };

    let feature_dim = config.feature_dim(dim);
    let mut features = Array2::zeros((source.images.len(), feature_dim));
    let mut labels = Vec::with_capacity(source.images.len());
    for (i, img) in source.images.iter().enumerate() {
        let set = source.get(i)?;
        let code = bundle::encode_with(config, pca.as_ref(), codebook.as_ref(), &set)?;
        features.row_mut(i).assign(&code);
        labels.push(img.label.as_str());
    }
    let svm = svm_train_with(
        features.view(),
        &labels,
        &SvmOptions {
            c: config.svm_c,
            seed: config.seed,
            ..SvmOptions::default()
        },
    )?;
    ModelBundle::new(config.clone(), pca, codebook, svm)
}

/// Trained bundle and test-split report for one setting.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub setting: Setting,
    pub bundle: ModelBundle,
    pub report: EvaluationReport,
}

/// Trains and evaluates each setting with otherwise identical configuration.
pub fn ablate(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    settings: &[Setting],
) -> Result<Vec<AblationRun>> {
    settings
        .iter()
        .map(|&setting| {
            let cfg = config.with_setting(setting);
            let bundle = train_pipeline(manifest, &cfg)?;
            let report = evaluate(&bundle, manifest)?;
            Ok(AblationRun {
                setting,
                bundle,
                report,
            })
        })
        .collect()
}

/// One line per setting: code length and test accuracy.
pub fn ablation_table(runs: &[AblationRun]) -> String {
    let mut out = format!("{:<14} {:>10} {:>10} {:>9}\n", "setting", "code_len", "correct", "accuracy");
    for run in runs {
        out.push_str(&format!(
            "{:<14} {:>10} {:>10} {:>8.2}%\n",
            run.setting.as_str(),
            run.bundle.feature_dim(),
            format!("{}/{}", run.report.correct, run.report.total),
            100.0 * run.report.accuracy
        ));
    }
    out
}
