//! Region descriptors to Spatial-Pyramid VLAD image codes, classified with a
//! one-vs-rest linear SVM.
//!
//! The stages are usable on their own ([`pca_fit`], [`kmeans_fit`],
//! [`vlad_encode`], [`sp_vlad_encode`], [`svm_train`]) or end to end through
//! [`train_pipeline`] and [`evaluate`].

mod binio;
mod error;

pub mod classifier;
pub mod codebook;
pub mod descriptor;
pub mod pca;
pub mod pipeline;
pub mod pyramid;
pub mod vlad;

pub use classifier::{
    primal_objective, svm_predict, svm_scores, svm_train, svm_train_with, LinearSvmModel,
    SvmOptions,
};
pub use codebook::{assign_nearest, distortion, kmeans_fit, kmeans_fit_traced, Codebook, KMeansFit, KMeansOptions};
pub use descriptor::{
    descriptor_file_len, load_manifest, read_descriptor_file, read_descriptor_header,
    write_descriptor_file, DatasetManifest, DescriptorHeader, DescriptorSet, ManifestEntry,
    RegionBox, Split,
};
pub use error::{Error, Result};
pub use pca::{pca_fit, pca_transform, CovarianceAccumulator, PcaModel, PcaOptions};
pub use pipeline::{
    ablate, ablation_table, encode_image, evaluate, generate_synthetic_dataset, read_code_file,
    train_pipeline, write_code_file, AblationRun, EvaluationReport, ModelBundle, PipelineConfig,
    Setting, SyntheticSpec,
};
pub use pyramid::{assign_cell, sp_vlad_encode, sp_vlad_encode_regions, Grid, PyramidSpec, SpVladCode};
pub use vlad::{normalize, vlad_encode, NormalizationScheme, VladCode};
