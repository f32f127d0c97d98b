use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyramid::PyramidSpec;
use crate::vlad::NormalizationScheme;

/// Which image representation feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// One global descriptor per image, used as is.
    RawFeatures,
    /// VLAD over all regions of the image.
    Vlad,
    /// VLAD per spatial-pyramid cell, concatenated.
    SpVlad,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::RawFeatures, Setting::Vlad, Setting::SpVlad];

    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::RawFeatures => "raw_features",
            Setting::Vlad => "vlad",
            Setting::SpVlad => "sp_vlad",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown setting {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub setting: Setting,
    pub pca_output_dim: usize,
    pub pca_sample_cap: usize,
    pub pca_whiten: bool,
    pub k: usize,
    pub kmeans_max_iters: usize,
    pub pyramid: PyramidSpec,
    pub normalization: NormalizationScheme,
    pub svm_c: f64,
    pub seed: u64,
    /// Regions kept per image, taken from the front of each file.
    pub region_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            setting: Setting::SpVlad,
            pca_output_dim: 256,
            pca_sample_cap: crate::pca::DEFAULT_SAMPLE_CAP,
            pca_whiten: false,
            k: crate::codebook::DEFAULT_K,
            kmeans_max_iters: crate::codebook::DEFAULT_MAX_ITERS,
            pyramid: PyramidSpec::default(),
            normalization: NormalizationScheme::default(),
            svm_c: crate::classifier::DEFAULT_C,
            seed: crate::pca::DEFAULT_SEED,
            region_cap: 1000,
        }
    }
}

impl PipelineConfig {
    pub fn with_setting(&self, setting: Setting) -> Self {
        Self {
            setting,
            ..self.clone()
        }
    }

    /// Checks every field, including the ones the chosen setting ignores.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pca_output_dim", self.pca_output_dim),
            ("pca_sample_cap", self.pca_sample_cap),
            ("k", self.k),
            ("kmeans_max_iters", self.kmeans_max_iters),
            ("region_cap", self.region_cap),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "svm_c = {} must be positive",
                self.svm_c
            )));
        }
        self.pyramid.validate()?;
        self.normalization.validate()
    }

    /// Classifier input length for descriptors of width `descriptor_dim`.
    pub fn feature_dim(&self, descriptor_dim: usize) -> usize {
        match self.setting {
            Setting::RawFeatures => descriptor_dim,
            Setting::Vlad => self.k * self.pca_output_dim,
            Setting::SpVlad => self.pyramid.code_len(self.k, self.pca_output_dim),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
