//! Model bundle and code file formats.
//!
//! Bundle layout, little-endian:
//!
//! ```text
//! "VLDB" | version u32 | config: u32 length + JSON
//!        | pca present u32 | [PCA section]
//!        | codebook present u32 | [codebook section]
//!        | SVM section
//! ```
//!
//! The PCA and codebook sections are absent for the raw-feature setting.
//! A code file is the vector length as `u32` followed by `f32` values.

use std::fs;
use std::path::Path;

use ndarray::Array1;

use crate::binio::{put_bytes, put_f32, put_u32, to_u32, ByteReader};
use crate::classifier::LinearSvmModel;
use crate::codebook::Codebook;
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::pca::PcaModel;
use crate::pyramid::sp_vlad_encode;
use crate::vlad::vlad_encode;

use super::config::{PipelineConfig, Setting};

pub const BUNDLE_MAGIC: [u8; 4] = *b"VLDB";
pub const BUNDLE_VERSION: u32 = 1;

/// Everything needed to encode and classify new images.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    config: PipelineConfig,
    pca: Option<PcaModel>,
    codebook: Option<Codebook>,
    svm: LinearSvmModel,
}

impl ModelBundle {
    pub fn new(
        config: PipelineConfig,
        pca: Option<PcaModel>,
        codebook: Option<Codebook>,
        svm: LinearSvmModel,
    ) -> Result<Self> {
        config.validate()?;
        let bundle = Self {
            config,
            pca,
            codebook,
            svm,
        };
        bundle.check_consistency()?;
        Ok(bundle)
    }

    fn check_consistency(&self) -> Result<()> {
        let inconsistent = |msg: String| Err(Error::InconsistentBundle(msg));
        match (self.config.setting, &self.pca, &self.codebook) {
            (Setting::RawFeatures, None, None) => Ok(()),
            (Setting::RawFeatures, _, _) => {
                inconsistent("raw-feature bundle carries PCA or codebook".into())
            }
            (_, Some(pca), Some(cb)) => {
                if pca.output_dim() != cb.dim() {
                    return inconsistent(format!(
                        "PCA output dim {} vs codebook dim {}",
                        pca.output_dim(),
                        cb.dim()
                    ));
                }
                if pca.output_dim() != self.config.pca_output_dim || cb.k() != self.config.k {
                    return inconsistent("config dims disagree with fitted models".into());
                }
                let expected = self.config.feature_dim(pca.input_dim());
                if self.svm.feature_dim() != expected {
                    return inconsistent(format!(
                        "SVM feature dim {} vs expected code length {expected}",
                        self.svm.feature_dim()
                    ));
                }
                Ok(())
            }
            _ => inconsistent("encoding setting requires PCA and codebook".into()),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn setting(&self) -> Setting {
        self.config.setting
    }

    pub fn pca(&self) -> Option<&PcaModel> {
        self.pca.as_ref()
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    pub fn svm(&self) -> &LinearSvmModel {
        &self.svm
    }

    /// Width of descriptors this bundle accepts.
    pub fn descriptor_dim(&self) -> usize {
        match &self.pca {
            Some(pca) => pca.input_dim(),
            None => self.svm.feature_dim(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.svm.feature_dim()
    }

    /// Region cap, PCA, then the setting's encoder.
    pub fn encode(&self, set: &DescriptorSet) -> Result<Array1<f64>> {
        if set.dim() != self.descriptor_dim() {
            return Err(Error::DimensionMismatch {
                context: "descriptor set",
                expected: self.descriptor_dim(),
                found: set.dim(),
            });
        }
        let code = encode_with(
            &self.config,
            self.pca.as_ref(),
            self.codebook.as_ref(),
            set,
        )?;
        debug_assert_eq!(code.len(), self.feature_dim());
        Ok(code)
    }

    pub fn predict(&self, set: &DescriptorSet) -> Result<&str> {
        let code = self.encode(set)?;
        self.svm.predict(code.view())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&BUNDLE_MAGIC);
        put_u32(&mut buf, BUNDLE_VERSION);
        put_bytes(&mut buf, self.config.to_json().as_bytes());
        match &self.pca {
            Some(pca) => {
                put_u32(&mut buf, 1);
                pca.write_to(&mut buf)?;
            }
            None => put_u32(&mut buf, 0),
        }
        match &self.codebook {
            Some(cb) => {
                put_u32(&mut buf, 1);
                cb.write_to(&mut buf)?;
            }
            None => put_u32(&mut buf, 0),
        }
        self.svm.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.magic()?;
        if magic != BUNDLE_MAGIC {
            return Err(Error::BadMagic {
                expected: BUNDLE_MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != BUNDLE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let config_json = r.string("config")?;
        let config = PipelineConfig::from_json(&config_json)?;
        let pca = match presence(&mut r, "PCA")? {
            true => Some(PcaModel::read_from(&mut r)?),
            false => None,
        };
        let codebook = match presence(&mut r, "codebook")? {
            true => Some(Codebook::read_from(&mut r)?),
            false => None,
        };
        let svm = LinearSvmModel::read_from(&mut r)?;
        if r.remaining() > 0 {
            return Err(Error::TrailingBytes {
                what: "bundle",
                extra: r.remaining(),
            });
        }
        Self::new(config, pca, codebook, svm)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Encodes one image with explicitly supplied models. Used both while
/// training, before a bundle exists, and by [`ModelBundle::encode`].
pub(crate) fn encode_with(
    config: &PipelineConfig,
    pca: Option<&PcaModel>,
    codebook: Option<&Codebook>,
    set: &DescriptorSet,
) -> Result<Array1<f64>> {
    let set = set.truncated(config.region_cap);
    let scheme = &config.normalization;
    match (config.setting, pca, codebook) {
        (Setting::RawFeatures, _, _) => {
            let mut global = global_descriptor(&set);
            scheme.apply(global.as_slice_mut().expect("contiguous"), set.dim());
            Ok(global)
        }
        (Setting::Vlad, Some(pca), Some(cb)) => {
            let reduced = pca.transform(set.descriptors_f64().view())?;
            Ok(vlad_encode(reduced.view(), cb)?.normalized(scheme).into_values())
        }
        (Setting::SpVlad, Some(pca), Some(cb)) => {
            let reduced = pca.transform(set.descriptors_f64().view())?;
            Ok(sp_vlad_encode(&set, reduced.view(), cb, &config.pyramid, scheme)?.into_values())
        }
        _ => Err(Error::Internal("encoding setting without PCA and codebook".into())),
    }
}

fn presence(r: &mut ByteReader<'_>, what: &str) -> Result<bool> {
    let at = r.position();
    match r.u32()? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::InconsistentBundle(format!(
            "{what} presence flag {other} at offset {at}"
        ))),
    }
}

/// The single global descriptor of an image: the only row when there is one,
/// otherwise the mean over regions (zeros for an empty set).
pub fn global_descriptor(set: &DescriptorSet) -> Array1<f64> {
    let mut acc = Array1::zeros(set.dim());
    for row in set.descriptors().rows() {
        acc.zip_mut_with(&row, |a, &v| *a += f64::from(v));
    }
    if set.len() > 1 {
        acc /= set.len() as f64;
    }
    acc
}

pub fn encode_image(bundle: &ModelBundle, set: &DescriptorSet) -> Result<Array1<f64>> {
    bundle.encode(set)
}

pub fn code_to_bytes(code: &[f32]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(4 + 4 * code.len());
    put_u32(&mut buf, to_u32(code.len(), "code length")?);
    for &v in code {
        put_f32(&mut buf, v);
    }
    Ok(buf)
}

pub fn code_from_bytes(bytes: &[u8]) -> Result<Vec<f32>> {
    let mut r = ByteReader::new(bytes);
    let n = r.u32()? as usize;
    let values = r.take(n.checked_mul(4).ok_or_else(|| {
        Error::InvalidParameter(format!("code length {n} overflows"))
    })?)?;
    if r.remaining() > 0 {
        return Err(Error::TrailingBytes {
            what: "code",
            extra: r.remaining(),
        });
    }
    values
        .chunks_exact(4)
        .map(|b| {
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite("code file".into()))
            }
        })
        .collect()
}

pub fn write_code_file(code: &[f32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, code_to_bytes(code)?).map_err(|e| Error::io(path, e))
}

pub fn read_code_file(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    code_from_bytes(&bytes)
}
