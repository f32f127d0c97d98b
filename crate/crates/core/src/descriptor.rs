//! Region descriptor sets, dataset manifests, and their file formats.
//!
//! A descriptor file is a little-endian binary blob:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `VLDS`                  |
//! | 4      | 4    | version (`1`)                 |
//! | 8      | 4    | descriptor dimension          |
//! | 12     | 4    | region count                  |
//! | 16     | 4    | image width (pixels)          |
//! | 20     | 4    | image height (pixels)         |
//! | 24     | 4    | reserved (`0`)                |
//! | 28     | 16·n | regions as `f32` x, y, w, h   |
//! | ...    | 4·n·d| descriptors, `f32`, row-major |
//!
//! The image id is not stored in the file; readers take it from the file stem.
//!
//! A manifest is JSON lines, one object per image with keys `id`, `path`,
//! `label` and `split` (`"train"` or `"test"`). Relative paths resolve against
//! the manifest's directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{put_f32, put_u32, to_u32, ByteReader};
use crate::error::{Error, Result};

pub const DESCRIPTOR_MAGIC: [u8; 4] = *b"VLDS";
pub const DESCRIPTOR_VERSION: u32 = 1;
pub const DESCRIPTOR_HEADER_LEN: usize = 28;

/// Axis-aligned region in absolute pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBox {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
}

impl RegionBox {
    pub fn new(x: f32, y: f32, w: f32, h: f32) -> Self {
        Self { x, y, w, h }
    }

    /// The full image as a single region.
    pub fn full_image(width: u32, height: u32) -> Self {
        Self::new(0.0, 0.0, width as f32, height as f32)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    fn check(&self, width: u32, height: u32) -> std::result::Result<(), String> {
        let Self { x, y, w, h } = *self;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if !(w > 0.0 && h > 0.0) {
            return Err(format!("non-positive size {w}x{h}"));
        }
        if x < 0.0 || y < 0.0 {
            return Err(format!("negative origin ({x}, {y})"));
        }
        let (cx, cy) = self.center();
        if cx >= width as f64 || cy >= height as f64 {
            return Err(format!(
                "center ({cx}, {cy}) outside {width}x{height} image"
            ));
        }
        Ok(())
    }
}

/// All region descriptors and region boxes of one image. Row `i` of the
/// descriptor matrix describes `regions[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    image_id: String,
    image_width: u32,
    image_height: u32,
    regions: Vec<RegionBox>,
    descriptors: Array2<f32>,
}

impl DescriptorSet {
    pub fn new(
        image_id: impl Into<String>,
        image_width: u32,
        image_height: u32,
        regions: Vec<RegionBox>,
        descriptors: Array2<f32>,
    ) -> Result<Self> {
        let set = Self {
            image_id: image_id.into(),
            image_width,
            image_height,
            regions,
            descriptors,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidParameter("descriptor dim must be positive".into()));
        }
        if self.regions.len() != self.descriptors.nrows() {
            return Err(Error::RowCountMismatch {
                regions: self.regions.len(),
                rows: self.descriptors.nrows(),
            });
        }
        if !self.descriptors.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("descriptors of {:?}", self.image_id)));
        }
        for (index, region) in self.regions.iter().enumerate() {
            region
                .check(self.image_width, self.image_height)
                .map_err(|reason| Error::InvalidRegion { index, reason })?;
        }
        Ok(())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn dim(&self) -> usize {
        self.descriptors.ncols()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[RegionBox] {
        &self.regions
    }

    pub fn descriptors(&self) -> ArrayView2<'_, f32> {
        self.descriptors.view()
    }

    /// Descriptors widened to f64 for the numeric stages.
    pub fn descriptors_f64(&self) -> Array2<f64> {
        self.descriptors.mapv(f64::from)
    }

    /// Keeps the first `cap` regions. Files list regions in descending
    /// proposal confidence, so this keeps the most confident ones.
    pub fn truncated(&self, cap: usize) -> DescriptorSet {
        if self.len() <= cap {
            return self.clone();
        }
        DescriptorSet {
            image_id: self.image_id.clone(),
            image_width: self.image_width,
            image_height: self.image_height,
            regions: self.regions[..cap].to_vec(),
            descriptors: self.descriptors.slice(ndarray::s![..cap, ..]).to_owned(),
        }
    }

    pub fn with_image_id(mut self, image_id: impl Into<String>) -> Self {
        self.image_id = image_id.into();
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let n = self.len();
        let mut buf = Vec::with_capacity(descriptor_file_len(n, self.dim()));
        buf.extend_from_slice(&DESCRIPTOR_MAGIC);
        put_u32(&mut buf, DESCRIPTOR_VERSION);
        put_u32(&mut buf, to_u32(self.dim(), "dim")?);
        put_u32(&mut buf, to_u32(n, "region count")?);
        put_u32(&mut buf, self.image_width);
        put_u32(&mut buf, self.image_height);
        put_u32(&mut buf, 0);
        for r in &self.regions {
            for v in [r.x, r.y, r.w, r.h] {
                put_f32(&mut buf, v);
            }
        }
        for &v in self.descriptors.iter() {
            put_f32(&mut buf, v);
        }
        Ok(buf)
    }

    pub fn from_bytes(image_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.magic()?;
        if magic != DESCRIPTOR_MAGIC {
            return Err(Error::BadMagic {
                expected: DESCRIPTOR_MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != DESCRIPTOR_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let image_width = r.u32()?;
        let image_height = r.u32()?;
        let _reserved = r.u32()?;

        let mut regions = Vec::with_capacity(count.min(r.remaining() / 16));
        for _ in 0..count {
            regions.push(RegionBox::new(r.f32()?, r.f32()?, r.f32()?, r.f32()?));
        }
        let row_bytes = dim * 4;
        let payload = r.take(count * row_bytes)?;
        let extra = r.remaining();
        if extra > 0 {
            if row_bytes > 0 && extra.is_multiple_of(row_bytes) {
                return Err(Error::RowCountMismatch {
                    regions: count,
                    rows: count + extra / row_bytes,
                });
            }
            return Err(Error::TrailingBytes {
                what: "descriptor",
                extra,
            });
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let descriptors = Array2::from_shape_vec((count, dim), values)
            .map_err(|e| Error::Internal(e.to_string()))?;
        DescriptorSet::new(image_id, image_width, image_height, regions, descriptors)
    }
}

/// Exact size in bytes of a descriptor file with `regions` rows of `dim` values.
pub fn descriptor_file_len(regions: usize, dim: usize) -> usize {
    DESCRIPTOR_HEADER_LEN + 16 * regions + 4 * regions * dim
}

pub fn write_descriptor_file(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = set.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Header fields of a descriptor file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorHeader {
    pub dim: usize,
    pub regions: usize,
    pub image_width: u32,
    pub image_height: u32,
}

/// Reads and checks only the 28-byte header, plus the file length against it.
pub fn read_descriptor_header(path: impl AsRef<Path>) -> Result<DescriptorHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
    let mut head = [0u8; DESCRIPTOR_HEADER_LEN];
    let got = file
        .by_ref()
        .take(DESCRIPTOR_HEADER_LEN as u64)
        .read(&mut head)
        .map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&head[..got]);
    let magic = r.magic()?;
    if magic != DESCRIPTOR_MAGIC {
        return Err(Error::BadMagic {
            expected: DESCRIPTOR_MAGIC,
            found: magic,
        });
    }
    let version = r.u32()?;
    if version != DESCRIPTOR_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header = DescriptorHeader {
        dim: r.u32()? as usize,
        regions: r.u32()? as usize,
        image_width: r.u32()?,
        image_height: r.u32()?,
    };
    r.u32()?;
    let expected = descriptor_file_len(header.regions, header.dim);
    if len < expected {
        return Err(Error::Truncated {
            offset: len,
            needed: expected - len,
            available: 0,
        });
    }
    Ok(header)
}

pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DescriptorSet::from_bytes(id, &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn parse(value: &str) -> Option<Self> {
        match value {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: String,
    pub split: Split,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    path: String,
    label: String,
    split: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    base_dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest whose relative paths resolve against `base_dir`.
    pub fn new(base_dir: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if let Some(first) = seen.insert(&e.id, i + 1) {
                return Err(Error::DuplicateId {
                    id: e.id.clone(),
                    first_line: first,
                    second_line: i + 1,
                });
            }
        }
        let manifest = Self {
            base_dir: base_dir.into(),
            entries,
        };
        manifest.check_labels()?;
        Ok(manifest)
    }

    fn check_labels(&self) -> Result<()> {
        for label in self.labels() {
            if !self
                .entries
                .iter()
                .any(|e| e.label == label && e.split == Split::Train)
            {
                return Err(Error::LabelWithoutTrain(label));
            }
        }
        Ok(())
    }

    pub fn parse(base_dir: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut lines_of: HashMap<String, usize> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawEntry =
                serde_json::from_str(line).map_err(|e| Error::MalformedManifest {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let split = Split::parse(&raw.split).ok_or_else(|| Error::UnknownSplit {
                line: line_no,
                value: raw.split.clone(),
            })?;
            if let Some(&first) = lines_of.get(&raw.id) {
                return Err(Error::DuplicateId {
                    id: raw.id,
                    first_line: first,
                    second_line: line_no,
                });
            }
            lines_of.insert(raw.id.clone(), line_no);
            entries.push(ManifestEntry {
                id: raw.id,
                path: raw.path,
                label: raw.label,
                split,
            });
        }
        let manifest = Self {
            base_dir: base_dir.into(),
            entries,
        };
        manifest.check_labels()?;
        Ok(manifest)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for e in &self.entries {
            if !labels.contains(&e.label) {
                labels.push(e.label.clone());
            }
        }
        labels
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Reassigns splits per label: a seeded shuffle of each label's entries,
    /// the first `round(n * train_fraction)` (at least one) become train.
    /// Entry order is unchanged.
    pub fn resplit(&self, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {train_fraction} not in (0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = self.entries.clone();
        for label in self.labels() {
            let mut idx: Vec<usize> = (0..entries.len())
                .filter(|&i| entries[i].label == label)
                .collect();
            idx.shuffle(&mut rng);
            let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len());
            for (rank, &i) in idx.iter().enumerate() {
                entries[i].split = if rank < n_train { Split::Train } else { Split::Test };
            }
        }
        Self::new(self.base_dir.clone(), entries)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(base, &text)
}
