//! Spatial-pyramid VLAD: regions are binned into grid cells by their box
//! centers, each cell is VLAD-encoded against the shared codebook, and the
//! cell codes are concatenated level by level.

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::vlad::{l2_normalize, vlad_encode, NormalizationScheme};

/// One pyramid level: a `rows × cols` grid over the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

impl From<[usize; 2]> for Grid {
    fn from([rows, cols]: [usize; 2]) -> Self {
        Self { rows, cols }
    }
}

impl From<Grid> for [usize; 2] {
    fn from(g: Grid) -> Self {
        [g.rows, g.cols]
    }
}

/// Ordered list of grid levels; serialized as `[[rows, cols], ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PyramidSpec {
    levels: Vec<Grid>,
}

impl Default for PyramidSpec {
    /// Whole image plus a 2×2 grid: five cells.
    fn default() -> Self {
        Self {
            levels: vec![Grid::new(1, 1), Grid::new(2, 2)],
        }
    }
}

impl PyramidSpec {
    pub fn new(levels: Vec<Grid>) -> Result<Self> {
        let spec = Self { levels };
        spec.validate()?;
        Ok(spec)
    }

    /// Only the 2×2 level, without the whole-image cell.
    pub fn two_by_two() -> Self {
        Self {
            levels: vec![Grid::new(2, 2)],
        }
    }

    pub fn single_level() -> Self {
        Self {
            levels: vec![Grid::new(1, 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
        }
        if let Some(g) = self.levels.iter().find(|g| g.rows == 0 || g.cols == 0) {
            return Err(Error::InvalidParameter(format!(
                "pyramid grid {}x{} has an empty axis",
                g.rows, g.cols
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> &[Grid] {
        &self.levels
    }

    pub fn total_cells(&self) -> usize {
        self.levels.iter().map(Grid::cells).sum()
    }

    /// Length of an SP-VLAD code for a codebook of `k` words of dimension `dim`.
    pub fn code_len(&self, k: usize, dim: usize) -> usize {
        self.total_cells() * k * dim
    }
}

/// Cell index of a point under `grid`: `row * cols + col` with
/// `col = floor(x·cols/W)` and `row = floor(y·rows/H)`. Cells are half-open,
/// so a point on an interior boundary belongs to the higher cell.
pub fn assign_cell(center: (f64, f64), image_size: (u32, u32), grid: Grid) -> Result<usize> {
    let (x, y) = center;
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    if !(x >= 0.0 && x < w && y >= 0.0 && y < h) {
        return Err(Error::InvalidParameter(format!(
            "center ({x}, {y}) outside {}x{} image",
            image_size.0, image_size.1
        )));
    }
    let col = ((x * grid.cols as f64 / w).floor() as usize).min(grid.cols - 1);
    let row = ((y * grid.rows as f64 / h).floor() as usize).min(grid.rows - 1);
    Ok(row * grid.cols + col)
}

/// Concatenated per-cell codes, cells ordered level-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpVladCode {
    spec: PyramidSpec,
    k: usize,
    dim: usize,
    values: Array1<f64>,
}

impl SpVladCode {
    pub fn spec(&self) -> &PyramidSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> ndarray::ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    /// The `k·dim` block of flat cell index `cell`.
    pub fn cell(&self, cell: usize) -> ndarray::ArrayView1<'_, f64> {
        let n = self.k * self.dim;
        self.values.slice(ndarray::s![cell * n..(cell + 1) * n])
    }
}

/// Encodes `descriptors` (row `i` belongs to the region centered at
/// `centers[i]`) over every pyramid cell.
///
/// Each cell code is normalized with `scheme` before concatenation; when
/// `scheme.global_l2` is set and there is more than one cell, the
/// concatenation is L2-normalized once more. With a single cell that final
/// step would be a no-op, so it is skipped and a `[1×1]` pyramid reproduces
/// `normalize(vlad_encode(..))` exactly.
pub fn sp_vlad_encode_regions(
    descriptors: ArrayView2<'_, f64>,
    centers: &[(f64, f64)],
    image_size: (u32, u32),
    codebook: &Codebook,
    spec: &PyramidSpec,
    scheme: &NormalizationScheme,
) -> Result<SpVladCode> {
    spec.validate()?;
    codebook.check_dim(descriptors.ncols(), "SP-VLAD descriptors")?;
    if centers.len() != descriptors.nrows() {
        return Err(Error::RowCountMismatch {
            regions: centers.len(),
            rows: descriptors.nrows(),
        });
    }
    let (k, dim) = (codebook.k(), codebook.dim());
    let block = k * dim;
    let mut values = Array1::zeros(spec.code_len(k, dim));
    let mut offset = 0;
    for &grid in spec.levels() {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); grid.cells()];
        for (i, &c) in centers.iter().enumerate() {
            members[assign_cell(c, image_size, grid)?].push(i);
        }
        for rows in &members {
            let cell_descriptors = descriptors.select(Axis(0), rows);
            let code = vlad_encode(cell_descriptors.view(), codebook)?.normalized(scheme);
            values
                .slice_mut(ndarray::s![offset..offset + block])
                .assign(&code.values());
            offset += block;
        }
    }
    if scheme.global_l2 && spec.total_cells() > 1 {
        l2_normalize(values.as_slice_mut().expect("contiguous"));
    }
    Ok(SpVladCode {
        spec: spec.clone(),
        k,
        dim,
        values,
    })
}

/// SP-VLAD over a descriptor set whose descriptors are already in codebook
/// space (for example PCA-reduced). `reduced` replaces the set's own
/// descriptor matrix and must have one row per region.
pub fn sp_vlad_encode(
    set: &crate::descriptor::DescriptorSet,
    reduced: ArrayView2<'_, f64>,
    codebook: &Codebook,
    spec: &PyramidSpec,
    scheme: &NormalizationScheme,
) -> Result<SpVladCode> {
    let centers: Vec<(f64, f64)> = set.regions().iter().map(|r| r.center()).collect();
    sp_vlad_encode_regions(
        reduced,
        &centers,
        (set.image_width(), set.image_height()),
        codebook,
        spec,
        scheme,
    )
}
