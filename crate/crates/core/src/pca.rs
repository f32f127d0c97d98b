//! Principal component analysis by exact eigendecomposition of the sample
//! covariance.
//!
//! Fitting streams rows through a [`CovarianceAccumulator`], which merges
//! per-batch means and co-moments, so large descriptor pools never have to be
//! materialized as a single matrix. The covariance is then decomposed with a
//! dense symmetric eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{put_f32s, put_u32, quantize, to_u32, ByteReader};
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_CAP: usize = 220_000;
pub const DEFAULT_SEED: u64 = 42;

/// Rows of the projection must be orthonormal to within this tolerance.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

const BATCH_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaOptions {
    /// Upper bound on the rows used for fitting; larger inputs are subsampled.
    pub sample_cap: usize,
    pub seed: u64,
    /// Scale each component to unit variance after projection.
    pub whiten: bool,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            sample_cap: DEFAULT_SAMPLE_CAP,
            seed: DEFAULT_SEED,
            whiten: false,
        }
    }
}

/// Mean vector plus an `output_dim × input_dim` projection with orthonormal
/// rows ordered by decreasing explained variance.
///
/// All values are kept exactly representable as `f32` so the model survives
/// serialization bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Array1<f64>,
    projection: Array2<f64>,
    explained_variance: Array1<f64>,
    whiten: bool,
}

impl PcaModel {
    pub fn new(
        mean: Array1<f64>,
        projection: Array2<f64>,
        explained_variance: Array1<f64>,
        whiten: bool,
    ) -> Result<Self> {
        let (out, input) = projection.dim();
        if input == 0 || out == 0 {
            return Err(Error::InvalidParameter("PCA dims must be positive".into()));
        }
        if out > input {
            return Err(Error::InvalidParameter(format!(
                "PCA output dim {out} exceeds input dim {input}"
            )));
        }
        if mean.len() != input {
            return Err(Error::DimensionMismatch {
                context: "PCA mean",
                expected: input,
                found: mean.len(),
            });
        }
        if explained_variance.len() != out {
            return Err(Error::DimensionMismatch {
                context: "PCA explained variance",
                expected: out,
                found: explained_variance.len(),
            });
        }
        let finite = mean
            .iter()
            .chain(projection.iter())
            .chain(explained_variance.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("PCA model".into()));
        }
        let gram = projection.dot(&projection.t());
        for ((i, j), &g) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (g - target).abs() > ORTHONORMAL_TOL {
                return Err(Error::InvalidParameter(format!(
                    "projection rows {i} and {j} not orthonormal (dot {g})"
                )));
            }
        }
        Ok(Self {
            mean: mean.mapv(quantize),
            projection: projection.mapv(quantize),
            explained_variance: explained_variance.mapv(quantize),
            whiten,
        })
    }

    /// Zero mean, identity projection.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(
            Array1::zeros(dim),
            Array2::eye(dim),
            Array1::ones(dim),
            false,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn projection(&self) -> ArrayView2<'_, f64> {
        self.projection.view()
    }

    pub fn explained_variance(&self) -> ArrayView1<'_, f64> {
        self.explained_variance.view()
    }

    pub fn whiten(&self) -> bool {
        self.whiten
    }

    /// Row `i` of the result is `projection · (row_i − mean)`, divided per
    /// component by the standard deviation when whitening.
    pub fn transform(&self, descriptors: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if descriptors.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "PCA transform",
                expected: self.input_dim(),
                found: descriptors.ncols(),
            });
        }
        let centered = &descriptors - &self.mean.view().insert_axis(Axis(0));
        let mut out = centered.dot(&self.projection.t());
        if self.whiten {
            for (mut col, &var) in out.axis_iter_mut(Axis(1)).zip(&self.explained_variance) {
                if var > 0.0 {
                    col.mapv_inplace(|v| v / var.sqrt());
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn write_to(&self, buf: &mut Vec<u8>) -> Result<()> {
        put_u32(buf, to_u32(self.input_dim(), "PCA input dim")?);
        put_u32(buf, to_u32(self.output_dim(), "PCA output dim")?);
        put_u32(buf, self.whiten as u32);
        put_f32s(buf, self.mean.iter());
        put_f32s(buf, self.projection.iter());
        put_f32s(buf, self.explained_variance.iter());
        Ok(())
    }

    pub(crate) fn read_from(r: &mut ByteReader<'_>) -> Result<Self> {
        let input = r.u32()? as usize;
        let out = r.u32()? as usize;
        let whiten = match r.u32()? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::InconsistentBundle(format!("PCA whiten flag {other}")))
            }
        };
        let mean = Array1::from(r.f32s(input, "PCA mean")?);
        let projection = Array2::from_shape_vec((out, input), r.f32s(out * input, "PCA projection")?)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let variance = Array1::from(r.f32s(out, "PCA variance")?);
        Self::new(mean, projection, variance, whiten)
    }
}

pub fn pca_transform(model: &PcaModel, descriptors: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    model.transform(descriptors)
}

/// Streaming mean and co-moment accumulator over rows of fixed width.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    count: usize,
    mean: Array1<f64>,
    comoment: Array2<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: Array1::zeros(dim),
            comoment: Array2::zeros((dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, rows: ArrayView2<'_, f64>) -> Result<()> {
        if rows.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "PCA samples",
                expected: self.dim(),
                found: rows.ncols(),
            });
        }
        if !rows.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("PCA samples".into()));
        }
        for batch in rows.axis_chunks_iter(Axis(0), BATCH_ROWS) {
            self.merge_batch(batch);
        }
        Ok(())
    }

    fn merge_batch(&mut self, batch: ArrayView2<'_, f64>) {
        let nb = batch.nrows();
        if nb == 0 {
            return;
        }
        let batch_mean = batch.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &batch - &batch_mean.view().insert_axis(Axis(0));
        let batch_comoment = centered.t().dot(&centered);
        if self.count == 0 {
            self.count = nb;
            self.mean = batch_mean;
            self.comoment = batch_comoment;
            return;
        }
        let na = self.count as f64;
        let nbf = nb as f64;
        let n = na + nbf;
        let delta = &batch_mean - &self.mean;
        let scale = na * nbf / n;
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                self.comoment[[i, j]] += batch_comoment[[i, j]] + scale * delta[i] * delta[j];
            }
        }
        self.mean.scaled_add(nbf / n, &delta);
        self.count += nb;
    }

    /// Unbiased sample covariance (zero for a single row).
    pub fn covariance(&self) -> Array2<f64> {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        &self.comoment / denom
    }

    pub fn finish(&self, output_dim: usize, whiten: bool) -> Result<PcaModel> {
        let dim = self.dim();
        if output_dim < 1 {
            return Err(Error::InvalidParameter("PCA output dim must be ≥ 1".into()));
        }
        if output_dim > dim {
            return Err(Error::InvalidParameter(format!(
                "PCA output dim {output_dim} exceeds input dim {dim}"
            )));
        }
        if self.count < output_dim {
            return Err(Error::InsufficientData(format!(
                "{} samples for {output_dim} principal components",
                self.count
            )));
        }
        let cov = self.covariance();
        let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut projection = Array2::zeros((output_dim, dim));
        let mut variance = Array1::zeros(output_dim);
        for (row, &idx) in order.iter().take(output_dim).enumerate() {
            let v = eig.eigenvectors.column(idx);
            // Sign convention: largest-magnitude entry (first on ties) is positive.
            let mut pivot = 0;
            for k in 1..dim {
                if v[k].abs() > v[pivot].abs() {
                    pivot = k;
                }
            }
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for k in 0..dim {
                projection[[row, k]] = sign * v[k];
            }
            variance[row] = eig.eigenvalues[idx].max(0.0);
        }
        PcaModel::new(self.mean.clone(), projection, variance, whiten)
    }
}

/// Indices of the rows used for fitting: all of them when `n ≤ cap`, otherwise
/// a seeded uniform sample of `cap` distinct rows in ascending order.
pub fn sample_rows(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

pub fn pca_fit(
    samples: ArrayView2<'_, f64>,
    output_dim: usize,
    options: &PcaOptions,
) -> Result<PcaModel> {
    if options.sample_cap < 1 {
        return Err(Error::InvalidParameter("sample cap must be ≥ 1".into()));
    }
    let mut acc = CovarianceAccumulator::new(samples.ncols());
    if samples.nrows() > options.sample_cap {
        let idx = sample_rows(samples.nrows(), options.sample_cap, options.seed);
        acc.push(samples.select(Axis(0), &idx).view())?;
    } else {
        acc.push(samples)?;
    }
    acc.finish(output_dim, options.whiten)
}
