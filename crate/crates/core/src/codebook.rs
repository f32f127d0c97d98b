//! k-means visual-word codebooks.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{put_f32s, put_u32, quantize, to_u32, ByteReader};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 16;
pub const DEFAULT_MAX_ITERS: usize = 100;
/// Lloyd iterations stop once every centroid moves less than this fraction of its norm.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// `k` centroids of dimension `dim`; row `j` is visual word `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Array2<f64>,
}

impl Codebook {
    pub fn new(centroids: Array2<f64>) -> Result<Self> {
        let (k, dim) = centroids.dim();
        if k == 0 || dim == 0 {
            return Err(Error::InvalidParameter("codebook needs k ≥ 1 and dim ≥ 1".into()));
        }
        if !centroids.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("codebook centroids".into()));
        }
        let centroids = centroids.mapv(quantize);
        let mut seen = HashSet::with_capacity(k);
        for (j, row) in centroids.axis_iter(Axis(0)).enumerate() {
            let bits: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            if !seen.insert(bits) {
                return Err(Error::InvalidParameter(format!(
                    "centroid {j} duplicates an earlier centroid"
                )));
            }
        }
        Ok(Self { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroids(&self) -> ArrayView2<'_, f64> {
        self.centroids.view()
    }

    pub fn centroid(&self, j: usize) -> ArrayView1<'_, f64> {
        self.centroids.row(j)
    }

    /// Index of the nearest centroid (lowest index on ties) and its squared distance.
    pub(crate) fn nearest(&self, x: ArrayView1<'_, f64>) -> (usize, f64) {
        nearest_row(self.centroids.view(), x)
    }

    pub fn assign_nearest(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        self.check_dim(x.len(), "codebook assignment")?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("query descriptor".into()));
        }
        Ok(self.nearest(x).0)
    }

    /// Sum over rows of the squared distance to the nearest centroid.
    pub fn distortion(&self, data: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_dim(data.ncols(), "distortion")?;
        Ok(data.axis_iter(Axis(0)).map(|x| self.nearest(x).1).sum())
    }

    pub(crate) fn check_dim(&self, found: usize, context: &'static str) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    pub(crate) fn write_to(&self, buf: &mut Vec<u8>) -> Result<()> {
        put_u32(buf, to_u32(self.k(), "k")?);
        put_u32(buf, to_u32(self.dim(), "codebook dim")?);
        put_f32s(buf, self.centroids.iter());
        Ok(())
    }

    pub(crate) fn read_from(r: &mut ByteReader<'_>) -> Result<Self> {
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let values = r.f32s(k * dim, "codebook centroids")?;
        let centroids =
            Array2::from_shape_vec((k, dim), values).map_err(|e| Error::Internal(e.to_string()))?;
        Self::new(centroids)
    }
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_row(centroids: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            seed: crate::pca::DEFAULT_SEED,
            tol: CONVERGENCE_TOL,
        }
    }
}

/// A fitted codebook plus the trace of the objective.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Distortion of the optimal assignment at the start of each Lloyd
    /// iteration, followed by the distortion of the final centroids.
    pub distortion_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's algorithm from seeded k-means++ initialization.
pub fn kmeans_fit(
    data: ArrayView2<'_, f64>,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Codebook> {
    let opts = KMeansOptions {
        max_iters,
        seed,
        ..KMeansOptions::default()
    };
    Ok(kmeans_fit_traced(data, k, &opts)?.codebook)
}

pub fn kmeans_fit_traced(
    data: ArrayView2<'_, f64>,
    k: usize,
    opts: &KMeansOptions,
) -> Result<KMeansFit> {
    let (n, dim) = data.dim();
    if k < 1 {
        return Err(Error::InvalidParameter("k must be ≥ 1".into()));
    }
    if opts.max_iters < 1 {
        return Err(Error::InvalidParameter("max_iters must be ≥ 1".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("data dim must be ≥ 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} points for k = {k}")));
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("k-means data".into()));
    }
    if count_distinct_rows(data, k) < k {
        return Err(Error::InsufficientData(format!(
            "insufficient distinct points for k = {k}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centroids = kmeans_plus_plus(data, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        history.push(assign_all(data, centroids.view(), &mut labels, &mut dists));

        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, x) in data.axis_iter(Axis(0)).enumerate() {
            sums.row_mut(labels[i]).scaled_add(1.0, &x);
            counts[labels[i]] += 1;
        }
        let mut updated = Array2::<f64>::zeros((k, dim));
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                updated.row_mut(j).assign(&(&sums.row(j) / count as f64));
            }
        }
        // Empty clusters take the point farthest from its centroid.
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("n ≥ k ≥ 1");
            updated.row_mut(j).assign(&data.row(far));
            dists[far] = 0.0;
        }

        converged = centroids
            .axis_iter(Axis(0))
            .zip(updated.axis_iter(Axis(0)))
            .all(|(old, new)| {
                let shift = squared_distance(old, new).sqrt();
                let norm = old.dot(&old).sqrt();
                shift <= opts.tol * norm
            });
        centroids = updated;
        if converged {
            break;
        }
    }
    history.push(assign_all(data, centroids.view(), &mut labels, &mut dists));

    Ok(KMeansFit {
        codebook: Codebook::new(centroids)?,
        distortion_history: history,
        iterations,
        converged,
    })
}

fn assign_all(
    data: ArrayView2<'_, f64>,
    centroids: ArrayView2<'_, f64>,
    labels: &mut [usize],
    dists: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    for (i, x) in data.axis_iter(Axis(0)).enumerate() {
        let (j, d) = nearest_row(centroids, x);
        labels[i] = j;
        dists[i] = d;
        total += d;
    }
    total
}

/// Counts distinct rows, stopping early once `limit` are found.
fn count_distinct_rows(data: ArrayView2<'_, f64>, limit: usize) -> usize {
    let mut seen = HashSet::new();
    for row in data.axis_iter(Axis(0)) {
        // -0.0 and 0.0 are the same point
        seen.insert(row.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>());
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

fn kmeans_plus_plus(data: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = data
        .axis_iter(Axis(0))
        .map(|x| squared_distance(x, data.row(first)))
        .collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        // Zero-weight points (already chosen) are never selected.
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("enough distinct points");
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = i;
                break;
            }
        }
        centroids.row_mut(j).assign(&data.row(pick));
        for (i, x) in data.axis_iter(Axis(0)).enumerate() {
            d2[i] = d2[i].min(squared_distance(x, data.row(pick)));
        }
    }
    centroids
}

pub fn assign_nearest(codebook: &Codebook, x: ArrayView1<'_, f64>) -> Result<usize> {
    codebook.assign_nearest(x)
}

pub fn distortion(codebook: &Codebook, data: ArrayView2<'_, f64>) -> Result<f64> {
    codebook.distortion(data)
}

/// Convenience for building a codebook from literal rows.
pub fn codebook_from_rows(rows: &[&[f64]]) -> Result<Codebook> {
    let dim = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let centroids = Array2::from_shape_vec((rows.len(), dim), flat)
        .map_err(|_| Error::InvalidParameter("ragged centroid rows".into()))?;
    Codebook::new(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn k_distinct_points_become_the_centroids() {
        let data = array![[0.0, 1.0], [5.0, 5.0], [-3.0, 2.0], [9.0, -1.0]];
        let fit = kmeans_fit_traced(data.view(), 4, &KMeansOptions::default()).unwrap();
        let mut got: Vec<Vec<f64>> = fit
            .codebook
            .centroids()
            .axis_iter(Axis(0))
            .map(|r| r.to_vec())
            .collect();
        let mut want: Vec<Vec<f64>> = data.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert_eq!(fit.codebook.distortion(data.view()).unwrap(), 0.0);
    }

    #[test]
    fn identical_points_are_rejected() {
        let data = Array2::from_elem((10, 3), 1.5);
        assert!(matches!(
            kmeans_fit(data.view(), 2, 100, 1),
            Err(Error::InsufficientData(msg)) if msg.contains("distinct")
        ));
    }

    #[test]
    fn parameter_errors() {
        let data = array![[0.0], [1.0]];
        assert!(matches!(kmeans_fit(data.view(), 3, 10, 1), Err(Error::InsufficientData(_))));
        assert!(matches!(kmeans_fit(data.view(), 0, 10, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn assignment_breaks_ties_low() {
        let cb = codebook_from_rows(&[&[-1.0, 0.0], &[1.0, 0.0], &[0.0, 5.0]]).unwrap();
        assert_eq!(cb.assign_nearest(array![0.0, 0.0].view()).unwrap(), 0);
        assert_eq!(cb.assign_nearest(array![0.0, 5.0].view()).unwrap(), 2);
        assert!(matches!(
            cb.assign_nearest(array![0.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distortion_values() {
        let cb = codebook_from_rows(&[&[0.0, 0.0], &[10.0, 0.0]]).unwrap();
        assert_eq!(cb.distortion(cb.centroids()).unwrap(), 0.0);
        assert_eq!(cb.distortion(array![[3.0, 0.0]].view()).unwrap(), 9.0);
    }

    #[test]
    fn duplicate_centroids_rejected() {
        assert!(codebook_from_rows(&[&[1.0], &[1.0]]).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let data = Array2::from_shape_fn((200, 3), |(i, j)| ((i * 17 + j * 29) % 31) as f64);
        let a = kmeans_fit(data.view(), 5, 100, 9).unwrap();
        let b = kmeans_fit(data.view(), 5, 100, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trips_through_bytes() {
        let cb = codebook_from_rows(&[&[0.1, 0.2], &[-3.5, 1e-3]]).unwrap();
        let mut buf = Vec::new();
        cb.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 4);
        assert_eq!(Codebook::read_from(&mut ByteReader::new(&buf)).unwrap(), cb);
    }
}
