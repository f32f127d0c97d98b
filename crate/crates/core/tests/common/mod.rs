//! Reference implementations the library is checked against. They favor
//! obviousness over speed and share no code with the crate.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid, lowest index on ties.
pub fn brute_nearest(x: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> usize {
    let dists: Vec<f64> = centroids.rows().into_iter().map(|c| sq_dist(x, c)).collect();
    let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    dists.iter().position(|&d| d == best).unwrap()
}

/// Unnormalized VLAD: block j sums `c_j − x` over descriptors nearest to `c_j`.
pub fn brute_vlad(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> Vec<f64> {
    let (k, d) = centroids.dim();
    let mut out = vec![0.0; k * d];
    for row in x.rows() {
        let j = brute_nearest(row, centroids);
        for t in 0..d {
            out[j * d + t] += centroids[[j, t]] - row[t];
        }
    }
    out
}

pub fn brute_distortion(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> f64 {
    x.rows()
        .into_iter()
        .map(|r| sq_dist(r, centroids.row(brute_nearest(r, centroids))))
        .sum()
}

/// Best 2-means solution of 1-D points by trying every bipartition.
/// Returns the two centroids in ascending order.
pub fn exhaustive_two_means(points: &[f64]) -> (f64, f64) {
    let n = points.len();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for mask in 1..(1u32 << n) - 1 {
        let (a, b): (Vec<f64>, Vec<f64>) = {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, &p) in points.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    a.push(p)
                } else {
                    b.push(p)
                }
            }
            (a, b)
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sse = |v: &[f64], m: f64| v.iter().map(|p| (p - m) * (p - m)).sum::<f64>();
        let (ma, mb) = (mean(&a), mean(&b));
        let total = sse(&a, ma) + sse(&b, mb);
        if total < best.0 {
            best = (total, ma.min(mb), ma.max(mb));
        }
    }
    (best.1, best.2)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
/// in descending order and the matching eigenvectors as rows.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[[p, q]] * m[[p, q]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (r, &i) in order.iter().enumerate() {
        vectors.row_mut(r).assign(&v.column(i));
    }
    (values, vectors)
}

/// Sample covariance with the mean removed, divided by `n`.
pub fn covariance(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let mut cov = Array2::zeros((d, d));
    for row in x.rows() {
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    cov / n as f64
}

/// Frobenius norm of the part of `p`'s rows lying outside the row space of
/// orthonormal `q`. Bounds the sine of the largest principal angle.
pub fn subspace_residual(p: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>) -> f64 {
    let coeffs = p.dot(&q.t());
    let projected = coeffs.dot(&q);
    (&p - &projected).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Reference binary soft-margin SVM: sweeps every pair of dual variables
/// until a sweep no longer lowers the dual objective, then picks the bias that
/// minimizes the hinge sum exactly.
pub struct ReferenceSvm {
    pub w: Array1<f64>,
    pub b: f64,
    pub primal: f64,
    pub dual: f64,
}

pub fn reference_svm(x: ArrayView2<'_, f64>, y: &[f64], c: f64) -> ReferenceSvm {
    let n = y.len();
    let k = x.dot(&x.t());
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − Σα
    let mut g = vec![-1.0; n];
    for _sweep in 0..20_000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let eta = k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]];
                if eta <= 1e-15 {
                    continue;
                }
                // α_i += y_i t, α_j −= y_j t
                let slope = y[i] * g[i] - y[j] * g[j];
                let mut t = -slope / eta;
                let (lo_i, hi_i) = if y[i] > 0.0 {
                    (-alpha[i], c - alpha[i])
                } else {
                    (alpha[i] - c, alpha[i])
                };
                let (lo_j, hi_j) = if y[j] > 0.0 {
                    (alpha[j] - c, alpha[j])
                } else {
                    (-alpha[j], c - alpha[j])
                };
                t = t.clamp(lo_i.max(lo_j), hi_i.min(hi_j));
                if t == 0.0 {
                    continue;
                }
                alpha[i] = (alpha[i] + y[i] * t).clamp(0.0, c);
                alpha[j] = (alpha[j] - y[j] * t).clamp(0.0, c);
                for (m, gm) in g.iter_mut().enumerate() {
                    *gm += t * y[m] * (k[[m, i]] - k[[m, j]]);
                }
                moved = moved.max(t.abs());
            }
        }
        if moved < 1e-13 {
            break;
        }
    }
    let mut w = Array1::zeros(x.ncols());
    for i in 0..n {
        w.scaled_add(alpha[i] * y[i], &x.row(i));
    }
    let s = x.dot(&w);
    let hinge = |b: f64| -> f64 {
        s.iter()
            .zip(y)
            .map(|(si, yi)| (1.0 - yi * (si + b)).max(0.0))
            .sum()
    };
    let mut b = 0.0;
    let mut best = hinge(0.0);
    for i in 0..n {
        let cand = y[i] - s[i];
        let h = hinge(cand);
        if h < best {
            best = h;
            b = cand;
        }
    }
    let ww = w.dot(&w);
    ReferenceSvm {
        primal: 0.5 * ww + c * best,
        dual: alpha.iter().sum::<f64>() - 0.5 * ww,
        w,
        b,
    }
}

/// Training accuracy of "closest true cluster center".
pub fn nearest_center_accuracy(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    centers: ArrayView2<'_, f64>,
) -> f64 {
    let hits = x
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &l)| brute_nearest(*r, centers) == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Gaussian clusters of width `sigma` around the vertices of the unit simplex
/// in `classes` dimensions.
pub fn simplex_clusters(
    rng: &mut ChaCha8Rng,
    classes: usize,
    per_class: usize,
    sigma: f64,
) -> (Array2<f64>, Vec<usize>, Array2<f64>) {
    let centers = Array2::<f64>::eye(classes);
    let mut x = Array2::zeros((classes * per_class, classes));
    let mut labels = Vec::new();
    for c in 0..classes {
        for i in 0..per_class {
            let row = c * per_class + i;
            for t in 0..classes {
                let z: f64 = rng.sample(StandardNormal);
                x[[row, t]] = centers[[c, t]] + sigma * z;
            }
            labels.push(c);
        }
    }
    (x, labels, centers)
}
