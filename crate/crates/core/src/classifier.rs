//! One-vs-rest linear SVM.
//!
//! Each binary problem minimizes `½‖w‖² + C·Σ max(0, 1 − yᵢ(w·xᵢ + b))` with
//! an unregularized bias. It is solved in the dual with SMO (maximal-gain
//! second-order working-set selection) over a precomputed linear Gram
//! matrix, which all classes share. After the dual converges, the bias is
//! re-chosen as an exact minimizer of the hinge term for the recovered `w`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{put_bytes, put_f32s, put_f64, put_u32, quantize, to_u32, ByteReader};
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 1.0;
/// Stopping tolerance on the maximal KKT violation of the dual.
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 10_000_000;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Fixes the scan order used to break working-set ties.
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: crate::pca::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    classes: Vec<String>,
    weights: Array2<f64>,
    biases: Array1<f64>,
    c: f64,
}

impl LinearSvmModel {
    pub fn new(classes: Vec<String>, weights: Array2<f64>, biases: Array1<f64>, c: f64) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidParameter("a classifier needs at least 2 classes".into()));
        }
        if weights.nrows() != classes.len() || biases.len() != classes.len() {
            return Err(Error::DimensionMismatch {
                context: "SVM class table",
                expected: classes.len(),
                found: weights.nrows().min(biases.len()),
            });
        }
        if weights.ncols() == 0 {
            return Err(Error::InvalidParameter("SVM feature dim must be ≥ 1".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("SVM C = {c} must be positive")));
        }
        if !weights.iter().chain(biases.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("SVM weights".into()));
        }
        for (i, name) in classes.iter().enumerate() {
            if classes[..i].contains(name) {
                return Err(Error::InvalidParameter(format!("duplicate class {name:?}")));
            }
        }
        Ok(Self {
            classes,
            weights: weights.mapv(quantize),
            biases: biases.mapv(quantize),
            c,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn biases(&self) -> ArrayView1<'_, f64> {
        self.biases.view()
    }

    pub fn regularization_c(&self) -> f64 {
        self.c
    }

    /// `w_c · x + b_c` for each class, in model class order.
    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                context: "SVM input",
                expected: self.feature_dim(),
                found: x.len(),
            });
        }
        Ok(self.weights.dot(&x) + &self.biases)
    }

    /// Index of the highest score, lowest index on ties.
    pub fn predict_index(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        Ok(argmax_first(self.scores(x)?.view()))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<&str> {
        Ok(&self.classes[self.predict_index(x)?])
    }

    pub(crate) fn write_to(&self, buf: &mut Vec<u8>) -> Result<()> {
        put_u32(buf, to_u32(self.classes.len(), "class count")?);
        for name in &self.classes {
            put_bytes(buf, name.as_bytes());
        }
        put_u32(buf, to_u32(self.feature_dim(), "feature dim")?);
        put_f64(buf, self.c);
        put_f32s(buf, self.weights.iter());
        put_f32s(buf, self.biases.iter());
        Ok(())
    }

    pub(crate) fn read_from(r: &mut ByteReader<'_>) -> Result<Self> {
        let n = r.u32()? as usize;
        let mut classes = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            classes.push(r.string("class name")?);
        }
        let d = r.u32()? as usize;
        let c = r.f64()?;
        let weights = Array2::from_shape_vec((n, d), r.f32s(n * d, "SVM weights")?)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let biases = Array1::from(r.f32s(n, "SVM biases")?);
        Self::new(classes, weights, biases, c)
    }
}

fn argmax_first(scores: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Primal objective `½‖w‖² + C·Σ max(0, 1 − yᵢ(w·xᵢ + b))`.
pub fn primal_objective(
    w: ArrayView1<'_, f64>,
    b: f64,
    features: ArrayView2<'_, f64>,
    y: &[f64],
    c: f64,
) -> f64 {
    let margins = features.dot(&w);
    let hinge: f64 = margins
        .iter()
        .zip(y)
        .map(|(&s, &yi)| (1.0 - yi * (s + b)).max(0.0))
        .sum();
    0.5 * w.dot(&w) + c * hinge
}

/// Solution of one binary problem.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub w: Array1<f64>,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub violation: f64,
}

/// SMO over a precomputed Gram matrix `gram = X·Xᵀ`, labels in {+1, −1}.
pub fn train_binary(
    features: ArrayView2<'_, f64>,
    gram: ArrayView2<'_, f64>,
    y: &[f64],
    opts: &SvmOptions,
) -> BinarySolution {
    let n = y.len();
    let c = opts.c;
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    while iterations < opts.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for &t in &order {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_gain = f64::INFINITY;
        if let Some(i) = i_sel {
            for &t in &order {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let diff = gmax + v;
                if diff > 0.0 {
                    let quad = (gram[[i, i]] + gram[[t, t]] - 2.0 * gram[[i, t]]).max(TAU);
                    let gain = -(diff * diff) / quad;
                    if gain < best_gain {
                        best_gain = gain;
                        j_sel = Some(t);
                    }
                }
            }
        }
        violation = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break;
        };
        if violation < opts.tol {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * gram[[t, i]] * di + y[j] * gram[[t, j]] * dj);
        }
    }

    let mut w = Array1::zeros(features.ncols());
    for (i, x) in features.axis_iter(Axis(0)).enumerate() {
        if alpha[i] != 0.0 {
            w.scaled_add(alpha[i] * y[i], &x);
        }
    }
    let rho = dual_rho(&alpha, &grad, y, c);
    let margins = features.dot(&w);
    let b = best_bias(margins.view(), y, -rho);
    BinarySolution {
        w,
        b,
        alpha,
        iterations,
        violation,
    }
}

/// Threshold from the dual: mean of `yᵢGᵢ` over free variables, or the
/// midpoint of the feasible interval when none are free.
fn dual_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

fn hinge_sum(margins: ArrayView1<'_, f64>, y: &[f64], b: f64) -> f64 {
    margins
        .iter()
        .zip(y)
        .map(|(&s, &yi)| (1.0 - yi * (s + b)).max(0.0))
        .sum()
}

/// Returns `current` unless another bias gives a strictly smaller hinge sum,
/// in which case an exact minimizer is returned.
///
/// The hinge sum is convex and piecewise linear in `b` with breakpoints
/// `yᵢ − sᵢ`; its right slope at `b` is
/// `#{negatives with breakpoint ≤ b} − #{positives with breakpoint > b}`.
fn best_bias(margins: ArrayView1<'_, f64>, y: &[f64], current: f64) -> f64 {
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&s, &yi) in margins.iter().zip(y) {
        if yi > 0.0 {
            pos.push(yi - s);
        } else {
            neg.push(yi - s);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    candidates.sort_by(f64::total_cmp);
    let right_slope = |b: f64| {
        let neg_le = neg.partition_point(|&v| v <= b) as i64;
        let pos_gt = (pos.len() - pos.partition_point(|&v| v <= b)) as i64;
        neg_le - pos_gt
    };
    let at = candidates.partition_point(|&b| right_slope(b) < 0);
    let Some(&minimizer) = candidates.get(at) else {
        return current;
    };
    let best = hinge_sum(margins, y, minimizer);
    let here = hinge_sum(margins, y, current);
    if here <= best + 1e-12 * (1.0 + best) {
        current
    } else {
        minimizer
    }
}

/// Trains one-vs-rest; classes are ordered by first appearance in `labels`.
pub fn svm_train<S: AsRef<str>>(
    features: ArrayView2<'_, f64>,
    labels: &[S],
    c: f64,
    seed: u64,
) -> Result<LinearSvmModel> {
    let opts = SvmOptions {
        c,
        seed,
        ..SvmOptions::default()
    };
    svm_train_with(features, labels, &opts)
}

pub fn svm_train_with<S: AsRef<str>>(
    features: ArrayView2<'_, f64>,
    labels: &[S],
    opts: &SvmOptions,
) -> Result<LinearSvmModel> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("no training examples".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "SVM labels",
            expected: n,
            found: labels.len(),
        });
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("SVM C = {} must be positive", opts.c)));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("SVM features".into()));
    }
    let mut classes: Vec<String> = Vec::new();
    for l in labels {
        if !classes.iter().any(|c| c == l.as_ref()) {
            classes.push(l.as_ref().to_string());
        }
    }
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.pop().unwrap_or_default()));
    }

    let gram = features.dot(&features.t());
    let mut weights = Array2::zeros((classes.len(), features.ncols()));
    let mut biases = Array1::zeros(classes.len());
    for (ci, class) in classes.iter().enumerate() {
        let y: Vec<f64> = labels
            .iter()
            .map(|l| if l.as_ref() == class { 1.0 } else { -1.0 })
            .collect();
        let sol = train_binary(features, gram.view(), &y, opts);
        weights.row_mut(ci).assign(&sol.w);
        biases[ci] = sol.b;
    }
    LinearSvmModel::new(classes, weights, biases, opts.c)
}

pub fn svm_scores(model: &LinearSvmModel, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    model.scores(x)
}

pub fn svm_predict<'m>(model: &'m LinearSvmModel, x: ArrayView1<'_, f64>) -> Result<&'m str> {
    model.predict(x)
}
