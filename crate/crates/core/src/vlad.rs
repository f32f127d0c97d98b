//! VLAD residual aggregation.
//!
//! Each descriptor is hard-assigned to its nearest visual word. Block `j` of
//! the code accumulates `c_j − x_i` over the descriptors assigned to word `j`,
//! and the `k` blocks are concatenated in centroid order.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};

/// Concatenated per-word residual sums; block `j` occupies `values[j*dim..(j+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VladCode {
    k: usize,
    dim: usize,
    values: Array1<f64>,
}

impl VladCode {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Self {
            k,
            dim,
            values: Array1::zeros(k * dim),
        }
    }

    pub fn from_values(k: usize, dim: usize, values: Array1<f64>) -> Result<Self> {
        if values.len() != k * dim {
            return Err(Error::DimensionMismatch {
                context: "VLAD code",
                expected: k * dim,
                found: values.len(),
            });
        }
        Ok(Self { k, dim, values })
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

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    pub fn block(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![j * self.dim..(j + 1) * self.dim])
    }

    pub fn normalized(&self, scheme: &NormalizationScheme) -> VladCode {
        normalize(self, scheme)
    }
}

/// Post-processing applied to a code, in order: signed power, per-block L2,
/// then L2 over the whole vector. Zero blocks and vectors pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationScheme {
    /// Exponent `p` in `sign(v)·|v|^p`, within (0, 1].
    pub power: Option<f64>,
    pub intra_block_l2: bool,
    pub global_l2: bool,
}

impl Default for NormalizationScheme {
    fn default() -> Self {
        Self {
            power: None,
            intra_block_l2: false,
            global_l2: true,
        }
    }
}

impl NormalizationScheme {
    pub const NONE: Self = Self {
        power: None,
        intra_block_l2: false,
        global_l2: false,
    };

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.power {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "power normalization exponent {p} not in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Normalizes a flat vector made of `block_len`-sized blocks in place.
    pub(crate) fn apply(&self, values: &mut [f64], block_len: usize) {
        if let Some(p) = self.power {
            for v in values.iter_mut() {
                *v = v.signum() * v.abs().powf(p);
            }
        }
        if self.intra_block_l2 && block_len > 0 {
            for block in values.chunks_mut(block_len) {
                l2_normalize(block);
            }
        }
        if self.global_l2 {
            l2_normalize(values);
        }
    }
}

pub(crate) fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
}

/// Unnormalized VLAD code of `descriptors` (one per row) against `codebook`.
pub fn vlad_encode(descriptors: ArrayView2<'_, f64>, codebook: &Codebook) -> Result<VladCode> {
    codebook.check_dim(descriptors.ncols(), "VLAD descriptors")?;
    let dim = codebook.dim();
    let mut code = VladCode::zeros(codebook.k(), dim);
    // Rows are visited in ascending order so each block sums in a fixed order.
    for x in descriptors.axis_iter(Axis(0)) {
        let (j, _) = codebook.nearest(x);
        let centroid = codebook.centroid(j);
        let mut block = code.values.slice_mut(ndarray::s![j * dim..(j + 1) * dim]);
        for ((acc, &c), &xi) in block.iter_mut().zip(centroid.iter()).zip(x.iter()) {
            *acc += c - xi;
        }
    }
    Ok(code)
}

pub fn normalize(code: &VladCode, scheme: &NormalizationScheme) -> VladCode {
    let mut values = code.values.clone();
    scheme.apply(
        values.as_slice_mut().expect("owned code is contiguous"),
        code.dim,
    );
    VladCode {
        k: code.k,
        dim: code.dim,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::codebook_from_rows;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn descriptor_on_centroid_gives_zero() {
        let cb = codebook_from_rows(&[&[1.0, 2.0], &[5.0, 5.0]]).unwrap();
        let code = vlad_encode(array![[1.0, 2.0]].view(), &cb).unwrap();
        assert_eq!(code.values(), array![0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn residual_points_from_descriptor_to_centroid() {
        // Both descriptors are nearest to (0, 0):
        // block 0 = (0 - 1, 0 - 0) + (0 - 0, 0 - 1) = (-1, -1).
        let cb = codebook_from_rows(&[&[0.0, 0.0], &[2.0, 2.0]]).unwrap();
        let code = vlad_encode(array![[1.0, 0.0], [0.0, 1.0]].view(), &cb).unwrap();
        assert_eq!(code.values(), array![-1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_set_encodes_to_zeros() {
        let cb = codebook_from_rows(&[&[0.0, 0.0], &[2.0, 2.0]]).unwrap();
        let code = vlad_encode(Array2::zeros((0, 2)).view(), &cb).unwrap();
        assert_eq!(code.len(), 4);
        assert!(code.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let cb = codebook_from_rows(&[&[0.0, 0.0]]).unwrap();
        assert!(matches!(
            vlad_encode(Array2::zeros((1, 3)).view(), &cb),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn global_l2() {
        let code = VladCode::from_values(1, 2, array![3.0, 4.0]).unwrap();
        let n = normalize(&code, &NormalizationScheme::default());
        assert_abs_diff_eq!(n.values()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n.values()[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn zero_passes_through_every_scheme() {
        let code = VladCode::zeros(2, 3);
        let all = NormalizationScheme {
            power: Some(0.5),
            intra_block_l2: true,
            global_l2: true,
        };
        for scheme in [all, NormalizationScheme::default(), NormalizationScheme::NONE] {
            assert_eq!(normalize(&code, &scheme), code);
        }
    }

    #[test]
    fn signed_square_root_then_l2() {
        // sqrt(4) = 2, -sqrt(9) = -3, then divide by sqrt(4 + 9).
        let code = VladCode::from_values(1, 2, array![4.0, -9.0]).unwrap();
        let scheme = NormalizationScheme {
            power: Some(0.5),
            intra_block_l2: false,
            global_l2: true,
        };
        let n = normalize(&code, &scheme);
        let r = 13f64.sqrt();
        assert_abs_diff_eq!(n.values()[0], 2.0 / r, epsilon = 1e-15);
        assert_abs_diff_eq!(n.values()[1], -3.0 / r, epsilon = 1e-15);
    }

    #[test]
    fn intra_block_normalizes_each_block() {
        let code = VladCode::from_values(3, 2, array![3.0, 4.0, 0.0, 0.0, 0.0, -2.0]).unwrap();
        let scheme = NormalizationScheme {
            power: None,
            intra_block_l2: true,
            global_l2: false,
        };
        let n = normalize(&code, &scheme);
        assert_eq!(n.values(), array![0.6, 0.8, 0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn scheme_validation() {
        let bad = NormalizationScheme {
            power: Some(1.5),
            ..NormalizationScheme::default()
        };
        assert!(bad.validate().is_err());
        assert!(NormalizationScheme::default().validate().is_ok());
    }

    #[test]
    fn four_thousand_ninety_six_for_default_sizes() {
        let cb = crate::codebook::Codebook::new(Array2::from_shape_fn((16, 256), |(i, j)| {
            (i * 256 + j) as f64
        }))
        .unwrap();
        let code = vlad_encode(Array2::zeros((3, 256)).view(), &cb).unwrap();
        assert_eq!(code.len(), 4096);
    }
}
