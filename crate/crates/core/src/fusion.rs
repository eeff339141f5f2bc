//! Fusion of mid-level FCV and high-level FC features into one vector.

use crate::error::{Error, Result};
use crate::fisher::{l2_normalize, FcvVector};

/// Block-normalized FCV followed by block-normalized FC features.
#[derive(Debug, Clone, PartialEq)]
pub struct LsDhmVector {
    values: Vec<f64>,
    fcv_len: usize,
    /// Set when the corresponding block had zero norm and was left zero.
    pub fcv_zero: bool,
    pub fc_zero: bool,
}

impl LsDhmVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fcv_block(&self) -> &[f64] {
        &self.values[..self.fcv_len]
    }

    pub fn fc_block(&self) -> &[f64] {
        &self.values[self.fcv_len..]
    }

    /// Index where the FC block starts.
    pub fn boundary(&self) -> usize {
        self.fcv_len
    }
}

/// Normalizes each block to unit ℓ2 norm and concatenates them, FCV first.
pub fn fuse_slices(fcv: &[f64], fc: &[f64]) -> Result<LsDhmVector> {
    if fcv.is_empty() || fc.is_empty() {
        return Err(Error::Empty("fusion block"));
    }
    let mut values = Vec::with_capacity(fcv.len() + fc.len());
    values.extend_from_slice(fcv);
    values.extend_from_slice(fc);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fusion input".into()));
    }
    let (a, b) = values.split_at_mut(fcv.len());
    let fcv_zero = !l2_normalize(a);
    let fc_zero = !l2_normalize(b);
    if fcv_zero {
        log::warn!("fcv block has zero norm; left as zeros");
    }
    if fc_zero {
        log::warn!("fc block has zero norm; left as zeros");
    }
    Ok(LsDhmVector {
        values,
        fcv_len: fcv.len(),
        fcv_zero,
        fc_zero,
    })
}

pub fn fuse(fcv: &FcvVector, fc: &[f64]) -> Result<LsDhmVector> {
    fuse_slices(fcv.values(), fc)
}
