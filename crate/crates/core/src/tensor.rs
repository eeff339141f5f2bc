//! Dense feature-map containers and the descriptor view of a map stack.
//!
//! A [`Tensor3`] stores an `H x W x D` stack in row-major `(h, w, d)` order, so
//! the channel fiber at one spatial position is a contiguous slice and turning
//! a map stack into local descriptors is a reshape.

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Empty("tensor with a zero dimension"));
        }
        check_dim(height * width * channels, data.len(), "tensor data length")?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {pos}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "zero tensor dimension");
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds a tensor from values produced internally; callers guarantee the
    /// length and finiteness invariants.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, h: usize, w: usize, d: usize) -> usize {
        (h * self.width + w) * self.channels + d
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, d: usize) -> f64 {
        self.data[self.index(h, w, d)]
    }

    /// Channel vector at spatial position `(h, w)`.
    #[inline]
    pub fn fiber(&self, h: usize, w: usize) -> &[f64] {
        let start = (h * self.width + w) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Euclidean distance between two tensors of equal shape.
    pub fn l2_distance(&self, other: &Tensor3) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
                context: "tensor shape",
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Copy with the half-open rectangle `[h0, h1) x [w0, w1)` set to `fill`
    /// in every channel.
    pub fn occlude(&self, rect: Rect, fill: f64) -> Result<Tensor3> {
        let Rect { h0, w0, h1, w1 } = rect;
        if h0 > h1 || w0 > w1 || h1 > self.height || w1 > self.width || !fill.is_finite() {
            return Err(Error::InvalidRegion {
                h0,
                w0,
                h1,
                w1,
                height: self.height,
                width: self.width,
            });
        }
        let mut out = self.clone();
        for h in h0..h1 {
            for w in w0..w1 {
                let start = out.index(h, w, 0);
                out.data[start..start + self.channels].fill(fill);
            }
        }
        Ok(out)
    }
}

/// Half-open image rectangle `[h0, h1) x [w0, w1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub h0: usize,
    pub w0: usize,
    pub h1: usize,
    pub w1: usize,
}

impl Rect {
    pub fn new(h0: usize, w0: usize, h1: usize, w1: usize) -> Self {
        Self { h0, w0, h1, w1 }
    }

    pub fn area(&self) -> usize {
        self.h1.saturating_sub(self.h0) * self.w1.saturating_sub(self.w0)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.h0 < other.h1 && other.h0 < self.h1 && self.w0 < other.w1 && other.w0 < self.w1
    }

    /// Grows the rectangle by `margin` on every side, clamped to `height x width`.
    pub fn dilate(&self, margin: usize, height: usize, width: usize) -> Rect {
        Rect {
            h0: self.h0.saturating_sub(margin),
            w0: self.w0.saturating_sub(margin),
            h1: (self.h1 + margin).min(height),
            w1: (self.w1 + margin).min(width),
        }
    }
}

/// A set of `T` local descriptors of equal dimension, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    data: Vec<f64>,
    positions: Option<Vec<(usize, usize)>>,
}

impl DescriptorSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("descriptor dimension"));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
                context: "descriptor data is not a multiple of the dimension",
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("descriptor value".into()));
        }
        Ok(Self {
            dim,
            data,
            positions: None,
        })
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut data = Vec::new();
        for row in rows {
            let row = row.as_ref();
            check_dim(dim, row.len(), "descriptor row")?;
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }


    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Spatial `(h, w)` index of each descriptor when it came from a map stack.
    pub fn positions(&self) -> Option<&[(usize, usize)]> {
        self.positions.as_deref()
    }

    /// Appends every descriptor of `other`; spatial indices are dropped.
    pub fn extend(&mut self, other: &DescriptorSet) -> Result<()> {
        check_dim(self.dim, other.dim, "descriptor dimension")?;
        self.data.extend_from_slice(&other.data);
        self.positions = None;
        Ok(())
    }

    pub fn map_rows(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> DescriptorSet {
        let mut data = vec![0.0; self.count() * out_dim];
        for (row, out) in self.iter().zip(data.chunks_exact_mut(out_dim)) {
            f(row, out);
        }
        DescriptorSet {
            dim: out_dim,
            data,
            positions: self.positions.clone(),
        }
    }

    /// Reassembles descriptors that carry spatial indices into an `H x W x dim` stack.
    pub fn to_tensor(&self, height: usize, width: usize) -> Result<Tensor3> {
        check_dim(height * width, self.count(), "descriptor count")?;
        let mut out = vec![0.0; height * width * self.dim];
        match &self.positions {
            Some(positions) => {
                for (row, &(h, w)) in self.iter().zip(positions) {
                    if h >= height || w >= width {
                        return Err(Error::config("descriptor position outside the target grid"));
                    }
                    let start = (h * width + w) * self.dim;
                    out[start..start + self.dim].copy_from_slice(row);
                }
            }
            None => out.copy_from_slice(&self.data),
        }
        Tensor3::new(height, width, self.dim, out)
    }
}

/// Splits a map stack into its `T = H * W` channel fibers; descriptor
/// `h * W + w` is the fiber at `(h, w)`.
pub fn channels_to_descriptors(maps: &Tensor3) -> DescriptorSet {
    let positions = (0..maps.height)
        .flat_map(|h| (0..maps.width).map(move |w| (h, w)))
        .collect();
    DescriptorSet {
        dim: maps.channels,
        data: maps.data.clone(),
        positions: Some(positions),
    }
}

/// Scales `d` so its largest magnitude component is 1. An all-zero vector
/// is left unchanged.
pub fn max_abs_normalize(d: &mut [f64]) {
    let peak = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in d.iter_mut() {
            *v /= peak;
        }
    }
}

pub fn max_abs_normalized(d: &[f64]) -> Vec<f64> {
    let mut out = d.to_vec();
    max_abs_normalize(&mut out);
    out
}

/// Images with class labels; every image has the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    items: Vec<(Tensor3, usize)>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(items: Vec<(Tensor3, usize)>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("dataset needs at least one class"));
        }
        if let Some((first, _)) = items.first() {
            let shape = first.shape();
            for (image, label) in &items {
                if image.shape() != shape {
                    return Err(Error::DimensionMismatch {
                        expected: first.len(),
                        actual: image.len(),
                        context: "dataset image shape",
                    });
                }
                if *label >= num_classes {
                    return Err(Error::LabelOutOfRange {
                        label: *label,
                        num_classes,
                    });
                }
            }
        }
        Ok(Self { items, num_classes })
    }

    pub fn items(&self) -> &[(Tensor3, usize)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.items.first().map(|(img, _)| img.shape())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }

    pub fn images(&self) -> impl Iterator<Item = &Tensor3> {
        self.items.iter().map(|(img, _)| img)
    }

    /// Subset containing only the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            num_classes: self.num_classes,
        }
    }
}
