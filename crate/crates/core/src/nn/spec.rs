//! Network architecture descriptions and shape inference.

use crate::error::{Error, Result};

/// Kernel size of the auxiliary head's convolution.
pub const HEAD_CONV_KERNEL: usize = 3;
pub const HEAD_POOL_KERNEL: usize = 3;
pub const HEAD_POOL_STRIDE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Same-padded convolution followed by ReLU. The kernel size must be odd.
    Conv {
        kernel: usize,
        stride: usize,
        out_channels: usize,
    },
    /// Unpadded max pooling; output size is `(n - kernel) / stride + 1`.
    MaxPool { kernel: usize, stride: usize },
    /// Fully-connected layer followed by ReLU.
    FullyConnected { out: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trunk layers plus the linear score layer (the main head) mapping the last
/// layer's flattened output to `num_classes` scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvNetSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

/// Local convolutional supervision head: 3x3/s1 conv + ReLU, 3x3/s2 max
/// pool, then a linear map from the flattened pooled maps straight to class
/// scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LcsHeadSpec {
    pub attach_layer: usize,
    pub aux_channels: usize,
}

pub(crate) fn conv_out(n: usize, kernel: usize, stride: usize) -> usize {
    let pad = (kernel - 1) / 2;
    (n + 2 * pad - kernel) / stride + 1
}

pub(crate) fn pool_out(n: usize, kernel: usize, stride: usize) -> Option<usize> {
    (n >= kernel).then(|| (n - kernel) / stride + 1)
}

impl ConvNetSpec {
    /// Desk-scale default: 32x32x3 input, conv5x5/16, pool2/2, conv3x3/32,
    /// pool2/2, fc64.
    pub fn desk(num_classes: usize) -> Self {
        Self::desk_with(Shape::new(32, 32, 3), 64, num_classes)
    }

    pub fn desk_with(input: Shape, fc_width: usize, num_classes: usize) -> Self {
        Self {
            input,
            layers: vec![
                LayerSpec::Conv {
                    kernel: 5,
                    stride: 1,
                    out_channels: 16,
                },
                LayerSpec::MaxPool {
                    kernel: 2,
                    stride: 2,
                },
                LayerSpec::Conv {
                    kernel: 3,
                    stride: 1,
                    out_channels: 32,
                },
                LayerSpec::MaxPool {
                    kernel: 2,
                    stride: 2,
                },
                LayerSpec::FullyConnected { out: fc_width },
            ],
            num_classes,
        }
    }

    /// Output shape of every layer, validating the architecture.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.is_empty() {
            return Err(Error::config("network input has a zero dimension"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("network needs at least one class"));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        let mut seen_fc = false;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    out_channels,
                } => {
                    if seen_fc {
                        return Err(Error::config(format!("layer {i}: conv after a fully-connected layer")));
                    }
                    if kernel == 0 || kernel % 2 == 0 || stride == 0 || out_channels == 0 {
                        return Err(Error::config(format!(
                            "layer {i}: conv needs an odd kernel, positive stride and channels"
                        )));
                    }
                    Shape::new(
                        conv_out(cur.height, kernel, stride),
                        conv_out(cur.width, kernel, stride),
                        out_channels,
                    )
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    if seen_fc {
                        return Err(Error::config(format!("layer {i}: pooling after a fully-connected layer")));
                    }
                    if kernel == 0 || stride == 0 {
                        return Err(Error::config(format!("layer {i}: pooling needs positive kernel and stride")));
                    }
                    match (
                        pool_out(cur.height, kernel, stride),
                        pool_out(cur.width, kernel, stride),
                    ) {
                        (Some(h), Some(w)) => Shape::new(h, w, cur.channels),
                        _ => {
                            return Err(Error::config(format!(
                                "layer {i}: {kernel}x{kernel} pooling on {}x{} maps",
                                cur.height, cur.width
                            )))
                        }
                    }
                }
                LayerSpec::FullyConnected { out } => {
                    if out == 0 {
                        return Err(Error::config(format!("layer {i}: fully-connected width is zero")));
                    }
                    seen_fc = true;
                    Shape::new(1, 1, out)
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Index of the last fully-connected layer, whose activations are the FC features.
    pub fn last_fc(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::FullyConnected { .. }))
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Conv { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

impl LcsHeadSpec {
    pub fn new(attach_layer: usize, aux_channels: usize) -> Self {
        Self {
            attach_layer,
            aux_channels,
        }
    }

    /// Shapes of the head's conv maps and pooled maps.
    pub fn shapes(&self, spec: &ConvNetSpec, trunk: &[Shape]) -> Result<(Shape, Shape)> {
        match spec.layers.get(self.attach_layer) {
            Some(LayerSpec::Conv { .. }) => {}
            _ => {
                return Err(Error::config(format!(
                    "lcs head attach layer {} is not a conv layer",
                    self.attach_layer
                )))
            }
        }
        if self.aux_channels == 0 {
            return Err(Error::config("lcs head needs at least one channel"));
        }
        let at = trunk[self.attach_layer];
        let conv = Shape::new(at.height, at.width, self.aux_channels);
        match (
            pool_out(conv.height, HEAD_POOL_KERNEL, HEAD_POOL_STRIDE),
            pool_out(conv.width, HEAD_POOL_KERNEL, HEAD_POOL_STRIDE),
        ) {
            (Some(h), Some(w)) => Ok((conv, Shape::new(h, w, self.aux_channels))),
            _ => Err(Error::config(format!(
                "lcs head pooling does not fit {}x{} maps",
                conv.height, conv.width
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_shapes() {
        let spec = ConvNetSpec::desk(10);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[0], Shape::new(32, 32, 16));
        assert_eq!(shapes[1], Shape::new(16, 16, 16));
        assert_eq!(shapes[2], Shape::new(16, 16, 32));
        assert_eq!(shapes[3], Shape::new(8, 8, 32));
        assert_eq!(shapes[4], Shape::new(1, 1, 64));
        let head = LcsHeadSpec::new(2, 16);
        let (conv, pooled) = head.shapes(&spec, &shapes).unwrap();
        assert_eq!(conv, Shape::new(16, 16, 16));
        assert_eq!(pooled, Shape::new(7, 7, 16));
    }

    #[test]
    fn rejects_invalid_architectures() {
        let mut spec = ConvNetSpec::desk(3);
        spec.input = Shape::new(2, 2, 3);
        assert!(spec.shapes().is_err());

        let spec = ConvNetSpec {
            input: Shape::new(8, 8, 1),
            layers: vec![
                LayerSpec::FullyConnected { out: 4 },
                LayerSpec::Conv {
                    kernel: 3,
                    stride: 1,
                    out_channels: 2,
                },
            ],
            num_classes: 2,
        };
        assert!(spec.shapes().is_err());

        let spec = ConvNetSpec::desk(3);
        let shapes = spec.shapes().unwrap();
        assert!(LcsHeadSpec::new(1, 8).shapes(&spec, &shapes).is_err());
        assert!(LcsHeadSpec::new(9, 8).shapes(&spec, &shapes).is_err());
    }
}
