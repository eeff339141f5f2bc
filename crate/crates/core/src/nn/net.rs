//! Convolutional network with a main score layer and optional local
//! convolutional supervision (LCS) heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{linear_backward, linear_forward, ConvGeom, PoolGeom};
use super::loss::hinge_loss_grad;
use super::spec::{
    ConvNetSpec, LayerSpec, LcsHeadSpec, Shape, HEAD_CONV_KERNEL, HEAD_POOL_KERNEL,
    HEAD_POOL_STRIDE,
};
use crate::error::{check_dim, Error, Result};
use crate::tensor::Tensor3;

/// Weights and biases of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(n_weights: usize, n_bias: usize) -> Self {
        Self {
            weights: vec![0.0; n_weights],
            bias: vec![0.0; n_bias],
        }
    }

    fn glorot(rng: &mut ChaCha8Rng, n_out: usize, fan_in: usize, fan_out: usize, n_weights: usize) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weights: (0..n_weights).map(|_| rng.random_range(-limit..=limit)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.len(), self.bias.len())
    }

    fn add(&mut self, other: &Dense) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub conv: Dense,
    pub score: Dense,
}

/// All learnable parameters: trunk layers (`None` for pooling), the main
/// score layer and the auxiliary heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Option<Dense>>,
    pub score: Dense,
    pub heads: Vec<HeadParams>,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            layers: self.layers.iter().map(|l| l.as_ref().map(Dense::zeros_like)).collect(),
            score: self.score.zeros_like(),
            heads: self
                .heads
                .iter()
                .map(|h| HeadParams {
                    conv: h.conv.zeros_like(),
                    score: h.score.zeros_like(),
                })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &Params) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.add(b);
            }
        }
        self.score.add(&other.score);
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            a.conv.add(&b.conv);
            a.score.add(&b.score);
        }
    }

    /// Named parameter blocks in a fixed order: trunk layers, main score
    /// layer, then each head's conv and score layers.
    pub fn blocks(&self) -> Vec<(String, &Dense)> {
        let mut out: Vec<(String, &Dense)> = self
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|d| (format!("layer{i}"), d)))
            .collect();
        out.push(("score".into(), &self.score));
        for (a, h) in self.heads.iter().enumerate() {
            out.push((format!("head{a}.conv"), &h.conv));
            out.push((format!("head{a}.score"), &h.score));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = self.layers.iter_mut().filter_map(|l| l.as_mut()).collect();
        out.push(&mut self.score);
        for h in self.heads.iter_mut() {
            out.push(&mut h.conv);
            out.push(&mut h.score);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.blocks().iter().map(|(_, d)| d.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, d)| d.weights.iter().chain(&d.bias).all(|v| v.is_finite()))
    }
}

/// Activations of one auxiliary head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMaps {
    pub conv: Tensor3,
    pub pooled: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Post-activation output of every trunk layer (fully-connected layers as `1 x 1 x n`).
    pub maps: Vec<Tensor3>,
    pub fc_features: Option<Vec<f64>>,
    pub main_scores: Vec<f64>,
    pub aux_scores: Vec<Vec<f64>>,
    pub head_maps: Vec<HeadMaps>,
}

/// Per-sample loss terms of the joint objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub main: f64,
    /// Unweighted auxiliary hinge losses; `NaN` for heads that were skipped.
    pub aux: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    spec: ConvNetSpec,
    heads: Vec<LcsHeadSpec>,
    shapes: Vec<Shape>,
    head_shapes: Vec<(Shape, Shape)>,
    params: Params,
}

fn layer_param_sizes(spec: &ConvNetSpec, shapes: &[Shape]) -> Vec<Option<(usize, usize, usize, usize)>> {
    // (weights, bias, fan_in, fan_out)
    let mut prev = spec.input;
    spec.layers
        .iter()
        .zip(shapes)
        .map(|(layer, &out)| {
            let sizes = match *layer {
                LayerSpec::Conv {
                    kernel,
                    out_channels,
                    ..
                } => {
                    let fan_in = kernel * kernel * prev.channels;
                    Some((out_channels * fan_in, out_channels, fan_in, kernel * kernel * out_channels))
                }
                LayerSpec::MaxPool { .. } => None,
                LayerSpec::FullyConnected { out: n } => Some((n * prev.len(), n, prev.len(), n)),
            };
            prev = out;
            sizes
        })
        .collect()
}

impl ConvNet {
    /// Builds a network with seeded Glorot-uniform weights and zero biases.
    /// The trunk and each head draw from separate random streams, so adding
    /// a head never changes the trunk initialization.
    pub fn new(spec: ConvNetSpec, heads: Vec<LcsHeadSpec>, seed: u64) -> Result<Self> {
        let (shapes, head_shapes) = Self::validate(&spec, &heads)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_param_sizes(&spec, &shapes)
            .into_iter()
            .map(|s| s.map(|(nw, nb, fi, fo)| Dense::glorot(&mut rng, nb, fi, fo, nw)))
            .collect();
        let feat = Self::score_input_len(&spec, &shapes);
        let score = Dense::glorot(&mut rng, spec.num_classes, feat, spec.num_classes, feat * spec.num_classes);
        let heads_params = heads
            .iter()
            .zip(&head_shapes)
            .enumerate()
            .map(|(a, (head, (_, pooled)))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + a as u64);
                let in_ch = shapes[head.attach_layer].channels;
                let k2 = HEAD_CONV_KERNEL * HEAD_CONV_KERNEL;
                let conv = Dense::glorot(
                    &mut rng,
                    head.aux_channels,
                    k2 * in_ch,
                    k2 * head.aux_channels,
                    head.aux_channels * k2 * in_ch,
                );
                let score = Dense::glorot(
                    &mut rng,
                    spec.num_classes,
                    pooled.len(),
                    spec.num_classes,
                    pooled.len() * spec.num_classes,
                );
                HeadParams { conv, score }
            })
            .collect();
        Ok(Self {
            spec,
            heads,
            shapes,
            head_shapes,
            params: Params {
                layers,
                score,
                heads: heads_params,
            },
        })
    }

    /// Network with every parameter set to zero.
    pub fn zeros(spec: ConvNetSpec, heads: Vec<LcsHeadSpec>) -> Result<Self> {
        let mut net = Self::new(spec, heads, 0)?;
        for block in net.params.blocks_mut() {
            block.weights.fill(0.0);
            block.bias.fill(0.0);
        }
        Ok(net)
    }

    pub fn from_params(spec: ConvNetSpec, heads: Vec<LcsHeadSpec>, params: Params) -> Result<Self> {
        let template = Self::zeros(spec, heads)?;
        let expected = template.params.blocks();
        let got = params.blocks();
        check_dim(expected.len(), got.len(), "parameter block count")?;
        for ((_, e), (_, g)) in expected.iter().zip(&got) {
            check_dim(e.weights.len(), g.weights.len(), "parameter block weights")?;
            check_dim(e.bias.len(), g.bias.len(), "parameter block bias")?;
        }
        if params.layers.len() != template.params.layers.len()
            || params
                .layers
                .iter()
                .zip(&template.params.layers)
                .any(|(a, b)| a.is_some() != b.is_some())
        {
            return Err(Error::config("parameter layers do not match the architecture"));
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self { params, ..template })
    }

    fn validate(spec: &ConvNetSpec, heads: &[LcsHeadSpec]) -> Result<(Vec<Shape>, Vec<(Shape, Shape)>)> {
        let shapes = spec.shapes()?;
        let head_shapes = heads
            .iter()
            .map(|h| h.shapes(spec, &shapes))
            .collect::<Result<Vec<_>>>()?;
        Ok((shapes, head_shapes))
    }

    fn score_input_len(spec: &ConvNetSpec, shapes: &[Shape]) -> usize {
        shapes.last().copied().unwrap_or(spec.input).len()
    }

    pub fn spec(&self) -> &ConvNetSpec {
        &self.spec
    }

    pub fn heads(&self) -> &[LcsHeadSpec] {
        &self.heads
    }

    /// Output shape of every trunk layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn layer_input_shape(&self, i: usize) -> Shape {
        if i == 0 {
            self.spec.input
        } else {
            self.shapes[i - 1]
        }
    }

    fn conv_geom(&self, i: usize) -> ConvGeom {
        match self.spec.layers[i] {
            LayerSpec::Conv { kernel, stride, .. } => ConvGeom {
                input: self.layer_input_shape(i),
                output: self.shapes[i],
                kernel,
                stride,
            },
            _ => unreachable!("layer {i} is not a conv layer"),
        }
    }

    fn pool_geom(&self, i: usize) -> PoolGeom {
        match self.spec.layers[i] {
            LayerSpec::MaxPool { kernel, stride } => PoolGeom {
                input: self.layer_input_shape(i),
                output: self.shapes[i],
                kernel,
                stride,
            },
            _ => unreachable!("layer {i} is not a pooling layer"),
        }
    }

    fn head_geoms(&self, a: usize) -> (ConvGeom, PoolGeom) {
        let head = self.heads[a];
        let (conv, pooled) = self.head_shapes[a];
        (
            ConvGeom {
                input: self.shapes[head.attach_layer],
                output: conv,
                kernel: HEAD_CONV_KERNEL,
                stride: 1,
            },
            PoolGeom {
                input: conv,
                output: pooled,
                kernel: HEAD_POOL_KERNEL,
                stride: HEAD_POOL_STRIDE,
            },
        )
    }

    fn check_image(&self, image: &Tensor3) -> Result<()> {
        let s = self.spec.input;
        if image.shape() != (s.height, s.width, s.channels) {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                actual: image.len(),
                context: "network input shape",
            });
        }
        Ok(())
    }

    fn run_layer(&self, i: usize, input: &[f64]) -> Vec<f64> {
        let params = &self.params.layers[i];
        match self.spec.layers[i] {
            LayerSpec::Conv { .. } => {
                let p = params.as_ref().expect("conv params");
                self.conv_geom(i).forward_relu(input, &p.weights, &p.bias)
            }
            LayerSpec::MaxPool { .. } => self.pool_geom(i).forward(input),
            LayerSpec::FullyConnected { .. } => {
                let p = params.as_ref().expect("fc params");
                linear_forward(input, &p.weights, &p.bias, true)
            }
        }
    }

    fn run_head(&self, a: usize, attach: &[f64]) -> (HeadMaps, Vec<f64>) {
        let (conv_geom, pool_geom) = self.head_geoms(a);
        let p = &self.params.heads[a];
        let conv = conv_geom.forward_relu(attach, &p.conv.weights, &p.conv.bias);
        let pooled = pool_geom.forward(&conv);
        let scores = linear_forward(&pooled, &p.score.weights, &p.score.bias, false);
        let maps = HeadMaps {
            conv: Tensor3::from_raw(conv_geom.output.height, conv_geom.output.width, conv_geom.output.channels, conv),
            pooled: Tensor3::from_raw(pool_geom.output.height, pool_geom.output.width, pool_geom.output.channels, pooled),
        };
        (maps, scores)
    }

    fn forward_impl(&self, image: &Tensor3, active: &[bool]) -> Result<ForwardOutput> {
        self.check_image(image)?;
        let mut maps: Vec<Tensor3> = Vec::with_capacity(self.shapes.len());
        for i in 0..self.shapes.len() {
            let input = if i == 0 { image.data() } else { maps[i - 1].data() };
            let out = self.run_layer(i, input);
            let s = self.shapes[i];
            maps.push(Tensor3::from_raw(s.height, s.width, s.channels, out));
        }
        let last = maps.last().map(|m| m.data()).unwrap_or(image.data());
        let main_scores = linear_forward(last, &self.params.score.weights, &self.params.score.bias, false);
        let fc_features = self.spec.last_fc().map(|i| maps[i].data().to_vec());

        let mut aux_scores = Vec::with_capacity(self.heads.len());
        let mut head_maps = Vec::with_capacity(self.heads.len());
        for (a, head) in self.heads.iter().enumerate() {
            if active[a] {
                let (hm, scores) = self.run_head(a, maps[head.attach_layer].data());
                head_maps.push(hm);
                aux_scores.push(scores);
            } else {
                let (conv, pooled) = self.head_shapes[a];
                head_maps.push(HeadMaps {
                    conv: Tensor3::zeros(conv.height, conv.width, conv.channels),
                    pooled: Tensor3::zeros(pooled.height, pooled.width, pooled.channels),
                });
                aux_scores.push(vec![f64::NAN; self.spec.num_classes]);
            }
        }
        if main_scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network scores".into()));
        }
        Ok(ForwardOutput {
            maps,
            fc_features,
            main_scores,
            aux_scores,
            head_maps,
        })
    }

    /// Full evaluation, including every auxiliary head.
    pub fn forward(&self, image: &Tensor3) -> Result<ForwardOutput> {
        self.forward_impl(image, &vec![true; self.heads.len()])
    }

    /// Post-activation maps of a conv or pooling layer.
    pub fn extract_conv(&self, image: &Tensor3, layer: usize) -> Result<Tensor3> {
        match self.spec.layers.get(layer) {
            Some(LayerSpec::Conv { .. }) | Some(LayerSpec::MaxPool { .. }) => {}
            _ => {
                return Err(Error::config(format!(
                    "layer {layer} is not a conv or pooling layer"
                )))
            }
        }
        self.check_image(image)?;
        let mut cur = image.data().to_vec();
        for i in 0..=layer {
            cur = self.run_layer(i, &cur);
        }
        let s = self.shapes[layer];
        Ok(Tensor3::from_raw(s.height, s.width, s.channels, cur))
    }

    /// Activations of the last fully-connected layer before the score layer.
    pub fn extract_fc(&self, image: &Tensor3) -> Result<Vec<f64>> {
        let last = self
            .spec
            .last_fc()
            .ok_or_else(|| Error::config("network has no fully-connected layer"))?;
        self.check_image(image)?;
        let mut cur = image.data().to_vec();
        for i in 0..=last {
            cur = self.run_layer(i, &cur);
        }
        Ok(cur)
    }

    /// Loss terms and parameter gradients of the joint objective for one
    /// sample. Heads with a zero weight are not evaluated and get zero
    /// gradients.
    pub fn sample_gradients(&self, image: &Tensor3, label: usize, lambdas: &[f64]) -> Result<(LossTerms, Params)> {
        check_dim(self.heads.len(), lambdas.len(), "one auxiliary weight per head")?;
        if label >= self.spec.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.spec.num_classes,
            });
        }
        let active: Vec<bool> = lambdas.iter().map(|&l| l != 0.0).collect();
        let fwd = self.forward_impl(image, &active)?;
        let mut grads = self.params.zeros_like();

        let (main_loss, mut d_scores) = hinge_loss_grad(&fwd.main_scores, label)?;
        let last_in = fwd.maps.last().map(|m| m.data()).unwrap_or(image.data());
        let mut d_x = vec![0.0; last_in.len()];
        linear_backward(
            last_in,
            &fwd.main_scores,
            &mut d_scores,
            false,
            &self.params.score.weights,
            &mut grads.score.weights,
            &mut grads.score.bias,
            Some(&mut d_x),
        );

        let mut aux_losses = vec![f64::NAN; self.heads.len()];
        let mut total = main_loss;
        for i in (0..self.shapes.len()).rev() {
            for (a, head) in self.heads.iter().enumerate() {
                if head.attach_layer != i || !active[a] {
                    continue;
                }
                let (loss, d_attach) =
                    self.head_backward(a, fwd.maps[i].data(), &fwd, label, lambdas[a], &mut grads)?;
                aux_losses[a] = loss;
                total += lambdas[a] * loss;
                for (d, h) in d_x.iter_mut().zip(&d_attach) {
                    *d += h;
                }
            }

            let input = if i == 0 { image.data() } else { fwd.maps[i - 1].data() };
            let output = fwd.maps[i].data();
            let mut d_in = if i > 0 { Some(vec![0.0; input.len()]) } else { None };
            match self.spec.layers[i] {
                LayerSpec::Conv { .. } => {
                    let p = self.params.layers[i].as_ref().expect("conv params");
                    let g = grads.layers[i].as_mut().expect("conv grads");
                    self.conv_geom(i).backward_relu(
                        input,
                        output,
                        &mut d_x,
                        &p.weights,
                        &mut g.weights,
                        &mut g.bias,
                        d_in.as_deref_mut(),
                    );
                }
                LayerSpec::MaxPool { .. } => {
                    if let Some(d_in) = d_in.as_deref_mut() {
                        self.pool_geom(i).backward(input, &d_x, d_in);
                    }
                }
                LayerSpec::FullyConnected { .. } => {
                    let p = self.params.layers[i].as_ref().expect("fc params");
                    let g = grads.layers[i].as_mut().expect("fc grads");
                    linear_backward(
                        input,
                        output,
                        &mut d_x,
                        true,
                        &p.weights,
                        &mut g.weights,
                        &mut g.bias,
                        d_in.as_deref_mut(),
                    );
                }
            }
            match d_in {
                Some(d) => d_x = d,
                None => break,
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        Ok((
            LossTerms {
                main: main_loss,
                aux: aux_losses,
                total,
            },
            grads,
        ))
    }

    fn head_backward(
        &self,
        a: usize,
        attach: &[f64],
        fwd: &ForwardOutput,
        label: usize,
        lambda: f64,
        grads: &mut Params,
    ) -> Result<(f64, Vec<f64>)> {
        let (conv_geom, pool_geom) = self.head_geoms(a);
        let p = &self.params.heads[a];
        let g = &mut grads.heads[a];
        let maps = &fwd.head_maps[a];
        let (loss, mut d_scores) = hinge_loss_grad(&fwd.aux_scores[a], label)?;
        d_scores.iter_mut().for_each(|d| *d *= lambda);

        let mut d_pooled = vec![0.0; maps.pooled.len()];
        linear_backward(
            maps.pooled.data(),
            &fwd.aux_scores[a],
            &mut d_scores,
            false,
            &p.score.weights,
            &mut g.score.weights,
            &mut g.score.bias,
            Some(&mut d_pooled),
        );
        let mut d_conv = vec![0.0; maps.conv.len()];
        pool_geom.backward(maps.conv.data(), &d_pooled, &mut d_conv);
        let mut d_attach = vec![0.0; attach.len()];
        conv_geom.backward_relu(
            attach,
            maps.conv.data(),
            &mut d_conv,
            &p.conv.weights,
            &mut g.conv.weights,
            &mut g.conv.bias,
            Some(&mut d_attach),
        );
        Ok((loss, d_attach))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ConvNetSpec {
        ConvNetSpec {
            input: Shape::new(8, 8, 2),
            layers: vec![
                LayerSpec::Conv {
                    kernel: 3,
                    stride: 1,
                    out_channels: 3,
                },
                LayerSpec::MaxPool {
                    kernel: 2,
                    stride: 2,
                },
                LayerSpec::Conv {
                    kernel: 3,
                    stride: 1,
                    out_channels: 4,
                },
                LayerSpec::FullyConnected { out: 5 },
            ],
            num_classes: 3,
        }
    }

    fn image(seed: u64, s: Shape) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::new(s.height, s.width, s.channels, (0..s.len()).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = ConvNet::zeros(small_spec(), vec![LcsHeadSpec::new(2, 2)]).unwrap();
        let out = net.forward(&image(1, net.spec().input)).unwrap();
        assert!(out.main_scores.iter().all(|&s| s == 0.0));
        assert!(out.aux_scores[0].iter().all(|&s| s == 0.0));
        assert!(out.maps.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
        assert_eq!(out.fc_features.unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn identity_one_by_one_conv() {
        let spec = ConvNetSpec {
            input: Shape::new(4, 5, 3),
            layers: vec![LayerSpec::Conv {
                kernel: 1,
                stride: 1,
                out_channels: 3,
            }],
            num_classes: 2,
        };
        let mut net = ConvNet::zeros(spec, vec![]).unwrap();
        let w = &mut net.params_mut().layers[0].as_mut().unwrap().weights;
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let img = image(3, net.spec().input);
        let out = net.forward(&img).unwrap();
        assert_eq!(out.maps[0], img);
        assert_eq!(net.extract_conv(&img, 0).unwrap(), img);
    }

    #[test]
    fn extraction_matches_forward_bitwise() {
        let net = ConvNet::new(small_spec(), vec![LcsHeadSpec::new(2, 2)], 5).unwrap();
        let img = image(6, net.spec().input);
        let out = net.forward(&img).unwrap();
        for layer in [0, 1, 2] {
            assert_eq!(net.extract_conv(&img, layer).unwrap(), out.maps[layer]);
        }
        assert_eq!(net.extract_fc(&img).unwrap(), out.fc_features.unwrap());
        assert!(net.extract_conv(&img, 3).is_err());
        assert!(net.extract_conv(&img, 10).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let net = ConvNet::new(small_spec(), vec![LcsHeadSpec::new(0, 2)], 9).unwrap();
        let img = image(2, net.spec().input);
        assert_eq!(net.forward(&img).unwrap(), net.forward(&img).unwrap());
    }

    #[test]
    fn no_fc_layer_is_an_error() {
        let spec = ConvNetSpec {
            input: Shape::new(4, 4, 1),
            layers: vec![LayerSpec::Conv {
                kernel: 3,
                stride: 1,
                out_channels: 2,
            }],
            num_classes: 2,
        };
        let net = ConvNet::new(spec, vec![], 0).unwrap();
        assert!(net.extract_fc(&image(0, net.spec().input)).is_err());
    }

    #[test]
    fn wrong_image_shape_is_rejected() {
        let net = ConvNet::new(small_spec(), vec![], 0).unwrap();
        assert!(net.forward(&Tensor3::zeros(8, 8, 3)).is_err());
    }

    #[test]
    fn zero_weight_head_gets_no_gradient() {
        let net = ConvNet::new(small_spec(), vec![LcsHeadSpec::new(2, 2)], 4).unwrap();
        let img = image(8, net.spec().input);
        let (_, grads) = net.sample_gradients(&img, 1, &[0.0]).unwrap();
        let head = &grads.heads[0];
        assert!(head.conv.weights.iter().chain(&head.conv.bias).all(|&g| g == 0.0));
        assert!(head.score.weights.iter().chain(&head.score.bias).all(|&g| g == 0.0));
        let (_, active) = net.sample_gradients(&img, 1, &[0.5]).unwrap();
        assert!(active.heads[0].score.bias.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn head_does_not_change_trunk_initialization() {
        let plain = ConvNet::new(small_spec(), vec![], 12).unwrap();
        let with_head = ConvNet::new(small_spec(), vec![LcsHeadSpec::new(2, 2)], 12).unwrap();
        assert_eq!(plain.params().layers, with_head.params().layers);
        assert_eq!(plain.params().score, with_head.params().score);
    }
}
