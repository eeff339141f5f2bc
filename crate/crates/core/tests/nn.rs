mod oracles;

use lsdhm_core::nn::train::dataset_loss;
use lsdhm_core::nn::{train, ConvNet, ConvNetSpec, LayerSpec, LcsHeadSpec, Shape, TrainConfig};
use lsdhm_core::{LabeledDataset, Tensor3};
use oracles::*;
use rand::Rng;

fn small_spec(classes: usize) -> ConvNetSpec {
    ConvNetSpec {
        input: Shape::new(8, 8, 2),
        layers: vec![
            LayerSpec::Conv {
                kernel: 3,
                stride: 1,
                out_channels: 3,
            },
            LayerSpec::MaxPool { kernel: 2, stride: 2 },
            LayerSpec::Conv {
                kernel: 3,
                stride: 1,
                out_channels: 4,
            },
            LayerSpec::FullyConnected { out: 6 },
        ],
        num_classes: classes,
    }
}

/// Two-channel 8x8 images; the class decides which quadrant is bright.
fn quadrant_data(seed: u64, n: usize, classes: usize) -> LabeledDataset {
    let mut r = rng(seed);
    let items = (0..n)
        .map(|i| {
            let label = i % classes;
            let mut t = random_tensor(&mut r, 8, 8, 2).into_data();
            t.iter_mut().for_each(|v| *v *= 0.2);
            let (qy, qx) = (label / 2 * 4, label % 2 * 4);
            for y in qy..qy + 4 {
                for x in qx..qx + 4 {
                    t[(y * 8 + x) * 2] += 1.0;
                }
            }
            (Tensor3::new(8, 8, 2, t).unwrap(), label)
        })
        .collect();
    LabeledDataset::new(items, classes).unwrap()
}

/// Moves every bias a little positive so ReLUs start active.
fn warm_biases(net: &mut ConvNet, seed: u64) {
    let mut r = rng(seed);
    let p = net.params_mut();
    for l in p.layers.iter_mut().flatten() {
        l.bias.iter_mut().for_each(|b| *b = r.random_range(0.05..0.2));
    }
    for h in p.heads.iter_mut() {
        h.conv.bias.iter_mut().for_each(|b| *b = r.random_range(0.05..0.2));
    }
}

#[test]
fn desk_forward_matches_naive_loops() {
    let mut net = ConvNet::new(ConvNetSpec::desk(10), vec![LcsHeadSpec::new(2, 16)], 3).unwrap();
    warm_biases(&mut net, 1);
    let img = random_tensor(&mut rng(2), 32, 32, 3);
    let out = net.forward(&img).unwrap();
    let (maps, scores) = naive_forward(&net, &img);
    for (a, b) in out.maps.iter().zip(&maps) {
        assert_eq!(a.shape(), b.shape());
        assert!(a.l2_distance(b).unwrap() < 1e-10);
    }
    for (a, b) in out.main_scores.iter().zip(&scores) {
        assert!((a - b).abs() < 1e-10);
    }
    let head = &net.params().heads[0];
    let conv = conv_relu(&maps[2], &head.conv.weights, &head.conv.bias, 3, 1);
    let pooled = max_pool(&conv, 3, 2);
    assert_eq!(pooled.shape(), (7, 7, 16));
    assert!(out.head_maps[0].pooled.l2_distance(&pooled).unwrap() < 1e-10);
    let n = pooled.len();
    for c in 0..10 {
        let s = head.score.bias[c] + (0..n).map(|j| head.score.weights[c * n + j] * pooled.data()[j]).sum::<f64>();
        assert!((out.aux_scores[0][c] - s).abs() < 1e-10);
    }
    assert_eq!(net.extract_conv(&img, 2).unwrap().shape(), (16, 16, 32));
}

#[test]
fn gradients_match_finite_differences() {
    for (seed, lambda) in [(1, 0.3), (2, 1.0), (3, 0.0)] {
        let mut net = ConvNet::new(small_spec(4), vec![LcsHeadSpec::new(2, 3)], seed).unwrap();
        warm_biases(&mut net, seed);
        let img = random_tensor(&mut rng(seed + 10), 8, 8, 2);
        let report = gradient_check(&mut net, &img, seed as usize % 4, &[lambda], 1e-5);
        assert!(report.max_rel < 1e-4, "lambda {lambda}: {report:?}");
        assert!(report.skipped * 100 <= net.params().count(), "{report:?}");
        assert_eq!(report.checked + report.skipped, net.params().count());
    }
}

#[test]
fn zero_learning_rate_leaves_weights_untouched() {
    let data = quadrant_data(1, 24, 4);
    let mut net = ConvNet::new(small_spec(4), vec![LcsHeadSpec::new(2, 3)], 5).unwrap();
    let before = net.clone();
    let cfg = TrainConfig {
        lambda_aux: vec![0.3],
        learning_rate: 0.0,
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &cfg, None).unwrap();
    assert_eq!(net, before);
}

#[test]
fn zero_weight_head_reproduces_head_free_training() {
    let data = quadrant_data(2, 40, 4);
    let mut with_head = ConvNet::new(small_spec(4), vec![LcsHeadSpec::new(2, 3)], 9).unwrap();
    let mut plain = ConvNet::new(small_spec(4), vec![], 9).unwrap();
    let base = TrainConfig {
        learning_rate: 0.01,
        batch_size: 4,
        epochs: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let log_a = train(&mut with_head, &data, &TrainConfig { lambda_aux: vec![0.0], ..base.clone() }, Some(25)).unwrap();
    let log_b = train(&mut plain, &data, &TrainConfig { lambda_aux: vec![], ..base }, Some(25)).unwrap();
    assert_eq!(log_a.len(), 25);
    assert_eq!(with_head.params().layers, plain.params().layers);
    assert_eq!(with_head.params().score, plain.params().score);
    for (a, b) in log_a.iter().zip(&log_b) {
        assert_eq!(a.main_loss.to_bits(), b.main_loss.to_bits());
    }
}

#[test]
fn training_lowers_the_joint_loss() {
    let data = quadrant_data(3, 64, 4);
    let mut net = ConvNet::new(small_spec(4), vec![LcsHeadSpec::new(2, 3)], 1).unwrap();
    let cfg = TrainConfig {
        lambda_aux: vec![0.3],
        learning_rate: 0.01,
        batch_size: 8,
        epochs: 15,
        seed: 2,
        ..TrainConfig::default()
    };
    let before = dataset_loss(&net, &data, &[0.3]).unwrap();
    let again = net.clone();
    let log = train(&mut net, &data, &cfg, None).unwrap();
    let after = dataset_loss(&net, &data, &[0.3]).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert!(log.iter().all(|e| e.aux_losses[0].is_finite()));

    let mut other = again;
    train(&mut other, &data, &cfg, None).unwrap();
    assert_eq!(other, net);
}

#[test]
fn learning_rate_schedule_decays_per_epoch() {
    let data = quadrant_data(4, 8, 4);
    let mut net = ConvNet::new(small_spec(4), vec![], 1).unwrap();
    let cfg = TrainConfig {
        lambda_aux: vec![],
        learning_rate: 0.01,
        lr_decay: 0.5,
        batch_size: 4,
        epochs: 3,
        ..TrainConfig::default()
    };
    let log = train(&mut net, &data, &cfg, None).unwrap();
    let rates: Vec<f64> = log.iter().map(|e| e.learning_rate).collect();
    assert_eq!(rates, vec![0.01, 0.01, 0.005, 0.005, 0.0025, 0.0025]);
}
