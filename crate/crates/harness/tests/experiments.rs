mod common;

use common::tiny_config;
use lsdhm_core::Rect;
use lsdhm_harness::experiments::{activation_stats, occlusion_differences, occlusion_study, pair_errors};
use lsdhm_harness::pipeline::{load_data, run_pipeline, train_net};

#[test]
fn pair_table_has_one_row_per_pair() {
    let mut cfg = tiny_config();
    cfg.set("data.pairs", "2").unwrap();
    let out = run_pipeline(&cfg).unwrap();
    let rows = pair_errors(&cfg, &out.train_features, &out.test_features, &out.data.pairs).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].a, rows[0].b, rows[1].a, rows[1].b), (0, 1, 2, 3));
    for r in &rows {
        assert!([r.fc, r.conv, r.both].iter().all(|e| (0.0..=100.0).contains(e)));
    }
    let again = pair_errors(&cfg, &out.train_features, &out.test_features, &out.data.pairs).unwrap();
    assert_eq!(rows, again);
    assert_eq!(pair_errors(&cfg, &out.train_features, &out.test_features, &[]).unwrap_err().exit_code(), 1);
}

#[test]
fn occlusion_edge_cases() {
    let cfg = tiny_config();
    let data = load_data(&cfg).unwrap();
    let (net, _) = train_net(&cfg, &data.train).unwrap();
    let img = &data.test.items()[0].0;
    let d = occlusion_differences(&net, 2, img, &[Rect::new(3, 3, 3, 3), Rect::new(0, 0, 32, 32)]).unwrap();
    assert_eq!(d[0], 0.0);
    assert!(d[1] >= 0.0);
    assert!(occlusion_differences(&net, 2, img, &[Rect::new(0, 0, 40, 5)]).is_err());

    let rows = occlusion_study(&cfg, &net, &data.test, data.test_meta.as_ref().unwrap(), 4).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.glyph_rects >= 2 && r.glyph_mean >= 0.0));
}

#[test]
fn activation_histograms_sum_to_q() {
    let cfg = tiny_config();
    let data = load_data(&cfg).unwrap();
    let (net, _) = train_net(&cfg, &data.train).unwrap();
    let stats = activation_stats(&net, 2, &data.test, 0.25).unwrap();
    assert_eq!(stats.q, 2);
    assert_eq!(stats.fc_histogram.iter().sum::<usize>(), 2);
    assert_eq!(stats.conv_histogram.iter().sum::<usize>(), 2);
    assert!((0.0..=1.0).contains(&stats.total_variation));
}
