mod oracles;

use lsdhm_core::io::{load_fvm, load_vector_batch, read_fvm, read_fvt, save_fvm, save_vector_batch, write_fvm, write_fvt, Record, VectorEntry};
use lsdhm_core::nn::{ConvNet, ConvNetSpec, LcsHeadSpec};
use lsdhm_core::{encode_fcv, fit_gmm, fit_pca, train_svm, DescriptorSet, EmConfig, SvmConfig, Tensor3};
use oracles::*;
use proptest::prelude::*;
use rand::Rng;

fn round_trip(records: &[Record]) -> Vec<Record> {
    let mut buf = Vec::new();
    write_fvm(&mut buf, records).unwrap();
    read_fvm(buf.as_slice()).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn fitted_models_reload_bitwise_and_reencode_identically() {
    let mut r = rng(1);
    let maps: Vec<Tensor3> = (0..6).map(|_| random_maps(&mut r, 5, 5, 12)).collect();
    let mut set = DescriptorSet::new(12, maps[0].data().to_vec()).unwrap();
    for m in &maps[1..] {
        set.extend(&DescriptorSet::new(12, m.data().to_vec()).unwrap()).unwrap();
    }
    let pca = fit_pca(&set, 6).unwrap();
    let gmm = fit_gmm(&pca.project_set(&set).unwrap(), 4, &EmConfig { seed: 3, ..EmConfig::default() }).unwrap();
    let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i % 3) as f64]).collect();
    let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let svm = train_svm(&x, &y, 3, &SvmConfig::default()).unwrap();
    let net = ConvNet::new(ConvNetSpec::desk(10), vec![LcsHeadSpec::new(2, 16)], 7).unwrap();

    let records = vec![Record::Pca(pca.clone()), Record::Gmm(gmm.clone()), Record::Svm(svm.clone()), Record::Net(net.clone())];
    let back = round_trip(&records);
    assert_eq!(back, records);
    let (Record::Pca(p2), Record::Gmm(g2)) = (&back[0], &back[1]) else { panic!("record order") };
    assert_eq!(bits(p2.basis()), bits(pca.basis()));
    assert_eq!(bits(g2.stddevs()), bits(gmm.stddevs()));
    for m in &maps {
        let a = encode_fcv(m, &pca, &gmm, 0.5).unwrap();
        let b = encode_fcv(m, p2, g2, 0.5).unwrap();
        let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12);
    }
    let Record::Net(n2) = &back[3] else { panic!("record order") };
    let img = random_tensor(&mut r, 32, 32, 3);
    assert_eq!(n2.forward(&img).unwrap(), net.forward(&img).unwrap());
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(2);
    let pca = random_pca(&mut r, 5, 2);
    let path = dir.path().join("m.fvm");
    save_fvm(&path, &[Record::Pca(pca.clone())]).unwrap();
    assert_eq!(lsdhm_core::io::load_pca(&path).unwrap(), pca);
    assert_eq!(load_fvm(&path).unwrap().len(), 1);
    assert!(lsdhm_core::io::load_gmm(&path).is_err());

    let entries: Vec<VectorEntry> = (0..4)
        .map(|i| VectorEntry {
            name: format!("{i:03}"),
            values: vec![i as f64 * 0.5, -1.0, 0.25],
            label: i % 2,
        })
        .collect();
    save_vector_batch(dir.path().join("vecs"), &entries).unwrap();
    assert_eq!(load_vector_batch(dir.path().join("vecs")).unwrap(), entries);
}

#[test]
fn corrupt_containers_are_rejected() {
    let mut buf = Vec::new();
    write_fvm(&mut buf, &[Record::Pca(random_pca(&mut rng(3), 4, 2))]).unwrap();
    for cut in [0, 3, 11, 20, buf.len() - 1] {
        assert!(read_fvm(&buf[..cut]).is_err(), "cut at {cut}");
    }
    let mut extra = buf.clone();
    extra.push(0);
    assert!(read_fvm(extra.as_slice()).is_err());
}

proptest! {
    #[test]
    fn fvt_round_trips_f32_values(h in 1usize..5, w in 1usize..5, d in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let data: Vec<f64> = (0..h * w * d).map(|_| r.random_range(-1e3f32..1e3) as f64).collect();
        let t = Tensor3::new(h, w, d, data).unwrap();
        let mut buf = Vec::new();
        write_fvt(&mut buf, &t).unwrap();
        prop_assert_eq!(buf.len(), 16 + 4 * t.len());
        let back = read_fvt(buf.as_slice()).unwrap();
        prop_assert_eq!(bits(back.data()), bits(t.data()));
    }

    #[test]
    fn gmm_records_round_trip(seed in any::<u64>(), k in 1usize..5, dim in 1usize..5) {
        let g = random_gmm(&mut rng(seed), k, dim);
        let back = round_trip(&[Record::Gmm(g.clone())]);
        prop_assert_eq!(back, vec![Record::Gmm(g)]);
    }
}
