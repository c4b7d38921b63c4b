//! Dataset and model files survive a save/load cycle bit-exactly.

use std::fs;

use mpn::data::phm::{convert_phm, PhmOptions};
use mpn::data::synth::{synth_generate, SynthConfig};
use mpn::data::window::WindowOptions;
use mpn::data::{load_dataset, save_dataset, split, Sample, SplitSizes};
use mpn::eval::fit_classifiers;
use mpn::persist::{load_model, save_model, ModelFile};
use mpn::train::{init_model, predict_all, train, TrainConfig};

fn bits(s: &Sample) -> Vec<u64> {
    s.z.data()
        .iter()
        .chain(s.c.data())
        .map(|v| v.to_bits())
        .collect()
}

#[test]
fn synthetic_dataset_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let (meta, samples) = synth_generate(&SynthConfig::default(), 50).unwrap();
    save_dataset(&path, &meta, &samples).unwrap();
    let (meta2, samples2) = load_dataset(&path).unwrap();
    assert_eq!(meta, meta2);
    assert_eq!(samples.len(), samples2.len());
    for (a, b) in samples.iter().zip(&samples2) {
        assert_eq!(bits(a), bits(b));
        assert_eq!(a.y_true, b.y_true);
        assert_eq!(a.o_true, b.o_true);
    }
    let again = dir.path().join("again.jsonl");
    save_dataset(&again, &meta2, &samples2).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn trained_model_roundtrip() {
    let (meta, samples) = synth_generate(&SynthConfig::default(), 60).unwrap();
    let s = split(&samples, SplitSizes::proportional(60), 1).unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (model, _) = train(&init_model(meta.dims(), 0).unwrap(), &s.train, &s.val, &cfg).unwrap();
    let clf = fit_classifiers(&predict_all(&model, &s.train).unwrap(), &s.train, 2).unwrap();
    let file = ModelFile::new(model, Some(clf));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&path, &file).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, file);
    let a: Vec<u64> = file.model.to_flat().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = back.model.to_flat().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
    let pa = predict_all(&file.model, &s.test).unwrap();
    let pb = predict_all(&back.model, &s.test).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn phm_files_convert_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = String::from("plant,component,time,S1,S2,S3,S4,R1,R2,R3,R4\n");
    for t in 0..60 {
        for comp in 1..=2 {
            let v = (t * comp) as f64 / 10.0;
            a.push_str(&format!("7,{comp},{t},{v},1,2,3,{},0,0,0\n", v + 1.0));
        }
    }
    let c = "plant,start,end,code\n7,12,15,2\n7,40,44,5\n";
    fs::write(dir.path().join("a.csv"), a).unwrap();
    fs::write(dir.path().join("c.csv"), c).unwrap();
    let opts = PhmOptions {
        history: 5,
        horizon: 3,
        codes: vec![2, 5],
        windows: WindowOptions {
            n_samples: 100,
            seed: 4,
            allow_overlap: false,
        },
        ..PhmOptions::default()
    };
    let (meta, samples) = convert_phm(
        &dir.path().join("a.csv"),
        None,
        &dir.path().join("c.csv"),
        &opts,
    )
    .unwrap();
    // Disjoint 8-step windows on 60 steps: at most 7, and random greedy
    // placement blocks at most 15 starts per window kept.
    assert!((4..=7).contains(&samples.len()), "{}", samples.len());
    assert!(samples.iter().any(|s| s.y_true.contains(&1)));
    let out = dir.path().join("phm.jsonl");
    save_dataset(&out, &meta, &samples).unwrap();
    let (meta2, back) = load_dataset(&out).unwrap();
    assert_eq!(meta2, meta);
    assert_eq!(back, samples);
}
