use std::path::Path;

use bgmatte::distort::DistortionMode;
use bgmatte::harness::*;
use bgmatte::imagecore::{
    compose, generate_trimap, load_alpha, load_trimap, save_alpha, save_image, save_trimap, AlphaMatte, BitDepth, Image,
};
use bgmatte::metrics::{evaluate_pair, MetricParams};
use bgmatte::netgen::{build_generator, GeneratorConfig};

fn dataset(dir: &Path) -> DatasetManifest {
    let pool_dir = dir.join("pool");
    let cfg = SynthConfig {
        foregrounds: 3,
        backgrounds: 2,
        size: 40,
        background_size: 48,
        seed: 9,
    };
    let pool = write_synth_pool(&pool_dir, &cfg).unwrap();
    build_dataset(&pool, &pool_dir, &DatasetConfig::default(), &dir.join("data")).unwrap()
}

fn still(p: &Predictor, m: &DatasetManifest, dir: &Path) -> StillReport {
    evaluate_still(p, m, &dir.join("data"), Split::Train, DistortionMode::M, &MetricParams::default()).unwrap()
}

#[test]
fn constant_predictor_scores_above_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    let r = still(&Predictor::Constant(0.5), &m, dir.path());
    assert!(r.mean.unwrap().iter().all(|&v| v > 0.0));
}

#[test]
fn mean_row_is_the_arithmetic_mean() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    let r = still(&Predictor::NoisyGt { sigma: 0.2, seed: 1 }, &m, dir.path());
    let t = still_table(&r);
    let rows: Vec<_> = t.rows.iter().filter(|r| r.ids[0] != MEAN_ROW).collect();
    assert_eq!(rows.len(), 4);
    let mean = t.row(MEAN_ROW).unwrap();
    for k in 0..4 {
        let want = rows.iter().map(|r| r.values[k]).sum::<f64>() / rows.len() as f64;
        assert!((mean.values[k] - want).abs() <= 1e-12);
    }
    let again = ReportTable::from_csv(&t.to_csv().unwrap()).unwrap();
    assert_eq!(again, t);
}

#[test]
fn evaluation_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    let p = Predictor::NoisyGt { sigma: 0.1, seed: 4 };
    assert_eq!(still(&p, &m, dir.path()), still(&p, &m, dir.path()));
}

#[test]
fn missing_files_become_failed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = dataset(dir.path());
    m.records[0].alpha = "nope.png".into();
    let r = still(&Predictor::Oracle, &m, dir.path());
    assert_eq!(r.failures().count(), 1);
    assert_eq!(r.successes().count(), 3);
}

#[test]
fn padded_prediction_keeps_odd_sizes() {
    let g = build_generator(&GeneratorConfig {
        base_width: 4,
        ..Default::default()
    })
    .unwrap();
    let (h, w) = (19, 27);
    let img = Image::from_fn(h, w, |y, x| [y as f64 / h as f64, x as f64 / w as f64, 0.5]).unwrap();
    let a = AlphaMatte::from_fn(h, w, |_, x| if x < 13 { 1.0 } else { 0.0 }).unwrap();
    let t = generate_trimap(&a, 2).unwrap();
    let out = predict_padded(&g, &img, &img, &t).unwrap();
    assert_eq!((out.height(), out.width()), (h, w));
}

fn write_sequence(dir: &Path, frames: &[(usize, usize)], bg_sources: &[&str]) {
    for (k, &(h, w)) in frames.iter().enumerate() {
        let fg = Image::filled(h, w, [0.9, 0.3, 0.1]).unwrap();
        let bg = Image::from_fn(h, w, |y, x| [0.1, y as f64 / h as f64, x as f64 / w as f64]).unwrap();
        let a = AlphaMatte::from_fn(h, w, |y, x| {
            let d = ((y as f64 - h as f64 / 2.0).powi(2) + (x as f64 - w as f64 / 2.0 - k as f64).powi(2)).sqrt();
            (8.0 - d).clamp(0.0, 1.0)
        })
        .unwrap();
        let name = format!("{k:04}.png");
        save_image(&compose(&fg, &bg, &a).unwrap(), dir.join("seq/composite").join(&name), BitDepth::Eight).unwrap();
        save_alpha(&a, dir.join("seq/alpha").join(&name), BitDepth::Sixteen).unwrap();
        save_trimap(&generate_trimap(&a, 3).unwrap(), dir.join("seq/trimap").join(&name)).unwrap();
        for src in bg_sources {
            save_image(&bg, dir.join(src).join(&name), BitDepth::Eight).unwrap();
        }
    }
}

#[test]
fn single_frame_video_equals_that_frame() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_sequence(p, &[(32, 32)], &["bg"]);
    let spec = VideoEvalSpec::from_dirs("s", "bg", &p.join("seq"), &p.join("bg")).unwrap();
    let models = vec![("noisy".to_string(), Predictor::NoisyGt { sigma: 0.1, seed: 2 })];
    let rows = evaluate_video(&models, &[spec], p, &MetricParams::default()).unwrap();

    let gt = load_alpha(p.join("seq/alpha/0000.png")).unwrap();
    let t = load_trimap(p.join("seq/trimap/0000.png")).unwrap();
    let img = Image::filled(32, 32, [0.0; 3]).unwrap();
    let pred = models[0].1.predict(&img, &img, &t, &gt, 0).unwrap();
    assert_eq!(rows[0].mean.unwrap(), evaluate_pair(&pred, &gt, &t).unwrap().values());
    assert!(!rows[0].partial());
}

#[test]
fn oracle_ignores_the_background_source() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_sequence(p, &[(24, 24), (24, 24), (24, 24)], &["recon_a", "recon_b"]);
    let specs: Vec<_> = ["recon_a", "recon_b"]
        .iter()
        .map(|s| VideoEvalSpec::from_dirs("s", s, &p.join("seq"), &p.join(s)).unwrap())
        .collect();
    let models = vec![("oracle".to_string(), Predictor::Oracle)];
    let rows = evaluate_video(&models, &specs, p, &MetricParams::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].mean, rows[1].mean);
    assert_eq!(rows[0].mean, Some([0.0; 4]));
    assert_eq!(video_table(&rows).rows.len(), 2);
}

#[test]
fn resolution_drift_marks_the_row_partial() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_sequence(p, &[(24, 24), (24, 24), (24, 32)], &["bg"]);
    let spec = VideoEvalSpec::from_dirs("s", "bg", &p.join("seq"), &p.join("bg")).unwrap();
    let rows = evaluate_video(&[("o".into(), Predictor::Oracle)], &[spec], p, &MetricParams::default()).unwrap();
    assert!(rows[0].partial());
    assert_eq!(rows[0].failed_frames.len(), 1);
    assert_eq!(rows[0].failed_frames[0].0, 2);
    assert_eq!(rows[0].mean, Some([0.0; 4]));
}

#[test]
fn unequal_frame_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_sequence(p, &[(24, 24), (24, 24)], &["bg"]);
    std::fs::remove_file(p.join("bg/0001.png")).unwrap();
    assert!(VideoEvalSpec::from_dirs("s", "bg", &p.join("seq"), &p.join("bg")).is_err());
}

#[test]
fn summary_collects_mean_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    let a = still_table(&still(&Predictor::Oracle, &m, dir.path()));
    let b = still_table(&still(&Predictor::Constant(0.5), &m, dir.path()));
    let s = summary_table(&[("oracle".into(), a), ("flat".into(), b.clone())]).unwrap();
    assert_eq!(s.row("oracle").unwrap().values, [0.0; 4]);
    assert_eq!(s.row("flat").unwrap().values, b.row(MEAN_ROW).unwrap().values);
    assert!(s.to_text().contains("flat"));
}
