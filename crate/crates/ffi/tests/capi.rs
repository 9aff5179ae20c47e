use std::ffi::{c_char, CString};
use std::ptr;

use bgmatte::netdisc::DiscriminatorConfig;
use bgmatte::netgen::GeneratorConfig;
use bgmatte::trainer::{save_checkpoint, TrainConfig, TrainState};
use bgmatte_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { bgm_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn ramp(h: usize, w: usize) -> Vec<f64> {
    (0..h * w).map(|i| (i % w) as f64 / (w - 1) as f64).collect()
}

#[test]
fn compose_hits_endpoints() {
    let (h, w) = (4, 5);
    let fg: Vec<f64> = (0..h * w * 3).map(|i| (i % 7) as f64 / 7.0).collect();
    let bg: Vec<f64> = (0..h * w * 3).map(|i| (i % 3) as f64 / 3.0).collect();
    let mut out = vec![0.0; h * w * 3];
    for (a, want) in [(1.0, &fg), (0.0, &bg)] {
        let alpha = vec![a; h * w];
        let s = unsafe { bgm_compose(fg.as_ptr(), bg.as_ptr(), alpha.as_ptr(), h, w, out.as_mut_ptr()) };
        assert_eq!(s, BgmStatus::Ok);
        assert_eq!(&out, want);
    }
}

#[test]
fn out_of_range_alpha_is_a_domain_error() {
    let fg = [0.5; 3];
    let alpha = [1.5];
    let mut out = [0.0; 3];
    let s = unsafe { bgm_compose(fg.as_ptr(), fg.as_ptr(), alpha.as_ptr(), 1, 1, out.as_mut_ptr()) };
    assert_eq!(s, BgmStatus::Domain);
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    let mut out = [0.0; 3];
    let s = unsafe { bgm_compose(ptr::null(), ptr::null(), ptr::null(), 1, 1, out.as_mut_ptr()) };
    assert_eq!(s, BgmStatus::NullPointer);
    assert!(last_error().contains("null"));
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { bgm_generator_load(ptr::null(), &mut g) }, BgmStatus::NullPointer);
    unsafe { bgm_generator_free(ptr::null_mut()) };
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut out = [0.0; 3];
    unsafe { bgm_compose(ptr::null(), ptr::null(), ptr::null(), 1, 1, out.as_mut_ptr()) };
    let full = unsafe { bgm_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 4];
    let n = unsafe { bgm_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(buf[3], 0);
}

#[test]
fn oracle_prediction_scores_zero() {
    let (h, w) = (16, 16);
    let alpha = ramp(h, w);
    let mut labels = vec![0u8; h * w];
    assert_eq!(unsafe { bgm_generate_trimap(alpha.as_ptr(), h, w, 2, labels.as_mut_ptr()) }, BgmStatus::Ok);
    assert!(labels.contains(&1));
    let mut m = BgmMetrics::default();
    let s = unsafe { bgm_evaluate_pair(alpha.as_ptr(), alpha.as_ptr(), labels.as_ptr(), h, w, &mut m) };
    assert_eq!(s, BgmStatus::Ok);
    assert_eq!(m, BgmMetrics::default());
}

#[test]
fn bad_trimap_label_is_rejected() {
    let (h, w) = (9, 9);
    let alpha = ramp(h, w);
    let labels = vec![7u8; h * w];
    let mut m = BgmMetrics::default();
    let s = unsafe { bgm_evaluate_pair(alpha.as_ptr(), alpha.as_ptr(), labels.as_ptr(), h, w, &mut m) };
    assert_eq!(s, BgmStatus::Domain);
}

#[test]
fn generator_round_trips_through_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    let cfg = TrainConfig {
        generator: GeneratorConfig {
            base_width: 4,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            base_width: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    save_checkpoint(&TrainState::new(&cfg).unwrap(), &cfg, "", &path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { bgm_generator_load(c_path.as_ptr(), &mut g) }, BgmStatus::Ok);
    assert!(!g.is_null());

    let (h, w) = (13, 21);
    let img: Vec<f64> = (0..h * w * 3).map(|i| (i % 11) as f64 / 10.0).collect();
    let labels = vec![1u8; h * w];
    let mut alpha = vec![-1.0; h * w];
    let s = unsafe { bgm_generator_predict(g, img.as_ptr(), img.as_ptr(), labels.as_ptr(), h, w, alpha.as_mut_ptr()) };
    assert_eq!(s, BgmStatus::Ok);
    assert!(alpha.iter().all(|&a| a > 0.0 && a < 1.0));
    unsafe { bgm_generator_free(g) };

    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { bgm_generator_load(missing.as_ptr(), &mut g) }, BgmStatus::Io);
    assert!(g.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bgmatte.h")).unwrap();
    for name in [
        "bgm_compose",
        "bgm_generate_trimap",
        "bgm_evaluate_pair",
        "bgm_generator_load",
        "bgm_generator_predict",
        "bgm_generator_free",
        "bgm_last_error_message",
        "BGM_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_parses_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"bgmatte.h\"\nint main(void) { BgmMetrics m; (void)m; return bgm_last_error_message(NULL, 0) == 0 ? BGM_STATUS_OK : 1; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
