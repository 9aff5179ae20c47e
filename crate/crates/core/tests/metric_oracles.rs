mod common;

use bgmatte::imagecore::{AlphaMatte, Trimap, TrimapLabel};
use bgmatte::metrics::{conn_error, grad_error, mse, sad, EvalRegion};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_instances_match_naive_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..25 {
        let (h, w) = (rng.gen_range(9..=32), rng.gen_range(9..=32));
        let p = random_matte(&mut rng, h, w);
        let g = random_matte(&mut rng, h, w);
        let t = random_trimap(&mut rng, h, w);
        for (region, unknown_only) in [(EvalRegion::UnknownOnly, true), (EvalRegion::AllPixels, false)] {
            assert!((sad(&p, &g, &t, region).unwrap() - naive_sad(&p, &g, &t, unknown_only)).abs() < 1e-9);
            assert!((mse(&p, &g, &t, region).unwrap() - naive_mse(&p, &g, &t, unknown_only)).abs() < 1e-9);
            let grad = grad_error(&p, &g, &t, region, 1.4).unwrap();
            assert!((grad - naive_grad(&p, &g, &t, unknown_only, 1.4)).abs() < 1e-9);
            let conn = conn_error(&p, &g, &t, region, 0.1, 0.15).unwrap();
            assert_eq!(conn, naive_conn(&p, &g, &t, unknown_only));
        }
    }
}

#[test]
fn step_edge_against_flat() {
    let p = AlphaMatte::from_fn(32, 32, |_, x| if x < 16 { 0.0 } else { 1.0 }).unwrap();
    let g = AlphaMatte::filled(32, 32, 0.5).unwrap();
    let t = Trimap::filled(32, 32, TrimapLabel::Unknown).unwrap();
    let v = grad_error(&p, &g, &t, EvalRegion::AllPixels, 1.4).unwrap();
    assert!(v > 0.0);
    assert!((v - naive_grad(&p, &g, &t, false, 1.4)).abs() < 1e-9);
}

#[test]
fn detached_square_connectivity() {
    let square = |y: usize, x: usize| (4..12).contains(&y) && (4..12).contains(&x);
    let blob = |y: usize, x: usize| (18..30).contains(&y) && (18..30).contains(&x);
    let g = AlphaMatte::from_fn(32, 32, |y, x| if square(y, x) || blob(y, x) { 1.0 } else { 0.0 }).unwrap();
    let p = AlphaMatte::from_fn(32, 32, |y, x| {
        if square(y, x) {
            0.6
        } else if blob(y, x) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let t = Trimap::filled(32, 32, TrimapLabel::Unknown).unwrap();
    let v = conn_error(&p, &g, &t, EvalRegion::AllPixels, 0.1, 0.15).unwrap();
    assert_eq!(v, naive_conn(&p, &g, &t, false));
    assert!(v > 0.0);
}
