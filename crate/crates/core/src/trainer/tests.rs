use super::*;
use crate::imagecore::{compose, generate_trimap, Image};

fn sample(seed: u64, size: usize) -> CompositeSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = || {
        let base: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
        Image::from_fn(size, size, |_, _| base.map(|b| (b + r.gen_range(-0.1..0.1)).clamp(0.0, 1.0))).unwrap()
    };
    let (fg, bg, bgd) = (img(), img(), img());
    let c = size as f64 / 2.0;
    let alpha = AlphaMatte::from_fn(size, size, |y, x| {
        let d = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
        (c * 0.6 - d + 0.5).clamp(0.0, 1.0)
    })
    .unwrap();
    let trimap = generate_trimap(&alpha, 2).unwrap();
    let composite = compose(&fg, &bg, &alpha).unwrap();
    CompositeSample::new(fg, bg, bgd, alpha, trimap, composite).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        crop_size: 16,
        batch_size: 2,
        generator: GeneratorConfig {
            base_width: 4,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            base_width: 4,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn data(n: usize) -> Vec<CompositeSample> {
    (0..n).map(|i| sample(i as u64, 24)).collect()
}

#[test]
fn runs_are_deterministic() {
    let cfg = small_config();
    let d = data(3);
    let run = || {
        let mut s = TrainState::new(&cfg).unwrap();
        for step in 0..10 {
            train_step(&mut s, &batch_for_step(&cfg, &d, step).unwrap(), &cfg).unwrap();
        }
        s.history
    };
    let a = run();
    assert_eq!(a.len(), 10);
    assert_eq!(a, run());
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_config()
    };
    let d = data(2);
    let mut s = TrainState::new(&cfg).unwrap();
    let (g0, d0) = (s.generator.params.clone(), s.discriminator.params.clone());
    train_step(&mut s, &batch_for_step(&cfg, &d, 0).unwrap(), &cfg).unwrap();
    assert_eq!(s.generator.params, g0);
    assert_eq!(s.discriminator.params, d0);
}

#[test]
fn updates_touch_only_their_network() {
    let cfg = small_config();
    let d = data(2);
    let batch = batch_for_step(&cfg, &d, 0).unwrap();
    let initial = TrainState::new(&cfg).unwrap();

    let mut full = initial.clone();
    train_step(&mut full, &batch, &cfg).unwrap();

    let mut d_only = initial.clone();
    let pass = d_only.generator.forward(&batch.input, Mode::Train).unwrap();
    let alphas = alphas_from(pass.graph.value(pass.output)).unwrap();
    let fake = fake_volumes(&batch, &alphas).unwrap();
    update_discriminator(&mut d_only, &batch, &fake).unwrap();

    assert_eq!(d_only.generator.params, initial.generator.params);
    assert_eq!(d_only.generator.buffers, initial.generator.buffers);
    assert_ne!(d_only.discriminator.params, initial.discriminator.params);
    assert_eq!(full.discriminator.params, d_only.discriminator.params);
    assert_eq!(full.discriminator.buffers, d_only.discriminator.buffers);
    assert_ne!(full.generator.params, initial.generator.params);
}

#[test]
fn one_epoch_runs_ceil_n_over_batch_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let out = RunOutput {
        out_dir: dir.path(),
        config_text: "",
    };
    let s = train(&cfg, &data(4), &out, None).unwrap();
    assert_eq!(s.step, 2);
    assert_eq!(s.epoch, 1);
    let rows = csv::Reader::from_path(dir.path().join(LOSS_CSV)).unwrap().records().count();
    assert_eq!(rows, 2);

    let s = train(&TrainConfig { batch_size: 3, ..cfg }, &data(4), &out, None).unwrap();
    assert_eq!(s.step, 2);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let d = data(2);
    let mut s = TrainState::new(&cfg).unwrap();
    for step in 0..2 {
        train_step(&mut s, &batch_for_step(&cfg, &d, step).unwrap(), &cfg).unwrap();
    }
    let text = "seed = 0\n# echoed verbatim\n";
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&s, &cfg, text, &a).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(loaded.config_text, text);
    assert_eq!(loaded.config, cfg);
    assert_eq!(loaded.state.history, s.history);
    assert_eq!(loaded.state.opt_g, s.opt_g);
    save_checkpoint(&loaded.state, &loaded.config, &loaded.config_text, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ckpt");
    std::fs::write(&p, b"not a checkpoint at all").unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
    let cfg = small_config();
    let s = TrainState::new(&cfg).unwrap();
    save_checkpoint(&s, &cfg, "", &p).unwrap();
    let mut bytes = std::fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&p, bytes).unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = TrainConfig {
        epochs: 2,
        checkpoint_every: 2,
        ..small_config()
    };
    let d = data(4);
    let full_dir = tempfile::tempdir().unwrap();
    let full = train(
        &cfg,
        &d,
        &RunOutput {
            out_dir: full_dir.path(),
            config_text: "x",
        },
        None,
    )
    .unwrap();
    assert_eq!(full.step, 4);

    let resumed_dir = tempfile::tempdir().unwrap();
    let ckpt = load_checkpoint(&checkpoint_path(full_dir.path(), 2)).unwrap();
    assert_eq!(ckpt.state.step, 2);
    let resumed = train(
        &cfg,
        &d,
        &RunOutput {
            out_dir: resumed_dir.path(),
            config_text: "x",
        },
        Some(ckpt.state),
    )
    .unwrap();
    assert_eq!(resumed.history, full.history);
    let bytes = |dir: &Path| std::fs::read(dir.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(bytes(full_dir.path()), bytes(resumed_dir.path()));
}

#[test]
fn rejects_bad_configs() {
    for cfg in [
        TrainConfig { epochs: 0, ..small_config() },
        TrainConfig { crop_size: 20, ..small_config() },
        TrainConfig { adam_beta2: 1.0, ..small_config() },
        TrainConfig { learning_rate: -1.0, ..small_config() },
    ] {
        assert!(matches!(TrainState::new(&cfg), Err(Error::Config(_))), "{cfg:?}");
    }
    let cfg = TrainConfig { crop_size: 32, ..small_config() };
    let dir = tempfile::tempdir().unwrap();
    let out = RunOutput { out_dir: dir.path(), config_text: "" };
    assert!(matches!(train(&cfg, &data(1), &out, None), Err(Error::Config(_))));
    assert!(matches!(train(&small_config(), &[], &out, None), Err(Error::Config(_))));
}

#[test]
fn crops_centre_on_unknown_pixels() {
    let s = sample(5, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let c = random_crop(&s, 16, &mut rng).unwrap();
        assert!(c.trimap.count(TrimapLabel::Unknown) > 0);
    }
}

#[test]
fn adversarial_alpha_gradient_matches_differences() {
    let cfg = small_config();
    let d = data(2);
    let batch = batch_for_step(&cfg, &d, 0).unwrap();
    let state = TrainState::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let plane = 16 * 16;
    let alpha: Vec<f64> = (0..2 * plane).map(|_| rng.gen_range(0.1..0.9)).collect();
    let loss_at = |a: &[f64]| {
        let t = Tensor::from_vec([2, 1, 16, 16], a.to_vec()).unwrap();
        let fake = fake_volumes(&batch, &alphas_from(&t).unwrap()).unwrap();
        let pass = state.discriminator.forward(&fake, Mode::Train, true).unwrap();
        let (l, g) = gan_loss_g_grad(pass.graph.value(pass.scores).data());
        (l, pass, g, fake)
    };
    let (_, pass, g, _) = loss_at(&alpha);
    let shape = pass.graph.value(pass.scores).shape();
    let grads = pass.graph.backward(&[(pass.scores, Tensor::from_vec(shape, g).unwrap())]);
    let vol = grads.get(pass.input).unwrap();
    let h = 1e-5;
    for &i in &[0usize, 37, 130, 255, 256 + 77, 511] {
        let (n, p) = (i / plane, i % plane);
        let s = &batch.samples[n];
        let fg = s.foreground.as_slice();
        let bg = s.background_clean.as_slice();
        let analytic: f64 = (0..3).map(|c| vol.sample(n)[c * plane + p] * (fg[3 * p + c] - bg[3 * p + c])).sum();
        let mut up = alpha.clone();
        up[i] += h;
        let mut down = alpha.clone();
        down[i] -= h;
        let numeric = (loss_at(&up).0 - loss_at(&down).0) / (2.0 * h);
        assert!((numeric - analytic).abs() <= 1e-3 * analytic.abs().max(1e-7), "{i}: {numeric} vs {analytic}");
    }
}
