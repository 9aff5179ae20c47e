//! Alpha-prediction, compositional and adversarial losses.
//!
//! Every loss is a mean so magnitudes do not depend on resolution. The
//! `*_grad` variants also return the derivative with respect to the
//! predicted alpha (or the logits, for the adversarial terms).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{AlphaMatte, Image, Trimap, TrimapLabel};

/// Pixels entering the alpha loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    #[default]
    AllPixels,
    UnknownOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_alpha: f64,
    pub l_comp: f64,
    pub l_gan: f64,
    pub l_total: f64,
}

/// Per-term multipliers; all 1 reproduces the plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub comp: f64,
    pub gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            comp: 1.0,
            gan: 1.0,
        }
    }
}

/// `l_total = l_alpha + l_comp + l_gan`.
pub fn total_loss(l_alpha: f64, l_comp: f64, l_gan: f64) -> LossBreakdown {
    LossBreakdown {
        l_alpha,
        l_comp,
        l_gan,
        l_total: l_alpha + l_comp + l_gan,
    }
}

/// Weighted variant of [`total_loss`]; components are reported unweighted.
pub fn weighted_total_loss(l_alpha: f64, l_comp: f64, l_gan: f64, w: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        l_alpha,
        l_comp,
        l_gan,
        l_total: w.alpha * l_alpha + w.comp * l_comp + w.gan * l_gan,
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean |pred − gt| over the selected pixels, with its gradient.
pub fn alpha_l1(pred: &[f64], gt: &[f64], mask: Option<&[bool]>) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() || mask.is_some_and(|m| m.len() != pred.len()) {
        return Err(Error::shape("alpha loss buffers differ in length"));
    }
    let selected = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..pred.len()).filter(|&i| selected(i)).count();
    if count == 0 {
        return Err(Error::Degenerate("alpha loss over an empty pixel set".into()));
    }
    let n = count as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        if selected(i) {
            let d = pred[i] - gt[i];
            sum += d.abs();
            grad[i] = sign(d) / n;
        }
    }
    Ok((sum / n, grad))
}

/// Mean over pixels and channels of |C(pred) − C(gt)| where `C(a) = a·fg + (1−a)·bg`,
/// with its gradient in `pred`. `fg` and `bg` are interleaved RGB.
pub fn comp_l1(pred: &[f64], gt: &[f64], fg: &[f64], bg: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() || fg.len() != 3 * pred.len() || bg.len() != fg.len() {
        return Err(Error::shape("compositional loss buffers differ in length"));
    }
    if pred.is_empty() {
        return Err(Error::Degenerate("compositional loss over zero pixels".into()));
    }
    let n = fg.len() as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        for c in 0..3 {
            let (f, b) = (fg[3 * i + c], bg[3 * i + c]);
            let cp = pred[i] * f + (1.0 - pred[i]) * b;
            let cg = gt[i] * f + (1.0 - gt[i]) * b;
            let d = cp - cg;
            sum += d.abs();
            grad[i] += sign(d) * (f - b) / n;
        }
    }
    Ok((sum / n, grad))
}

fn unknown_mask(trimap: &Trimap) -> Vec<bool> {
    trimap.labels().iter().map(|&l| l == TrimapLabel::Unknown).collect()
}

pub fn alpha_loss_grad(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    trimap: &Trimap,
    mode: RegionMode,
) -> Result<(f64, Vec<f64>)> {
    pred.dims().ensure_same(gt.dims(), "alpha loss")?;
    pred.dims().ensure_same(trimap.dims(), "alpha loss trimap")?;
    match mode {
        RegionMode::AllPixels => alpha_l1(pred.as_slice(), gt.as_slice(), None),
        RegionMode::UnknownOnly => {
            let mask = unknown_mask(trimap);
            alpha_l1(pred.as_slice(), gt.as_slice(), Some(&mask))
        }
    }
}

pub fn alpha_loss(pred: &AlphaMatte, gt: &AlphaMatte, trimap: &Trimap, mode: RegionMode) -> Result<f64> {
    alpha_loss_grad(pred, gt, trimap, mode).map(|(v, _)| v)
}

pub fn comp_loss_grad(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    fg: &Image,
    bg: &Image,
) -> Result<(f64, Vec<f64>)> {
    let d = pred.dims();
    d.ensure_same(gt.dims(), "compositional loss")?;
    d.ensure_same(fg.dims(), "compositional loss foreground")?;
    d.ensure_same(bg.dims(), "compositional loss background")?;
    comp_l1(pred.as_slice(), gt.as_slice(), fg.as_slice(), bg.as_slice())
}

pub fn comp_loss(pred: &AlphaMatte, gt: &AlphaMatte, fg: &Image, bg: &Image) -> Result<f64> {
    comp_loss_grad(pred, gt, fg, bg).map(|(v, _)| v)
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Generator term: fake logits labelled real, mean binary cross-entropy.
pub fn gan_loss_g_grad(fake_logits: &[f64]) -> (f64, Vec<f64>) {
    let n = fake_logits.len().max(1) as f64;
    let loss = fake_logits.iter().map(|&z| softplus(-z)).sum::<f64>() / n;
    let grad = fake_logits.iter().map(|&z| (logistic(z) - 1.0) / n).collect();
    (loss, grad)
}

pub fn gan_loss_g(fake_logits: &[f64]) -> f64 {
    gan_loss_g_grad(fake_logits).0
}

/// Discriminator term: mean of the real-as-real and fake-as-fake cross-entropies.
/// Returns (loss, d/d real logits, d/d fake logits).
pub fn gan_loss_d_grad(real_logits: &[f64], fake_logits: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let nr = real_logits.len().max(1) as f64;
    let nf = fake_logits.len().max(1) as f64;
    let real = real_logits.iter().map(|&z| softplus(-z)).sum::<f64>() / nr;
    let fake = fake_logits.iter().map(|&z| softplus(z)).sum::<f64>() / nf;
    let g_real = real_logits.iter().map(|&z| 0.5 * (logistic(z) - 1.0) / nr).collect();
    let g_fake = fake_logits.iter().map(|&z| 0.5 * logistic(z) / nf).collect();
    (0.5 * (real + fake), g_real, g_fake)
}

pub fn gan_loss_d(real_logits: &[f64], fake_logits: &[f64]) -> f64 {
    gan_loss_d_grad(real_logits, fake_logits).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn unknown(h: usize, w: usize) -> Trimap {
        Trimap::filled(h, w, TrimapLabel::Unknown).unwrap()
    }

    #[test]
    fn alpha_loss_examples() {
        let t = unknown(4, 4);
        let a = AlphaMatte::filled(4, 4, 0.3).unwrap();
        assert_eq!(alpha_loss(&a, &a, &t, RegionMode::AllPixels).unwrap(), 0.0);
        let one = AlphaMatte::filled(4, 4, 1.0).unwrap();
        let zero = AlphaMatte::filled(4, 4, 0.0).unwrap();
        assert_eq!(alpha_loss(&one, &zero, &t, RegionMode::AllPixels).unwrap(), 1.0);
        let gt = AlphaMatte::filled(4, 4, 0.25).unwrap();
        let pred = AlphaMatte::filled(4, 4, 0.75).unwrap();
        // 16 pixels × 0.5 / 16
        assert_eq!(alpha_loss(&pred, &gt, &t, RegionMode::AllPixels).unwrap(), 0.5);
    }

    #[test]
    fn unknown_only_requires_unknown_pixels() {
        let t = Trimap::filled(3, 3, TrimapLabel::Foreground).unwrap();
        let a = AlphaMatte::filled(3, 3, 1.0).unwrap();
        assert!(matches!(
            alpha_loss(&a, &a, &t, RegionMode::UnknownOnly),
            Err(Error::Degenerate(_))
        ));
        let labels = vec![TrimapLabel::Unknown, TrimapLabel::Foreground];
        let t = Trimap::new(1, 2, labels).unwrap();
        let p = AlphaMatte::new(1, 2, vec![0.5, 0.0]).unwrap();
        let g = AlphaMatte::new(1, 2, vec![0.25, 1.0]).unwrap();
        assert_eq!(alpha_loss(&p, &g, &t, RegionMode::UnknownOnly).unwrap(), 0.25);
    }

    #[test]
    fn comp_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fg = Image::from_fn(5, 5, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let p = AlphaMatte::from_fn(5, 5, |_, _| rng.gen()).unwrap();
        let g = AlphaMatte::from_fn(5, 5, |_, _| rng.gen()).unwrap();
        assert_eq!(comp_loss(&p, &p, &fg, &fg).unwrap(), 0.0);
        assert!(comp_loss(&p, &g, &fg, &fg).unwrap() < 1e-15);

        let white = Image::filled(5, 5, [1.0; 3]).unwrap();
        let black = Image::filled(5, 5, [0.0; 3]).unwrap();
        let c = comp_loss(&p, &g, &white, &black).unwrap();
        let a = alpha_loss(&p, &g, &unknown(5, 5), RegionMode::AllPixels).unwrap();
        assert!((c - a).abs() < 1e-15, "{c} vs {a}");
    }

    #[test]
    fn gan_examples() {
        let mid = vec![0.0; 36];
        assert!((gan_loss_g(&mid) - LN_2).abs() < 1e-15);
        assert!((gan_loss_d(&mid, &mid) - LN_2).abs() < 1e-15);
        let perfect = gan_loss_d(&[40.0; 4], &[-40.0; 4]);
        assert!(perfect < 1e-15);
    }

    #[test]
    fn totals() {
        assert_eq!(total_loss(0.0, 0.0, LN_2).l_total, LN_2);
        assert!((total_loss(0.5, 0.25, 0.1).l_total - 0.85).abs() < 1e-15);
        let w = weighted_total_loss(0.5, 0.25, 0.1, &LossWeights::default());
        assert_eq!(w, total_loss(0.5, 0.25, 0.1));
    }

    #[test]
    fn gan_gradients_match_differences() {
        let z = [-1.3, 0.2, 2.5];
        let zr = [0.7, -0.4];
        let h = 1e-6;
        let (_, g) = gan_loss_g_grad(&z);
        let (_, gr, gf) = gan_loss_d_grad(&zr, &z);
        for i in 0..3 {
            let mut p = z;
            p[i] += h;
            let mut m = z;
            m[i] -= h;
            let num = (gan_loss_g(&p) - gan_loss_g(&m)) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-8);
            let num = (gan_loss_d(&zr, &p) - gan_loss_d(&zr, &m)) / (2.0 * h);
            assert!((num - gf[i]).abs() < 1e-8);
        }
        for i in 0..2 {
            let mut p = zr;
            p[i] += h;
            let mut m = zr;
            m[i] -= h;
            let num = (gan_loss_d(&p, &z) - gan_loss_d(&m, &z)) / (2.0 * h);
            assert!((num - gr[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn l1_gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 64;
        let gt: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        // keep every pixel well away from the kink at pred == gt
        let pred: Vec<f64> = gt.iter().map(|g| if *g > 0.5 { g - 0.2 } else { g + 0.2 }).collect();
        let fg: Vec<f64> = (0..3 * n).map(|_| rng.gen()).collect();
        let bg: Vec<f64> = (0..3 * n).map(|_| rng.gen()).collect();
        let h = 1e-7;
        let (_, ga) = alpha_l1(&pred, &gt, None).unwrap();
        let (_, gc) = comp_l1(&pred, &gt, &fg, &bg).unwrap();
        for i in 0..n {
            let mut p = pred.clone();
            p[i] += h;
            let mut m = pred.clone();
            m[i] -= h;
            let num = (alpha_l1(&p, &gt, None).unwrap().0 - alpha_l1(&m, &gt, None).unwrap().0) / (2.0 * h);
            assert!((num - ga[i]).abs() <= 1e-3 * ga[i].abs(), "alpha {i}");
            let num = (comp_l1(&p, &gt, &fg, &bg).unwrap().0 - comp_l1(&m, &gt, &fg, &bg).unwrap().0) / (2.0 * h);
            assert!((num - gc[i]).abs() <= 1e-3 * gc[i].abs().max(1e-6), "comp {i}: {num} vs {}", gc[i]);
        }
    }

    fn triple(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
        )
    }

    proptest! {
        #[test]
        fn l1_losses_are_metrics((a, b, c) in triple(12), fg in prop::collection::vec(0.0f64..=1.0, 36), bg in prop::collection::vec(0.0f64..=1.0, 36)) {
            let dab = alpha_l1(&a, &b, None).unwrap().0;
            prop_assert_eq!(dab, alpha_l1(&b, &a, None).unwrap().0);
            let dac = alpha_l1(&a, &c, None).unwrap().0;
            let dcb = alpha_l1(&c, &b, None).unwrap().0;
            prop_assert!(dab <= dac + dcb + 1e-12);

            let cab = comp_l1(&a, &b, &fg, &bg).unwrap().0;
            prop_assert!((cab - comp_l1(&b, &a, &fg, &bg).unwrap().0).abs() < 1e-12);
            let cac = comp_l1(&a, &c, &fg, &bg).unwrap().0;
            let ccb = comp_l1(&c, &b, &fg, &bg).unwrap().0;
            prop_assert!(cab <= cac + ccb + 1e-12);

            let max_gap = fg.iter().zip(&bg).map(|(f, b)| (f - b).abs()).fold(0.0, f64::max);
            prop_assert!(cab <= dab * max_gap + 1e-12);
        }
    }
}
