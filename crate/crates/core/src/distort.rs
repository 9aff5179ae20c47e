//! Background degradation that mimics reconstruction artifacts.
//!
//! Two generators are provided. The mild set (`M`) puts one blurred,
//! shifted hexagonal patch on a random subset of backgrounds; the heavy set
//! (`H`) blurs the whole image first and then applies a patch.

use std::f64::consts::FRAC_PI_3;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Dims, Image};

pub const MIN_DIAMETER: f64 = 120.0;
pub const MAX_DIAMETER: f64 = 345.0;
/// Number of evenly spaced candidate rotations in `[0, π/3)`.
pub const ROTATION_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistortionMode {
    M,
    H,
}

impl std::str::FromStr for DistortionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "m" => Ok(DistortionMode::M),
            "H" | "h" => Ok(DistortionMode::H),
            other => Err(Error::Parameter(format!("unknown distortion mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for DistortionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistortionMode::M => "M",
            DistortionMode::H => "H",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexPatchSpec {
    /// (x, y) in pixel coordinates.
    pub center: (f64, f64),
    /// Vertex-to-vertex diameter in pixels.
    pub diameter: f64,
    pub rotation: f64,
    pub blur_sigma: f64,
    /// (dx, dy): the patch at (x, y) shows the blurred background at (x+dx, y+dy).
    pub translation: (i32, i32),
}

impl HexPatchSpec {
    pub fn validate(&self, dims: Dims) -> Result<()> {
        if !(MIN_DIAMETER..=MAX_DIAMETER).contains(&self.diameter) {
            return Err(Error::Parameter(format!(
                "hexagon diameter {} outside [{MIN_DIAMETER}, {MAX_DIAMETER}]",
                self.diameter
            )));
        }
        let (x, y) = self.center;
        if !(0.0..=(dims.width - 1) as f64).contains(&x)
            || !(0.0..=(dims.height - 1) as f64).contains(&y)
        {
            return Err(Error::Parameter(format!(
                "hexagon centre ({x}, {y}) outside {dims}"
            )));
        }
        if !(self.blur_sigma >= 0.0) || !self.rotation.is_finite() {
            return Err(Error::Parameter("non-finite rotation or negative sigma".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionConfig {
    pub mode: DistortionMode,
    /// Probability that an `M`-mode background receives a patch.
    pub m_distort_fraction: f64,
    pub global_blur_sigma_range: (f64, f64),
    pub patch_sigma_range: (f64, f64),
    pub translation_range: (i32, i32),
    pub rng_seed: u64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            mode: DistortionMode::M,
            m_distort_fraction: 0.5,
            global_blur_sigma_range: (1.0, 4.0),
            patch_sigma_range: (2.0, 12.0),
            translation_range: (-30, 30),
            rng_seed: 0,
        }
    }
}

impl DistortionConfig {
    pub fn with_mode(mode: DistortionMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.m_distort_fraction) {
            return Err(Error::Config(format!(
                "m_distort_fraction {} outside [0,1]",
                self.m_distort_fraction
            )));
        }
        for (name, (lo, hi)) in [
            ("global_blur_sigma_range", self.global_blur_sigma_range),
            ("patch_sigma_range", self.patch_sigma_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("{name} ({lo}, {hi}) is invalid")));
            }
        }
        let (lo, hi) = self.translation_range;
        if lo > hi {
            return Err(Error::Config(format!("translation_range ({lo}, {hi}) is invalid")));
        }
        Ok(())
    }
}

/// Draws a patch: centre uniform over pixel positions, diameter uniform in
/// [120, 345], rotation from [`ROTATION_STEPS`] angles spanning `[0, π/3)`.
pub fn sample_hex_patch(rng: &mut impl Rng, dims: Dims, cfg: &DistortionConfig) -> HexPatchSpec {
    let center = (
        rng.gen_range(0..dims.width) as f64,
        rng.gen_range(0..dims.height) as f64,
    );
    let diameter = rng.gen_range(MIN_DIAMETER..=MAX_DIAMETER);
    let step = rng.gen_range(0..ROTATION_STEPS);
    let rotation = step as f64 * FRAC_PI_3 / ROTATION_STEPS as f64;
    let (slo, shi) = cfg.patch_sigma_range;
    let blur_sigma = rng.gen_range(slo..=shi);
    let (tlo, thi) = cfg.translation_range;
    let translation = (rng.gen_range(tlo..=thi), rng.gen_range(tlo..=thi));
    HexPatchSpec {
        center,
        diameter,
        rotation,
        blur_sigma,
        translation,
    }
}

/// Filled regular hexagon, clipped to the raster, row-major.
pub fn hex_mask(spec: &HexPatchSpec, dims: Dims) -> Vec<bool> {
    let radius = spec.diameter / 2.0;
    // Six-fold symmetry: reduce first so equivalent rotations rasterize identically.
    let theta = spec.rotation.rem_euclid(FRAC_PI_3);
    let (sin, cos) = theta.sin_cos();
    let sqrt3 = 3f64.sqrt();
    let half_height = radius * sqrt3 / 2.0;
    let (cx, cy) = spec.center;
    let mut mask = Vec::with_capacity(dims.len());
    for y in 0..dims.height {
        for x in 0..dims.width {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            mask.push(v.abs() <= half_height && sqrt3 * u.abs() + v.abs() <= sqrt3 * radius);
        }
    }
    mask
}

/// Area of a regular hexagon with the given vertex-to-vertex diameter.
pub fn hexagon_area(diameter: f64) -> f64 {
    3.0 * 3f64.sqrt() / 8.0 * diameter * diameter
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as usize;
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur with edge replication.
///
/// Each pass accumulates deviations from the centre sample, so flat regions
/// come out bit-identical.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (h, w) = (img.height() as isize, img.width() as isize);
    let src = img.as_slice();

    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let centre = ((y * w + x) * 3) as usize;
                for c in 0..3 {
                    let base = src[centre + c];
                    let mut acc = 0.0;
                    for (k, wgt) in kernel.iter().enumerate() {
                        let off = k as isize - r;
                        let (yy, xx) = if horizontal {
                            (y, (x + off).clamp(0, w - 1))
                        } else {
                            ((y + off).clamp(0, h - 1), x)
                        };
                        acc += wgt * (src[((yy * w + xx) * 3) as usize + c] - base);
                    }
                    out[centre + c] = base + acc;
                }
            }
        }
        out
    };
    let tmp = pass(src, true);
    let out = pass(&tmp, false);
    Image::from_vec_clamped(img.dims(), out)
}

/// Replaces the hexagon interior with a blurred, shifted copy of `bg`.
pub fn apply_patch_blur(bg: &Image, spec: &HexPatchSpec) -> Image {
    let dims = bg.dims();
    let mask = hex_mask(spec, dims);
    let blurred = gaussian_blur(bg, spec.blur_sigma);
    let (dx, dy) = spec.translation;
    let (h, w) = (dims.height as i64, dims.width as i64);
    let mut out = bg.as_slice().to_vec();
    let b = blurred.as_slice();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !mask[i] {
                continue;
            }
            let sy = (y + dy as i64).clamp(0, h - 1);
            let sx = (x + dx as i64).clamp(0, w - 1);
            let j = (sy * w + sx) as usize;
            out[i * 3..i * 3 + 3].copy_from_slice(&b[j * 3..j * 3 + 3]);
        }
    }
    Image::from_vec_clamped(dims, out)
}

/// A distorted background plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Distorted {
    pub image: Image,
    pub global_sigma: Option<f64>,
    pub patch: Option<HexPatchSpec>,
}

pub fn distort_background(
    bg: &Image,
    cfg: &DistortionConfig,
    rng: &mut impl Rng,
) -> Result<Distorted> {
    cfg.validate()?;
    let dims = bg.dims();
    match cfg.mode {
        DistortionMode::M => {
            if !rng.gen_bool(cfg.m_distort_fraction) {
                return Ok(Distorted {
                    image: bg.clone(),
                    global_sigma: None,
                    patch: None,
                });
            }
            let spec = sample_hex_patch(rng, dims, cfg);
            Ok(Distorted {
                image: apply_patch_blur(bg, &spec),
                global_sigma: None,
                patch: Some(spec),
            })
        }
        DistortionMode::H => {
            let (lo, hi) = cfg.global_blur_sigma_range;
            let sigma = rng.gen_range(lo..=hi);
            let blurred = gaussian_blur(bg, sigma);
            let spec = sample_hex_patch(rng, dims, cfg);
            Ok(Distorted {
                image: apply_patch_blur(&blurred, &spec),
                global_sigma: Some(sigma),
                patch: Some(spec),
            })
        }
    }
}

/// Per-image RNG stream: `seed = rng_seed + index`.
pub fn image_rng(cfg: &DistortionConfig, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(index))
}

/// [`distort_background`] with the per-image seed for the `index`-th image.
pub fn distort_indexed(bg: &Image, cfg: &DistortionConfig, index: u64) -> Result<Distorted> {
    distort_background(bg, cfg, &mut image_rng(cfg, index))
}
