use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::types::{AlphaMatte, Image, Trimap, TrimapLabel};
use crate::error::{Error, Result};

/// Integer depth of a stored raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::Parameter(format!("unsupported bit depth {other}"))),
        }
    }

    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }

    /// Largest representable step, `1 / (2^bits − 1)`.
    pub fn quantum(self) -> f64 {
        1.0 / self.max_code()
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    image::open(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })
}

fn is_sixteen_bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    )
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn codec_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Codec {
        path: path.to_path_buf(),
        source,
    }
}

fn quantize(v: f64, depth: BitDepth) -> f64 {
    (v.clamp(0.0, 1.0) * depth.max_code()).round()
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if is_sixteen_bit(&img) {
        img.into_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect()
    } else {
        img.into_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect()
    };
    Image::new(h, w, data)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let (w, h) = (img.width() as u32, img.height() as u32);
    match depth {
        BitDepth::Eight => {
            let raw = img.as_slice().iter().map(|&v| quantize(v, depth) as u8).collect();
            ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(w, h, raw)
                .expect("buffer length matches dims")
                .save(path)
                .map_err(codec_err(path))
        }
        BitDepth::Sixteen => {
            let raw = img.as_slice().iter().map(|&v| quantize(v, depth) as u16).collect();
            ImageBuffer::<Rgb<u16>, Vec<u16>>::from_raw(w, h, raw)
                .expect("buffer length matches dims")
                .save(path)
                .map_err(codec_err(path))
        }
    }
}

/// Loads a grayscale alpha; colour files use their luma.
pub fn load_alpha(path: impl AsRef<Path>) -> Result<AlphaMatte> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if is_sixteen_bit(&img) {
        img.into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect()
    } else {
        img.into_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect()
    };
    AlphaMatte::new(h, w, data)
}

pub fn save_alpha(alpha: &AlphaMatte, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let (w, h) = (alpha.width() as u32, alpha.height() as u32);
    match depth {
        BitDepth::Eight => {
            let raw = alpha.as_slice().iter().map(|&v| quantize(v, depth) as u8).collect();
            ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, raw)
                .expect("buffer length matches dims")
                .save(path)
                .map_err(codec_err(path))
        }
        BitDepth::Sixteen => {
            let raw = alpha.as_slice().iter().map(|&v| quantize(v, depth) as u16).collect();
            ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, raw)
                .expect("buffer length matches dims")
                .save(path)
                .map_err(codec_err(path))
        }
    }
}

/// Loads an 8-bit trimap. Values are binned to the nearest of {0, 128, 255}.
pub fn load_trimap(path: impl AsRef<Path>) -> Result<Trimap> {
    let path = path.as_ref();
    let img = open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = img
        .into_raw()
        .into_iter()
        .map(|v| match v {
            0..=63 => TrimapLabel::Background,
            192..=255 => TrimapLabel::Foreground,
            _ => TrimapLabel::Unknown,
        })
        .collect();
    Trimap::new(h, w, labels)
}

pub fn save_trimap(trimap: &Trimap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let d = trimap.dims();
    let raw = trimap.labels().iter().map(|l| l.byte()).collect();
    ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(d.width as u32, d.height as u32, raw)
        .expect("buffer length matches dims")
        .save(path)
        .map_err(codec_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn gray_sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gray.png");
        let img = Image::filled(8, 8, [0.5; 3]).unwrap();
        save_image(&img, &p, BitDepth::Sixteen).unwrap();
        let back = load_image(&p).unwrap();
        assert!(max_abs_diff(img.as_slice(), back.as_slice()) <= 1.0 / 65535.0);
    }

    #[test]
    fn random_eight_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rand.png");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image::from_fn(13, 17, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        save_image(&img, &p, BitDepth::Eight).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.dims(), img.dims());
        assert!(max_abs_diff(img.as_slice(), back.as_slice()) <= 1.0 / 255.0);

        let alpha = AlphaMatte::from_fn(5, 6, |_, _| rng.gen()).unwrap();
        let pa = dir.path().join("a.png");
        save_alpha(&alpha, &pa, BitDepth::Sixteen).unwrap();
        let back = load_alpha(&pa).unwrap();
        assert!(max_abs_diff(alpha.as_slice(), back.as_slice()) <= 1.0 / 65535.0);
    }

    #[test]
    fn trimap_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        let t = Trimap::new(
            1,
            3,
            vec![
                TrimapLabel::Background,
                TrimapLabel::Unknown,
                TrimapLabel::Foreground,
            ],
        )
        .unwrap();
        save_trimap(&t, &p).unwrap();
        assert_eq!(load_trimap(&p).unwrap(), t);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/definitely/not/here.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
