//! Composite dataset assembly and the JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{resize, FilterType};
use image::{ImageBuffer, Rgb};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::AssetPool;
use crate::distort::{distort_indexed, DistortionConfig, DistortionMode};
use crate::error::{Error, Result};
use crate::imagecore::{
    compose, generate_trimap, load_alpha, load_image, load_trimap, save_alpha, save_image, save_trimap, BitDepth,
    CompositeSample, Dims, Image,
};

/// Overrides the directory that relative manifest paths resolve against.
pub const DATA_ROOT_ENV: &str = "BGMATTE_DATA_ROOT";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub backgrounds_per_fg: usize,
    /// Trailing foregrounds held out for the test split.
    pub test_foregrounds: usize,
    /// Trimap unknown-band radius in pixels.
    pub band_radius: usize,
    pub bit_depth: BitDepth,
    pub seed: u64,
    pub distortion: DistortionConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            backgrounds_per_fg: 2,
            test_foregrounds: 1,
            band_radius: 4,
            bit_depth: BitDepth::Eight,
            seed: 0,
            distortion: DistortionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub foreground: PathBuf,
    pub alpha: PathBuf,
    /// Clean background at the foreground's size.
    pub background: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trimap: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_m: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_h: Option<PathBuf>,
    pub split: Split,
}

impl SampleRecord {
    pub fn distorted(&self, mode: DistortionMode) -> Option<&PathBuf> {
        match mode {
            DistortionMode::M => self.background_m.as_ref(),
            DistortionMode::H => self.background_h.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: DatasetConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub provenance: Provenance,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &SampleRecord)> {
        self.records.iter().enumerate().filter(move |(_, r)| r.split == split)
    }

    /// Checks that every referenced file exists under `root` and ids are unique.
    pub fn validate(&self, root: &Path) -> Result<()> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate record id {}", w[0])));
        }
        for r in &self.records {
            let required = [&r.foreground, &r.alpha, &r.background];
            let optional = [&r.composite, &r.trimap, &r.background_m, &r.background_h];
            for p in required.into_iter().chain(optional.into_iter().flatten()) {
                let full = resolve(root, p);
                if !full.exists() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Base directory for a manifest's relative paths.
pub fn data_root(manifest_path: &Path) -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

pub fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Bilinear resize via the image crate.
pub fn resize_image(img: &Image, dims: Dims) -> Result<Image> {
    if img.dims() == dims {
        return Ok(img.clone());
    }
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.as_slice().iter().map(|&v| v as f32).collect(),
    )
    .ok_or_else(|| Error::shape("raster buffer size"))?;
    let out = resize(&buf, dims.width as u32, dims.height as u32, FilterType::Triangle);
    let data = out.into_raw().into_iter().map(|v| f64::from(v).clamp(0.0, 1.0)).collect();
    Image::new(dims.height, dims.width, data)
}

/// Composes every foreground with `backgrounds_per_fg` backgrounds and writes
/// foreground, alpha, resized background, composite and trimap per record.
pub fn compose_dataset(pool: &AssetPool, pool_dir: &Path, cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if pool.foregrounds.is_empty() || pool.backgrounds.is_empty() {
        return Err(Error::Config("foreground and background pools must be nonempty".into()));
    }
    if cfg.backgrounds_per_fg == 0 {
        return Err(Error::Config("backgrounds_per_fg must be >= 1".into()));
    }
    if cfg.test_foregrounds > pool.foregrounds.len() {
        return Err(Error::Config(format!(
            "test_foregrounds {} exceeds pool size {}",
            cfg.test_foregrounds,
            pool.foregrounds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_bg = pool.backgrounds.len();
    let first_test = pool.foregrounds.len() - cfg.test_foregrounds;
    let mut jobs = Vec::new();
    for (i, _) in pool.foregrounds.iter().enumerate() {
        let picks: Vec<usize> = if cfg.backgrounds_per_fg <= n_bg {
            sample_indices(&mut rng, n_bg, cfg.backgrounds_per_fg).into_vec()
        } else {
            (0..cfg.backgrounds_per_fg).map(|k| k % n_bg).collect()
        };
        for (k, b) in picks.into_iter().enumerate() {
            jobs.push((i, k, b));
        }
    }
    let records = jobs
        .par_iter()
        .map(|&(i, k, b)| {
            let item = &pool.foregrounds[i];
            let fg = load_image(resolve(pool_dir, &item.foreground))?;
            let alpha = load_alpha(resolve(pool_dir, &item.alpha))?;
            fg.dims().ensure_same(alpha.dims(), "foreground alpha")?;
            let bg = resize_image(&load_image(resolve(pool_dir, &pool.backgrounds[b]))?, fg.dims())?;
            let composite = compose(&fg, &bg, &alpha)?;
            let trimap = generate_trimap(&alpha, cfg.band_radius)?;
            let id = format!("{i:04}_{k:02}");
            let rec = SampleRecord {
                foreground: PathBuf::from(format!("foreground/{i:04}.png")),
                alpha: PathBuf::from(format!("alpha/{i:04}.png")),
                background: PathBuf::from(format!("background/{id}.png")),
                composite: Some(PathBuf::from(format!("composite/{id}.png"))),
                trimap: Some(PathBuf::from(format!("trimap/{id}.png"))),
                background_m: None,
                background_h: None,
                split: if i >= first_test { Split::Test } else { Split::Train },
                id,
            };
            // Shared per-foreground files are rewritten identically by each pairing.
            if k == 0 {
                save_image(&fg, out_dir.join(&rec.foreground), cfg.bit_depth)?;
                save_alpha(&alpha, out_dir.join(&rec.alpha), cfg.bit_depth)?;
            }
            save_image(&bg, out_dir.join(&rec.background), cfg.bit_depth)?;
            save_image(&composite, out_dir.join(rec.composite.as_ref().unwrap()), cfg.bit_depth)?;
            save_trimap(&trimap, out_dir.join(rec.trimap.as_ref().unwrap()))?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        records,
        provenance: Provenance {
            config: cfg.clone(),
            seed: cfg.seed,
        },
    })
}

/// Writes the distorted background of every record for each mode in `modes`.
pub fn distort_dataset(
    manifest: &mut DatasetManifest,
    root: &Path,
    distortion: &DistortionConfig,
    modes: &[DistortionMode],
    depth: BitDepth,
) -> Result<()> {
    distortion.validate()?;
    for &mode in modes {
        let cfg = DistortionConfig {
            mode,
            ..distortion.clone()
        };
        let dir = match mode {
            DistortionMode::M => "background_m",
            DistortionMode::H => "background_h",
        };
        let paths = manifest
            .records
            .par_iter()
            .enumerate()
            .map(|(idx, r)| {
                let bg = load_image(resolve(root, &r.background))?;
                let d = distort_indexed(&bg, &cfg, idx as u64)?;
                let rel = PathBuf::from(format!("{dir}/{}.png", r.id));
                save_image(&d.image, resolve(root, &rel), depth)?;
                Ok(rel)
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, p) in manifest.records.iter_mut().zip(paths) {
            match mode {
                DistortionMode::M => r.background_m = Some(p),
                DistortionMode::H => r.background_h = Some(p),
            }
        }
    }
    manifest.provenance.config.distortion = distortion.clone();
    Ok(())
}

/// Composition followed by both distortion sets.
pub fn build_dataset(pool: &AssetPool, pool_dir: &Path, cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let mut manifest = compose_dataset(pool, pool_dir, cfg, out_dir)?;
    distort_dataset(
        &mut manifest,
        out_dir,
        &cfg.distortion,
        &[DistortionMode::M, DistortionMode::H],
        cfg.bit_depth,
    )?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Loads one record; missing derived files are recomputed from their sources.
pub fn load_sample(root: &Path, record: &SampleRecord, mode: DistortionMode, index: usize, distortion: &DistortionConfig) -> Result<CompositeSample> {
    let fg = load_image(resolve(root, &record.foreground))?;
    let alpha = load_alpha(resolve(root, &record.alpha))?;
    let bg = load_image(resolve(root, &record.background))?;
    let composite = match &record.composite {
        Some(p) => load_image(resolve(root, p))?,
        None => compose(&fg, &bg, &alpha)?,
    };
    let trimap = match &record.trimap {
        Some(p) => load_trimap(resolve(root, p))?,
        None => generate_trimap(&alpha, DatasetConfig::default().band_radius)?,
    };
    let distorted = match record.distorted(mode) {
        Some(p) => load_image(resolve(root, p))?,
        None => {
            let cfg = DistortionConfig {
                mode,
                ..distortion.clone()
            };
            distort_indexed(&bg, &cfg, index as u64)?.image
        }
    };
    CompositeSample::new(fg, bg, distorted, alpha, trimap, composite)
}

/// All samples of one split.
pub fn load_split(manifest: &DatasetManifest, root: &Path, split: Split, mode: DistortionMode) -> Result<Vec<CompositeSample>> {
    manifest
        .split(split)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, r)| load_sample(root, r, mode, i, &manifest.provenance.config.distortion))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{write_synth_pool, SynthConfig, POOL_FILE};

    fn pool(dir: &Path, fgs: usize, bgs: usize) -> AssetPool {
        write_synth_pool(
            dir,
            &SynthConfig {
                foregrounds: fgs,
                backgrounds: bgs,
                size: 24,
                background_size: 30,
                seed: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn three_by_two_gives_six_records() {
        let (p, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let pl = pool(p.path(), 3, 2);
        let m = build_dataset(&pl, p.path(), &DatasetConfig::default(), out.path()).unwrap();
        assert_eq!(m.records.len(), 6);
        m.validate(out.path()).unwrap();
        assert_eq!(m.split(Split::Test).count(), 2);
        let reloaded = DatasetManifest::load(&out.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(reloaded, m);
        assert!(m.records.iter().all(|r| r.background_m.is_some() && r.background_h.is_some()));
    }

    #[test]
    fn full_scale_arithmetic() {
        assert_eq!(431 * 100, 43_100);
    }

    #[test]
    fn composites_match_recomputation() {
        let (p, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let pl = pool(p.path(), 2, 2);
        let m = build_dataset(&pl, p.path(), &DatasetConfig::default(), out.path()).unwrap();
        let q = BitDepth::Eight.quantum();
        for (i, r) in m.records.iter().enumerate() {
            let s = load_sample(out.path(), r, DistortionMode::M, i, &m.provenance.config.distortion).unwrap();
            let again = compose(&s.foreground, &s.background_clean, &s.alpha_gt).unwrap();
            let worst = again
                .as_slice()
                .iter()
                .zip(s.composite.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= q, "{}: {worst}", r.id);
        }
    }

    #[test]
    fn builds_are_deterministic() {
        let p = tempfile::tempdir().unwrap();
        let pl = pool(p.path(), 2, 3);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = DatasetConfig {
            seed: 9,
            ..Default::default()
        };
        let ma = build_dataset(&pl, p.path(), &cfg, a.path()).unwrap();
        let mb = build_dataset(&pl, p.path(), &cfg, b.path()).unwrap();
        assert_eq!(ma, mb);
        for r in &ma.records {
            let p = r.background_h.as_ref().unwrap();
            assert_eq!(fs::read(a.path().join(p)).unwrap(), fs::read(b.path().join(p)).unwrap());
        }
        assert!(p.path().join(POOL_FILE).exists());
    }

    #[test]
    fn empty_pools_are_rejected() {
        let out = tempfile::tempdir().unwrap();
        let empty = AssetPool::default();
        assert!(matches!(
            compose_dataset(&empty, out.path(), &DatasetConfig::default(), out.path()),
            Err(Error::Config(_))
        ));
    }
}
