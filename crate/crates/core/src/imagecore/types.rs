use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial size of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn ensure_same(&self, other: Dims, what: &str) -> Result<()> {
        if *self != other {
            return Err(Error::shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

fn check_unit_range(data: &[f64], what: &str) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::Domain(format!("{what}: NaN at index {i}")));
        }
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Domain(format!(
                "{what}: value {v} at index {i} outside [0,1]"
            )));
        }
    }
    Ok(())
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::shape(format!("empty raster {height}x{width}")));
    }
    Ok(())
}

/// RGB raster with interleaved channels (row-major, `[y][x][c]`), values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    dims: Dims,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "image {height}x{width}x3 needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        check_unit_range(&data, "image")?;
        Ok(Self {
            dims: Dims::new(height, width),
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let data = std::iter::repeat_n(rgb, height * width)
            .flatten()
            .collect();
        Self::new(height, width, data)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    /// Clamps into [0,1]; only for values known to be finite.
    pub(crate) fn from_vec_clamped(dims: Dims, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.len() * 3);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.dims.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.dims.width + x) * 3 + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copies the `h`×`w` window whose top-left corner is (`y0`,`x0`).
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
        if y0 + h > self.dims.height || x0 + w > self.dims.width || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "crop {h}x{w}@({y0},{x0}) outside {}",
                self.dims
            )));
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            let row = (y * self.dims.width + x0) * 3;
            data.extend_from_slice(&self.data[row..row + w * 3]);
        }
        Ok(Image {
            dims: Dims::new(h, w),
            data,
        })
    }
}

/// Single-channel opacity raster, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte {
    dims: Dims,
    data: Vec<f64>,
}

impl AlphaMatte {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "alpha {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        check_unit_range(&data, "alpha")?;
        Ok(Self {
            dims: Dims::new(height, width),
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        check_dims(height, width)?;
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.dims.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<AlphaMatte> {
        if y0 + h > self.dims.height || x0 + w > self.dims.width || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "crop {h}x{w}@({y0},{x0}) outside {}",
                self.dims
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            let row = y * self.dims.width + x0;
            data.extend_from_slice(&self.data[row..row + w]);
        }
        Ok(AlphaMatte {
            dims: Dims::new(h, w),
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TrimapLabel {
    Background = 0,
    Unknown = 1,
    Foreground = 2,
}

impl TrimapLabel {
    pub fn from_index(v: u8) -> Option<Self> {
        match v {
            0 => Some(TrimapLabel::Background),
            1 => Some(TrimapLabel::Unknown),
            2 => Some(TrimapLabel::Foreground),
            _ => None,
        }
    }

    pub fn scalar(self) -> f64 {
        match self {
            TrimapLabel::Background => 0.0,
            TrimapLabel::Unknown => 0.5,
            TrimapLabel::Foreground => 1.0,
        }
    }

    /// Byte used in 8-bit trimap files.
    pub fn byte(self) -> u8 {
        match self {
            TrimapLabel::Background => 0,
            TrimapLabel::Unknown => 128,
            TrimapLabel::Foreground => 255,
        }
    }
}

/// How a trimap is laid out as numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrimapEncoding {
    /// {0, 1, 2}
    TernaryLabels,
    /// {0.0, 0.5, 1.0}, the single network input channel.
    ScalarChannel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    dims: Dims,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn new(height: usize, width: usize, labels: Vec<TrimapLabel>) -> Result<Self> {
        check_dims(height, width)?;
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "trimap {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            dims: Dims::new(height, width),
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: TrimapLabel) -> Result<Self> {
        check_dims(height, width)?;
        Self::new(height, width, vec![label; height * width])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn get(&self, y: usize, x: usize) -> TrimapLabel {
        self.labels[y * self.dims.width + x]
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }

    pub fn count(&self, label: TrimapLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn encode(&self, encoding: TrimapEncoding) -> Vec<f64> {
        match encoding {
            TrimapEncoding::TernaryLabels => self.labels.iter().map(|&l| l as u8 as f64).collect(),
            TrimapEncoding::ScalarChannel => self.labels.iter().map(|l| l.scalar()).collect(),
        }
    }

    /// Inverse of [`Trimap::encode`]; rejects values outside the encoding's alphabet.
    pub fn decode(
        height: usize,
        width: usize,
        values: &[f64],
        encoding: TrimapEncoding,
    ) -> Result<Self> {
        let labels = values
            .iter()
            .map(|&v| {
                let label = match encoding {
                    TrimapEncoding::TernaryLabels if v == 0.0 => Some(TrimapLabel::Background),
                    TrimapEncoding::TernaryLabels if v == 1.0 => Some(TrimapLabel::Unknown),
                    TrimapEncoding::TernaryLabels if v == 2.0 => Some(TrimapLabel::Foreground),
                    TrimapEncoding::ScalarChannel if v == 0.0 => Some(TrimapLabel::Background),
                    TrimapEncoding::ScalarChannel if v == 0.5 => Some(TrimapLabel::Unknown),
                    TrimapEncoding::ScalarChannel if v == 1.0 => Some(TrimapLabel::Foreground),
                    _ => None,
                };
                label.ok_or_else(|| Error::Domain(format!("{v} is not a {encoding:?} value")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(height, width, labels)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Trimap> {
        if y0 + h > self.dims.height || x0 + w > self.dims.width || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "crop {h}x{w}@({y0},{x0}) outside {}",
                self.dims
            )));
        }
        let mut labels = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            let row = y * self.dims.width + x0;
            labels.extend_from_slice(&self.labels[row..row + w]);
        }
        Ok(Trimap {
            dims: Dims::new(h, w),
            labels,
        })
    }
}

/// One training / evaluation record with all rasters resident.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSample {
    pub foreground: Image,
    pub background_clean: Image,
    pub background_distorted: Image,
    pub alpha_gt: AlphaMatte,
    pub trimap: Trimap,
    pub composite: Image,
}

impl CompositeSample {
    pub fn new(
        foreground: Image,
        background_clean: Image,
        background_distorted: Image,
        alpha_gt: AlphaMatte,
        trimap: Trimap,
        composite: Image,
    ) -> Result<Self> {
        let dims = foreground.dims();
        dims.ensure_same(background_clean.dims(), "clean background")?;
        dims.ensure_same(background_distorted.dims(), "distorted background")?;
        dims.ensure_same(alpha_gt.dims(), "alpha")?;
        dims.ensure_same(trimap.dims(), "trimap")?;
        dims.ensure_same(composite.dims(), "composite")?;
        Ok(Self {
            foreground,
            background_clean,
            background_distorted,
            alpha_gt,
            trimap,
            composite,
        })
    }

    pub fn dims(&self) -> Dims {
        self.foreground.dims()
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        Ok(Self {
            foreground: self.foreground.crop(y0, x0, h, w)?,
            background_clean: self.background_clean.crop(y0, x0, h, w)?,
            background_distorted: self.background_distorted.crop(y0, x0, h, w)?,
            alpha_gt: self.alpha_gt.crop(y0, x0, h, w)?,
            trimap: self.trimap.crop(y0, x0, h, w)?,
            composite: self.composite.crop(y0, x0, h, w)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_nan() {
        assert!(matches!(
            Image::new(1, 1, vec![0.0, 1.5, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            AlphaMatte::new(1, 1, vec![f64::NAN]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(Image::new(0, 3, vec![]), Err(Error::Shape(_))));
    }

    #[test]
    fn trimap_encodings_round_trip() {
        let labels = vec![
            TrimapLabel::Background,
            TrimapLabel::Unknown,
            TrimapLabel::Foreground,
            TrimapLabel::Unknown,
        ];
        let t = Trimap::new(2, 2, labels).unwrap();
        for enc in [TrimapEncoding::TernaryLabels, TrimapEncoding::ScalarChannel] {
            let v = t.encode(enc);
            assert_eq!(Trimap::decode(2, 2, &v, enc).unwrap(), t);
        }
        assert!(Trimap::decode(1, 1, &[0.25], TrimapEncoding::ScalarChannel).is_err());
    }

    #[test]
    fn sample_rejects_mismatched_members() {
        let a = Image::filled(4, 4, [0.5; 3]).unwrap();
        let b = Image::filled(4, 5, [0.5; 3]).unwrap();
        let alpha = AlphaMatte::filled(4, 4, 0.0).unwrap();
        let tri = Trimap::filled(4, 4, TrimapLabel::Unknown).unwrap();
        let err = CompositeSample::new(a.clone(), b, a.clone(), alpha, tri, a).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
