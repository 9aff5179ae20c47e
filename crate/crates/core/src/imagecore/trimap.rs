use super::types::{AlphaMatte, Trimap, TrimapLabel};
use crate::error::{Error, Result};

/// Summed-area table over an indicator, with a zero row/column prepended.
struct Integral {
    width: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(height: usize, width: usize, indicator: impl Fn(usize) -> bool) -> Self {
        let stride = width + 1;
        let mut sums = vec![0u32; (height + 1) * stride];
        for y in 0..height {
            let mut row = 0u32;
            for x in 0..width {
                row += indicator(y * width + x) as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width, sums }
    }

    /// Count over rows `y0..y1`, columns `x0..x1`.
    fn count(&self, y0: usize, y1: usize, x0: usize, x1: usize) -> u32 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0]
            - self.sums[y0 * s + x1]
            - self.sums[y1 * s + x0]
    }
}

/// Derives a trimap from ground-truth alpha.
///
/// A pixel is foreground when every alpha in its `(2r+1)²` square window
/// (clipped to the image) equals 1, background when every alpha there is 0,
/// and unknown otherwise. This is the square-element dilation of the
/// fractional region plus the 0/1 transitions.
pub fn generate_trimap(alpha: &AlphaMatte, band_radius: usize) -> Result<Trimap> {
    if band_radius < 1 {
        return Err(Error::Parameter("band_radius must be >= 1".into()));
    }
    let (h, w) = (alpha.height(), alpha.width());
    let a = alpha.as_slice();
    let not_one = Integral::new(h, w, |i| a[i] != 1.0);
    let not_zero = Integral::new(h, w, |i| a[i] != 0.0);
    let r = band_radius;
    let mut labels = Vec::with_capacity(h * w);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let label = if not_one.count(y0, y1, x0, x1) == 0 {
                TrimapLabel::Foreground
            } else if not_zero.count(y0, y1, x0, x1) == 0 {
                TrimapLabel::Background
            } else {
                TrimapLabel::Unknown
            };
            labels.push(label);
        }
    }
    Trimap::new(h, w, labels)
}

/// Scalar network channel {0.0, 0.5, 1.0}, row-major.
pub fn render_trimap_channel(trimap: &Trimap) -> Vec<f64> {
    trimap.encode(super::types::TrimapEncoding::ScalarChannel)
}
