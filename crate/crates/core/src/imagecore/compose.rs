use super::types::{AlphaMatte, Image};
use crate::error::{Error, Result};

/// Blends `fg` over `bg`: `out = alpha·fg + (1 − alpha)·bg` per channel.
pub fn compose(fg: &Image, bg: &Image, alpha: &AlphaMatte) -> Result<Image> {
    let dims = fg.dims();
    dims.ensure_same(bg.dims(), "compose background")?;
    dims.ensure_same(alpha.dims(), "compose alpha")?;
    let data = compose_slices(fg.as_slice(), bg.as_slice(), alpha.as_slice())?;
    Ok(Image::from_vec_clamped(dims, data))
}

/// Slice form of [`compose`] over interleaved RGB buffers; checks lengths and NaNs.
pub fn compose_slices(fg: &[f64], bg: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    if fg.len() != bg.len() || fg.len() != alpha.len() * 3 {
        return Err(Error::shape(format!(
            "compose buffers: fg {} / bg {} / alpha {}",
            fg.len(),
            bg.len(),
            alpha.len()
        )));
    }
    if let Some(i) = fg
        .iter()
        .chain(bg)
        .chain(alpha)
        .position(|v| v.is_nan())
    {
        return Err(Error::Domain(format!("NaN in compose input (flat index {i})")));
    }
    let mut out = Vec::with_capacity(fg.len());
    for (i, &a) in alpha.iter().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            out.push((a * fg[k] + (1.0 - a) * bg[k]).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[allow(dead_code)]
pub(crate) fn composite_value(fg: f64, bg: f64, alpha: f64) -> f64 {
    alpha * fg + (1.0 - alpha) * bg
}
