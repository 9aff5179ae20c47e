//! Dense kernels behind the convolution ops.

use crate::error::{Error, Result};

/// Square-kernel convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize, dilation: usize) -> Self {
        Self {
            kernel,
            stride,
            pad,
            dilation,
        }
    }

    /// Output extent of a convolution over an input of extent `n`.
    pub fn conv_out(&self, n: usize) -> Result<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = n + 2 * self.pad;
        if padded < span {
            return Err(Error::shape(format!(
                "input extent {n} too small for kernel span {span} (pad {})",
                self.pad
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }

    /// Output extent of the transposed convolution over extent `n`.
    pub fn transposed_out(&self, n: usize) -> Result<usize> {
        let full = (n - 1) * self.stride + self.dilation * (self.kernel - 1) + 1;
        if full <= 2 * self.pad {
            return Err(Error::shape(format!(
                "transposed conv output non-positive for extent {n}"
            )));
        }
        Ok(full - 2 * self.pad)
    }
}

/// `c = a·b` (or `c += a·b`), row-major, with optional transposes of the stored operands.
///
/// `a` is `m×k` after the optional transpose, `b` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n)
    // and `c` (m×n); lengths are checked above in debug builds and by every
    // caller's shape arithmetic.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds one `C×H×W` sample into `(C·k·k) × (Ho·Wo)` columns.
#[allow(clippy::too_many_arguments)]
pub fn im2col(
    src: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    g: ConvGeom,
    out_h: usize,
    out_w: usize,
    cols: &mut [f64],
) {
    let k = g.kernel;
    let plane = out_h * out_w;
    for c in 0..channels {
        let chan = &src[c * height * width..(c + 1) * height * width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * plane;
                let dst = &mut cols[row..row + plane];
                let off_y = (ky * g.dilation) as isize - g.pad as isize;
                let off_x = (kx * g.dilation) as isize - g.pad as isize;
                for oy in 0..out_h {
                    let iy = (oy * g.stride) as isize + off_y;
                    let line = &mut dst[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &chan[iy as usize * width..(iy as usize + 1) * width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride) as isize + off_x;
                        *v = if ix < 0 || ix >= width as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dst`.
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    cols: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    g: ConvGeom,
    out_h: usize,
    out_w: usize,
    dst: &mut [f64],
) {
    let k = g.kernel;
    let plane = out_h * out_w;
    for c in 0..channels {
        let chan = &mut dst[c * height * width..(c + 1) * height * width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * plane;
                let col = &cols[row..row + plane];
                let off_y = (ky * g.dilation) as isize - g.pad as isize;
                let off_x = (kx * g.dilation) as isize - g.pad as isize;
                for oy in 0..out_h {
                    let iy = (oy * g.stride) as isize + off_y;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    let base = iy as usize * width;
                    for ox in 0..out_w {
                        let ix = (ox * g.stride) as isize + off_x;
                        if ix >= 0 && ix < width as isize {
                            chan[base + ix as usize] += col[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
}
