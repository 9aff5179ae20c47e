//! Rasters, the compositing model and trimap derivation.

mod compose;
mod io;
mod trimap;
mod types;

pub use compose::{compose, compose_slices};
pub use io::{load_alpha, load_image, load_trimap, save_alpha, save_image, save_trimap, BitDepth};
pub use trimap::{generate_trimap, render_trimap_channel};
pub use types::{
    AlphaMatte, CompositeSample, Dims, Image, Trimap, TrimapEncoding, TrimapLabel,
};
