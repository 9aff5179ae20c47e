//! Dataset assembly, evaluation sweeps and report tables.

pub mod dataset;
pub mod eval;
pub mod report;
pub mod synth;

pub use dataset::{
    build_dataset, compose_dataset, data_root, distort_dataset, load_sample, load_split, DatasetConfig,
    DatasetManifest, SampleRecord, Split, DATA_ROOT_ENV, MANIFEST_FILE,
};
pub use eval::{evaluate_still, evaluate_video, predict_padded, EvalRow, FrameRecord, Predictor, StillReport, VideoEvalSpec, VideoRow};
pub use report::{still_table, summary_table, video_table, ReportRow, ReportTable, MEAN_ROW};
pub use synth::{synth_background, synth_foreground, write_synth_pool, AssetPool, ForegroundKind, SynthConfig, POOL_FILE};
