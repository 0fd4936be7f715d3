//! Uncertainty-driven coarse-to-fine stereo matching.
//!
//! The pipeline builds classical (census based) group-wise correlation cost
//! volumes, regresses disparity with a soft argmin, measures the per-pixel
//! variance of the matching distribution and uses it to narrow the search
//! range stage by stage. The same variance drives pseudo-label filtering,
//! confidence evaluation and a small self-adaptation loop.
//!
//! Inner loops are data-parallel through rayon when the `parallel` feature
//! (on by default) is enabled; every reduction runs in a fixed order so the
//! results are bit-identical for any thread count, and identical to the
//! sequential build.

pub mod adapt;
pub mod cascade;
pub mod config;
pub mod costvolume;
pub mod eval;
pub mod features;
pub(crate) mod grid;
pub mod par;
pub mod pseudolabel;
pub mod raster_io;

mod error;

pub use error::{Error, Result};

pub use adapt::{adapt_params, AdaptReport, AugmentConfig, SearchGrid, StereoPair, TunableParams};
pub use cascade::{
    next_stage_range, pixel_uncertainty, refine_disparity, run_cascade, sample_hypotheses,
    soft_argmin, CascadeParams, DisparityField, RangeField, StageTrace, UncertaintyField,
};
pub use config::PipelineConfig;
pub use costvolume::{
    aggregate, build_cost_volume, fuse_dense_volumes, softmin_probabilities, Aggregation,
    AggregationConfig, CostVolume, HypothesisSet, ProbabilityVolume, SgmPaths,
};
pub use eval::{
    bce_uncertainty_loss, compute_metrics, disparity_to_depth, roc_curve, silog_loss,
    smooth_l1_loss, LossConfig, MetricReport, RocCurve,
};
pub use features::{build_pyramid, census_transform, FeatureConfig, FeatureMap, ImagePyramid};
pub use pseudolabel::{
    area_uncertainty, filter_by_area_uncertainty, filter_by_pixel_uncertainty, gt_uncertainty_mask,
    label_stats, lrc_check, AreaFilterConfig, AreaUncertaintyField, BinaryMask, LabelStats,
    SparseLabelMap,
};
pub use raster_io::{
    generate_stereogram, read_image, read_kitti_png, read_pfm, write_image, write_kitti_png,
    write_pfm, CalibrationInfo, DisparityModel, DisparityRaster, RasterImage, Stereogram,
    StereogramSpec,
};
