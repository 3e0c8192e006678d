//! Evaluation: metrics, Fréchet distances, comparison tables and visual outputs.

pub mod fid;
pub mod metrics;
pub mod report;
pub mod visual;

pub use fid::{
    feature_stats, frechet_distance, FeatureExtractor, FeatureStats, IdentityExtractor,
    RandomConvExtractor, DEFAULT_EXTRACTOR_SEED,
};
pub use metrics::{
    hamming_metric, mse_metric, ssim_loss_with_grad, ssim_metric, ssim_with_grad, SsimParams,
    BINARIZE_THRESHOLD,
};
pub use report::{
    best_per_column, csv_table, evaluate_model, evaluate_translators, text_table, MetricReport,
    Orientation, COLUMNS,
};
pub use visual::{
    embed_2d, embedding_csv, render_sample_grid, sample_grid, EmbedLabel, EmbeddedPoint, Pca,
    Projector, Raster,
};
