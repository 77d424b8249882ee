//! Grid files, observation masks, evaluation metrics and exports.

pub mod grid;
pub mod heatmap;
pub mod mask;
pub mod metrics;
pub mod profile;

pub use grid::{format_grid_csv, load_grid_csv, parse_grid_csv, save_grid_csv, GridField};
pub use heatmap::{render_heatmap, HeatmapOptions};
pub use mask::{make_mask, ObservationMask};
pub use metrics::{evaluate, metrics_over, EvalReport, Metrics};
pub use profile::{extract_profile, Profile, ProfileAxis};
