//! Dataset manifests, sample preparation, splits, experiments and
//! activation grids.

mod experiment;
mod manifest;
mod samples;
mod split;
mod viz;

pub use experiment::{
    evaluate, predict_samples, run_experiment, run_on_samples, EvalReport, ExperimentConfig, DEFAULT_LAMBDA,
};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use samples::{
    build_samples, build_samples_where, channel_means, expand, prepare_entry, to_examples, to_network_input,
    AugmentedSample, InputMode,
};
pub use split::{stratified_split, Side, SplitAssignment};
pub use viz::{first_layer_activations, grid_side, min_max_normalize, ActivationGrid};
