//! Claims, propagation graphs, dataset files, fold planning and synthetic data.

mod claim;
mod dataset;
mod folds;
mod synth;
mod tensor_io;

pub use claim::{
    normalized_adjacency, supplement_root, validate_tree, Claim, PropagationGraph, FALSE_RUMOR,
    NON_RUMOR,
};
pub use dataset::{assets_dir, load_dataset, save_dataset, snap_f32, Dataset, SaveOptions};
pub use folds::{make_folds, validation_count, FoldPlan, FoldSplit, VALIDATION_FRACTION};
pub use synth::{random_recursive_tree, synth_generate, SynthConfig};
pub use tensor_io::{
    decode_ppm, decode_tensor, encode_ppm, encode_tensor, load_image, load_ppm, load_tensor,
    save_tensor, VGT_MAGIC,
};
