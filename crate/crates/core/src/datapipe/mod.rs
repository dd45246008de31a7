//! Dataset ingestion, training-pair construction, geometric augmentation,
//! and the procedural synthetic-face benchmark.

pub mod augment;
pub mod io;
pub mod manifest;
pub mod pairs;
pub mod synthetic;

pub use augment::{affine_warp, linear_augment, LINEAR_ROTATIONS, LINEAR_SHIFTS};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ManifestRecord};
pub use pairs::{build_pairs, plan_pairs, DirSource, ImageSource, MemorySource, PairSet, TrainingPair};
pub use synthetic::{gen_synthetic_dataset, render_synthetic_face, SyntheticDataset, SyntheticFaceSpec, SyntheticOracle};
