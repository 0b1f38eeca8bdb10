//! Simulated robot-counting environment.

pub mod dataset;
pub mod kinematics;
pub mod render;
pub mod scene;

pub use dataset::{
    apportion, generate_dataset, generate_dataset_to_dir, generate_episode, load_dataset,
    read_manifest, write_dataset, zipf_counts, Dataset, DatasetConfig, DatasetManifest, Episode,
    EpisodeEntry, Frame, Split, FRACTIONS,
};
pub use kinematics::{forward_kinematics, inverse_kinematics, wrap_angle, ArmConfig, ArmPose};
pub use render::{render_scene, render_view, RenderConfig};
pub use scene::{Ball, WorkspaceScene};
