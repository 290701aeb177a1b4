//! JSON-lines detection/track files and the synthetic scenario generator.

mod formats;
mod sim;

pub use formats::{
    ego_to_world, frames_to_string, group_sequences, load_detections, load_frames, load_tracks, parse_frames,
    write_atomic, write_frames, FileKind, FrameRecord, ObjectRecord, Sequence,
};
pub use sim::{generate_scenario, Scenario, ScenarioSpec, TrajectoryKind};
