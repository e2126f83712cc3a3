//! Driving-log ingestion, frame IO, augmentation, splitting, and the
//! synthetic dataset generator.

pub mod augment;
pub mod frame;
pub mod log;
pub mod record;
pub mod split;
pub mod synth;
pub mod udacity;

pub use augment::{augment_flip, flip_width};
pub use frame::{
    denormalize_image, normalize_image, read_ppm, sequence_ending_at, write_ppm, FrameSequence,
    RgbImage,
};
pub use log::{load_log, save_log, LOG_HEADER};
pub use record::DrivingRecord;
pub use split::{split, Dataset};
pub use synth::{generate_streams, render_frame, synth_generate, SynthConfig, FRAME_DIR, LOG_NAME, MAX_ANGLE};
