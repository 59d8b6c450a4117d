//! Episode storage, offline datasets and batch assembly.

mod batch;
mod buffer;
mod dataset;
mod record;
mod sampler;

pub use batch::Batch;
pub use buffer::ReplayBuffer;
pub use dataset::{Dataset, DatasetMeta, DatasetMode, DATASET_FORMAT_VERSION};
pub use record::{EpisodeRecord, FinalObservation, StepRecord};
pub use sampler::{offline_count, MixedSample, MixingRatioSampler};
