//! Offline-to-online cooperative multi-agent value learning at desk scale.
//!
//! QMIX value factorisation, conservative offline pretraining, fine-tuning
//! against an offline value memory, sequential exploration and exact
//! oracles for two small cooperative tasks.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod exploration;
pub mod harness;
pub mod layers;
pub mod learner;
pub mod networks;
pub mod optim;
pub mod oracle;
pub mod params;
pub mod replay;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
