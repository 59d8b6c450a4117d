//! Offline pretraining and online fine-tuning updates.

mod objective;
mod offline;
mod online;

pub use objective::{
    accumulate_gradients, chosen_q_tot, cql_penalty, draw_cql_samples, objective_value,
    ovm_loss, ovm_target, td_loss, td_targets, CqlRow, CqlSamples, CqlTerm, LossTerms,
    MemoryTerm, MuMode, Objective,
};
pub use offline::{
    OfflineArtifacts, OfflineConfig, OfflineLearner, OfflineMetrics, OFFLINE_TARGET_FILE,
    POLICY_FILE,
};
pub use online::{OnlineConfig, OnlineLearner, OnlineMetrics};
