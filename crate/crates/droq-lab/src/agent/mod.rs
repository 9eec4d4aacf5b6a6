//! Algorithm variants and the unified trainer.

mod config;
mod ops;
mod trainer;
mod variant;

pub use config::{ResolvedConfig, TrainerConfig, DROPOUT_RATE_SWEEP};
pub use ops::{
    assemble_target, compute_target, policy_update_step, q_update_step, select_subset, Batch,
    EnsembleObjective,
};
pub use trainer::{StepTiming, Trainer, UpdateCounters, UpdateSnapshot};
pub use variant::{
    parse_variant_tag, AlgorithmVariant, BaseAlgorithm, PolicyObjective, TargetRule, VariantSpec,
};
