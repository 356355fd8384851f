//! Neural-network quantum states restricted to separable architectures, and
//! the fidelity-witness machinery that turns their learning performance into
//! entanglement statements.

pub mod classify;
pub mod error;
pub mod learning;
pub mod nqs;
pub mod sampling;
pub mod separability;
pub mod states;

pub use classify::{
    classify, critical_fidelity_oracle, measure_gme, run_trials, train_trials,
    ClassificationReport, PerformanceSet, ProtocolConfig, Verdict,
};
pub use error::{Error, Result};
pub use learning::{
    build_learner, fidelity, train, ArchitectureConfig, FidelityTrace, LearningConfig, Optimizer,
};
pub use nqs::{build_target, NeuralState, RbmParams, SpinConfiguration, TargetState};
pub use sampling::{Backend, ExpectationEstimate, SamplerConfig};
pub use separability::{make_mask, PartitionSpec, SegmentationMask};
pub use states::{from_descriptor, NamedTarget};
