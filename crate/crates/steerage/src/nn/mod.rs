//! Hierarchical steering networks: a recurrent convolutional worker that
//! emits angles, the manager variants that hand it a subroutine id, shared
//! parameter plumbing, autoregressive rollout, and checkpointing.

pub mod checkpoint;
pub mod manager;
pub mod param;
pub mod rollout;
pub mod worker;

pub use checkpoint::Checkpoint;
pub use manager::{
    CentroidLookup, Manager, ManagerStep, Mode, SubroutineId, SubroutineIdNet,
    SubroutineIdNetConfig, TsneManagerConfig, TsneManagerNet, MANAGER_STAGES,
};
pub use param::{Conv1dBlock, Conv3dBlock, Dense, Init, LstmBlock, NormBlock, ParamSet};
pub use rollout::{rollout, PredictionRecord};
pub use worker::{WorkerConfig, WorkerNet, WorkerStep, WORKER_STAGES};
