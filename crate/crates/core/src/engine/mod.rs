//! Masked-loss training, staged transfer and checkpoints.

pub mod checkpoint;
mod loss;
pub mod network;
mod optim;
mod params;
mod schedule;
mod stage;
pub mod train;

pub use checkpoint::{init_network, Checkpoint, CheckpointMeta, InitReport, InitSource};
pub use loss::{masked_bce, probabilities, sigmoid, MaskedBce};
pub use network::{Architecture, Model, NetTrace, Network};
pub use optim::Adam;
pub use params::{ParamStore, Tensor};
pub use schedule::lr_at;
pub use stage::{AdamConfig, InitSpec, StageConfig};
pub use train::{
    load_history, mean_ap, predict, run_stage, save_history, EpochRecord, LoadedTable, StageContext, StageOutcome,
};
