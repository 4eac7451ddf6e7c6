//! Minimal deterministic CNN engine: forward, backward, SGD and exact
//! parameter/FLOP accounting, all in `f64`.

pub mod accounting;
pub mod checkpoint;
pub mod data;
pub mod engine;
pub mod params;
pub mod spec;
pub mod train;

pub use accounting::{count_flops, count_params, network_flops, ParamCount};
pub use checkpoint::Checkpoint;
pub use data::{Dataset, PatternFamily, Sample, SyntheticSpec};
pub use engine::{backward, forward, loss_and_gradients, Activations, Tensor};
pub use params::{sgd_step, FreezeMask, Gradients, LayerParams, ParamStore, BYTES_PER_VALUE};
pub use spec::{LayerSpec, NetworkSpec, TensorShape};
pub use train::{accuracy, train, TrainConfig, TrainStats};
