//! From-scratch CNN for azimuth classification: dense f64 tensors, manual
//! backprop, Adam, and a small binary model format.

pub mod adam;
pub mod config;
pub mod layers;
pub mod model;

mod io;

pub use adam::{AdamState, ADAM_LR};
pub use config::ModelConfig;
pub use io::{load_model, save_model, FORMAT_VERSION};
pub use model::{
    argmax_lowest, forward, loss_and_grads, map_to_input, model_init, param_count, predict,
    train_step, Batch, Grads, Model, BN_MOMENTUM, INPUT_LEN,
};
