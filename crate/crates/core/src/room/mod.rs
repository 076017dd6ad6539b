//! Room-acoustic simulation: array geometry, image-source RIRs, scenario
//! sampling, and multichannel scene rendering.

pub mod array;
pub mod render;
pub mod rir;
pub mod scenario;

pub use array::{build_array, MicArray, CENTER_MIC, NUM_MICS};
pub use render::{make_noise, render};
pub use rir::{schroeder_t60, simulate_rir, simulate_rir_set, ImpulseResponse, Room, SPEED_OF_SOUND};
pub use scenario::{
    azimuth_distance, sample_scenario, NoiseKind, NoiseSpec, Scenario, ScenarioConfig,
    SpatialKind, CLASS_STEP_DEG, NUM_CLASSES,
};
