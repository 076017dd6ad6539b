//! Training and evaluation pipeline: dataset generation, the training loop,
//! the trial protocol and benchmark tables.

pub mod eval;
pub mod train;

pub use eval::{
    angular_error, circular_median, detect_speech_frames, evaluate_trial, gen_eval_trial, median,
    run_benchmark, AggregateRow, BenchmarkReport, Trial, TrialResult, TrialRow, SPEECH_GATE_DB,
    TRIAL_SECONDS,
};
pub use train::{
    gen_dataset, gen_training_sample, train, train_resume, white_noise, EpochLog, TrainConfig,
    ACTIVITY_FLOOR_DB, DESK_SAMPLES_PER_EPOCH, TRAIN_SRC_LEN,
};
