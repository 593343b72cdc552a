//! Respiratory sound classification pipeline.
//!
//! The crate covers the whole learning chain for lung auscultation
//! recordings:
//!
//! - [`dataset`]: WAV decoding, cycle annotations, diagnosis tables,
//!   resampling to the canonical rate and a seeded synthetic generator.
//! - [`dsp`]: Hamming window, radix-2 FFT, mel filterbank, DCT-II and MFCC.
//! - [`frames`]: the seven frame-composition settings S1..S7 turning a cycle
//!   into a sequence of concatenated MFCC vectors.
//! - [`normalize`]: Min-Max and Z-score statistics fitted on training data.
//! - [`rnn`]: stacked LSTM/GRU classifiers (optionally bidirectional) with
//!   variational dropout, input batch normalization, BPTT and Adam.
//! - [`metrics`]: seeded splits, confusion matrices, ICBHI micro scores and
//!   macro accuracy/precision/recall/F1.
//!
//! # Parallelism
//!
//! With the `parallel` feature (on by default) per-cycle feature extraction
//! and per-sequence forward/backward passes run on the rayon thread pool.
//! Reductions always happen in a fixed order, so results are bit-identical
//! with or without the feature and for any thread count.

pub mod dataset;
pub mod dsp;
pub mod frames;
pub mod metrics;
pub mod normalize;
pub mod par;
pub mod rnn;

mod error;

pub use error::Error;

/// Sample rate every clip is resampled to before feature extraction.
pub const CANONICAL_RATE: u32 = 4000;
