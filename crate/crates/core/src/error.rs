use thiserror::Error;

use crate::dataset::DatasetError;
use crate::dsp::DspError;
use crate::frames::FrameError;
use crate::metrics::MetricsError;
use crate::normalize::NormalizeError;
use crate::rnn::RnnError;

/// Umbrella error for callers that chain several pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("dsp: {0}")]
    Dsp(#[from] DspError),
    #[error("frames: {0}")]
    Frames(#[from] FrameError),
    #[error("normalize: {0}")]
    Normalize(#[from] NormalizeError),
    #[error("rnn: {0}")]
    Rnn(#[from] RnnError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
}
