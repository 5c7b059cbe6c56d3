//! Chat backend contract, HTTP and mock backends, output parsing and
//! batched prediction.

mod backend;
mod batch;
mod http;
mod mock;
mod parse;

pub use backend::{complete, BackendError, BackendErrorKind, BackendParams, ChatBackend};
pub use batch::{predict_batch, predict_batch_with, BatchOptions, BatchOutcome, TaskFailure};
pub use http::{
    extract_choice_text, timeout_from_env, HttpBackend, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL, ENV_TIMEOUT_SECS,
};
pub use mock::{mock_complete, mock_forecast, MockBackend};
pub use parse::{parse_prediction, ParseError, ParsedPrediction};
