//! Traffic volume forecasting with chat language models: dataset assembly,
//! prompt compilation, inference, evaluation and a command-line front end.

pub mod cli;
pub mod evaluate;
pub mod inference;
pub mod ingest;
pub mod io;
pub mod model;
pub mod prompt;
pub mod select;
