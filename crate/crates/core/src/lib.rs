//! Neural news recommendation that balances accuracy and diversity.
//!
//! The model encodes each article from its headline, snippet, and taxonomy
//! labels, encodes each reader from long-term and short-term click
//! interests with a diversity-aware attention over recent behaviour, and
//! scores candidates by a dot product passed through a sigmoid.

pub mod attention;
pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod model;
pub mod news_encoder;
pub mod pipeline;
pub mod reader_encoder;
pub mod training;
pub mod variant;

pub use error::{Error, Result};
