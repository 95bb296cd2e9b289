pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fluency;
pub mod matcher;
pub mod pipeline;
