pub mod ar;
pub mod artifact;
pub mod audio;
pub mod cli;
pub mod cfm;
pub mod conditioner;
pub mod corpus;
pub mod curation;
pub mod dataset;
pub mod error;
pub mod fsq;
pub mod numerics;
pub mod selfcheck;
pub mod text;

pub use error::{Error, Result};
