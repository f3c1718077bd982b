//! Contextual vulnerability scoring for cloud service deployments.
//!
//! The pipeline mines hardware, software and network dependencies, joins
//! them into a two-layer dependency graph ([`cdg::Cdg`]), ranks every
//! software component by its place in each layer, and scores known
//! vulnerabilities by the importance of what they touch.

pub mod cdg;
pub mod error;
pub mod exec;
pub mod fixsim;
pub mod graph;
pub mod logmine;
pub mod netdep;
pub mod scoring;
pub mod synth;
pub mod topology;
pub mod vulnmatch;

pub use error::{Error, Result};
pub use exec::Exec;
