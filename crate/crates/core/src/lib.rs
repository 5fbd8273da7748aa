pub mod error;
pub mod jacobian;
pub mod linalg;
pub mod oracles;
pub mod parallel;
pub mod problem;
pub mod prox;
pub mod random;
pub mod report;
pub mod sovf;

pub use error::{Error, Result};
