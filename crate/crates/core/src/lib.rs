pub mod datamodel;
pub mod error;
pub mod fusion;
pub mod graphnet;
pub mod harness;
pub mod tensorcore;
pub mod vision;

pub use error::{Result, VgaError};
pub use tensorcore::{ParamId, ParamStore, Tape, Tensor, Var};
