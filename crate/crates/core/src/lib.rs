pub mod bussgang;
pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod likelihood;
pub mod linalg;
pub mod networks;
pub mod pilot;
pub mod quantizer;
pub mod sampling;
pub mod system;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
