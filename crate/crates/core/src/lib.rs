pub mod analytic;
pub mod data;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod nonlinear;
pub mod svar;
pub mod svma;
pub mod var;

pub use error::{Error, Result};
