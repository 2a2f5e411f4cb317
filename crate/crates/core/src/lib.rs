pub mod darray;
pub mod error;
pub mod experiment;
pub mod geom;
pub mod inherent;
pub mod integrate;
pub mod problems;
pub mod reduce;
pub mod smoothfact;
pub mod taylor;
pub mod verify;

pub use error::{DaeError, Result};
pub use taylor::{TaylorMatrix, TaylorScalar};
