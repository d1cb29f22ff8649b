pub mod error;
pub mod fdmodel;
pub mod lcu;
pub mod analysis;
pub mod linalg;
pub mod qsim;
pub mod tmcqc;

pub use error::{Error, Result};

/// Double-precision complex scalar.
pub type C64 = num_complex::Complex64;
/// Double-precision dense complex matrix.
pub type CMatrix = linalg::Matrix<f64>;
/// Double-precision dense complex vector.
pub type CVector = linalg::Vector<f64>;
