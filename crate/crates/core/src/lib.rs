pub mod environment;
pub mod error;
pub mod groundstate;
pub mod imps;
pub mod krylov;
pub mod linalg;
pub mod mpo;
pub mod observables;
pub mod tensor;
pub mod window;

pub use error::{Error, Result};
pub use imps::{InfiniteMps, SchmidtSpectrum, Side};
pub use mpo::{Mpo, SpinOperators};
pub use num_complex::Complex64 as C64;
pub use tensor::DenseTensor;
