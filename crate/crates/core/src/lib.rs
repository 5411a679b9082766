pub mod df;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lms;
pub mod lti;
pub mod markov;
pub mod mechanism;
pub mod privacy;
pub mod sensitivity;
pub mod sim;
pub mod spectral;
pub mod stream;
pub mod zfe;

pub use error::{Error, ErrorClass, Result};
