pub mod cardiac;
pub mod ead;
pub mod error;
pub mod imaging;
pub mod locate;
pub mod metrics;
pub mod phantom;

pub use error::{Error, Result};
