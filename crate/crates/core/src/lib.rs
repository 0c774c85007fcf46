pub mod baseline;
pub mod bench;
pub mod cli;
pub mod dfo;
pub mod domain;
pub mod error;
pub mod fo;
pub mod grouping;
pub mod lp;
pub mod prices;
pub mod profiles;
pub mod rep;
pub mod vb;

pub use error::{Error, Result};
