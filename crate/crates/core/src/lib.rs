pub mod brillouin;
pub mod criteria;
pub mod error;
pub mod gauss;
pub mod inequality;
pub mod lattice;
pub mod leeyang;
pub mod model;
pub mod oracle;
pub mod pimc;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
