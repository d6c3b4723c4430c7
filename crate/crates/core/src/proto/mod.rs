//! Protocol engines.

pub mod clm;
pub mod hl;
pub mod hybrid;
pub mod ldl;
pub mod pdl;
pub mod table;

pub use clm::{Clm, ClmConfig};
pub use hl::{Hl, HlConfig};
pub use hybrid::Hybrid;
pub use ldl::{Ldl, LdlConfig};
pub use pdl::{Pdl, PdlConfig};

#[cfg(test)]
pub(crate) mod testkit;
