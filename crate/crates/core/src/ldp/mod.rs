//! Local-model protocols: every user randomizes its own report.

mod grouphist;
mod protocol;
mod transcript;

pub use grouphist::*;
pub use protocol::*;
pub use transcript::*;
