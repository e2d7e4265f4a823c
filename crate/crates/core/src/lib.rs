//! Subgroup algebra, Chabauty geometry, atomic invariant random subgroups,
//! recurrence towers and projective dynamics for free groups.

pub mod chabauty;
pub mod irs;
pub mod projdyn;
pub mod recurrence;
pub mod stabtop;
pub mod stallings;
pub mod words;

pub use stallings::{CoreGraph, CosetAction, StallingsError};
pub use words::{Word, WordError};
