//! Dynamic convex risk measures for adapted processes on finite event trees.
//!
//! Processes live on a finite tree with reference probability `P` and adapted
//! discount weights `μ`. Risk measures are evaluated node by node on the
//! subtree below a node, and their robust representations run over measures on
//! the product of paths and times.

pub mod cash;
pub mod consistency;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod measure;
pub mod numeric;
pub mod risk;
pub mod tolerance;
pub mod tree;
pub mod zoo;

pub use error::{Error, Result};
pub use measure::{Disintegration, OptionalRv, OptionalSet, ProductMeasure, TailValue};
pub use risk::{PenaltyValue, Profile, RiskMeasureSpec};
pub use tree::{AdaptedProcess, EventTree, NodeSpec};
