//! Closed-form and semi-closed-form dynamic risk measures.

pub mod avar;
pub mod entropic;
pub mod recursive;
pub mod separated;
pub mod simplified;

pub use separated::{DiscountFamily, InnerRisk};
