//! Utility and privacy evaluation of synthetic trajectory samples.

pub mod privacy;
pub mod utility;
