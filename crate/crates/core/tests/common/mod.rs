//! Oracles shared by the focused test files and the acceptance run. Each
//! test binary uses a different subset.
#![allow(dead_code)]

pub mod gradcheck;
pub mod manufactured;
pub mod oracles;
