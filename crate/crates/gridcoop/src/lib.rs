//! Seeded matches on the host: event logs, the on-disk plan cache, map dumps
//! and the command line driver.

pub mod dump;
pub mod log;
pub mod store;
