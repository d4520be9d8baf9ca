//! Command-line front end for `jigsolve-core`: corpus generation, training,
//! solving, parameter sweeps and a brute-force self-test.

pub mod args;
pub mod commands;
pub mod corpus;
pub mod error;
pub mod report;
pub mod selftest;
