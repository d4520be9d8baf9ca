//! Exit-code classification.

use std::io;

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_SELFTEST: u8 = 4;

/// Bad or inconsistent flags.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// One or more self-test checks failed.
#[derive(Debug, thiserror::Error)]
#[error("self-test failed: {}", .0.join(", "))]
pub struct SelftestFailed(pub Vec<String>);

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<SelftestFailed>() {
            return EXIT_SELFTEST;
        }
        if cause.is::<jigsolve_core::Error>()
            || cause.is::<io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return EXIT_DATA;
        }
    }
    EXIT_OTHER
}
