//! Shared fixtures for the benchmarks.

use cicr_core::{load, RunOptions, Session};

pub const PRELUDE: &str = include_str!("../../../scripts/prelude.v");

pub const EXAMPLES: &[(&str, &str)] = &[
    ("ex_intro", include_str!("../../../scripts/ex_intro.v")),
    ("coercions", include_str!("../../../scripts/coercions.v")),
    ("binders", include_str!("../../../scripts/binders.v")),
    ("dependent", include_str!("../../../scripts/dependent.v")),
];

/// The prelude followed by `extra`, loaded into one session.
pub fn session(extra: &str) -> Session {
    load(&format!("{PRELUDE}\n{extra}"), RunOptions::default()).expect("fixture loads")
}
