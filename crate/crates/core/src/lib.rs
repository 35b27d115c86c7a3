//! A CIC kernel with metavariables and a bidirectional refiner.

pub mod coercion;
pub mod driver;
pub mod env;
pub mod kernel;
pub mod pretty;
pub mod reduce;
pub mod refiner;
pub mod surface;
pub mod term;
pub mod unify;

pub use coercion::{CoercionDb, DeclareOptions, Skel};
pub use driver::{load, run, run_files, Report, RunOptions, Session};
pub use env::{GlobalEnv, Object};
pub use kernel::{typecheck_obj, Kernel, KernelError};
pub use refiner::{Config, RefineError, Refiner};
pub use surface::{parse_script, parse_term, ParseError};
pub use term::{Context, Name, Sort, Span, SpanMap, Term};
pub use unify::State;
