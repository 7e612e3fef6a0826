//! Files, processes and sockets around `pami-core`: PNG and map-file IO,
//! clients for scorers behind the line-delimited JSON protocol, a thread-pool
//! sweep runner, and the `pami` command line.

pub mod backend;
pub mod cli;
pub mod client;
pub mod config;
pub mod evaluate;
pub mod io;
pub mod parallel;
pub mod protocol;
pub mod render;
pub mod serve;

pub use pami_core as core;

/// Logging from `PAMI_LOG` (`error`, `warn`, `info`, `debug`, `trace`); warnings by default.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("PAMI_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
