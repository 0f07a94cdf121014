//! Commands behind the `impression-audit` binary.

pub mod audit;
pub mod config;
pub mod error;
pub mod fixture;
pub mod output;
pub mod probe;
pub mod regress;
pub mod tools;

pub use audit::{cmd_audit, AuditReport};
pub use config::{AnalysisOptions, AuditConfig, OptionOverrides, ProbeConfig};
pub use error::{CliError, CliResult};
pub use probe::cmd_probe;
pub use regress::cmd_regress;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Internal(format!("thread pool: {e}"))),
    }
}
