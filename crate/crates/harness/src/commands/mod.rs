//! One module per subcommand. Each `run` returns `Ok(false)` when a check
//! fails and `Err` for configuration, I/O or divergence errors.

pub mod ablate;
pub mod cost;
pub mod gradcheck;
pub mod montecarlo;
pub mod oracle;
pub mod train;
