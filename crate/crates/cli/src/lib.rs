//! Configuration, file formats and table rendering behind the `rhoreg`
//! binary.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod table;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Usage, configuration or I/O error.
    pub const ERROR: u8 = 1;
    /// The requested estimator does not exist on this dataset.
    pub const NONEXISTENCE: u8 = 2;
}
