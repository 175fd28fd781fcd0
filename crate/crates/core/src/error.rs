use alloc::string::String;

/// Errors raised by the calibration core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A probability row does not sum to one. `pass` is set for prediction stacks.
    #[error("row {row}{} sums to {sum}, expected 1 within {tolerance}", .pass.map(|t| alloc::format!(" of pass {t}")).unwrap_or_default())]
    RowSum {
        pass: Option<usize>,
        row: usize,
        sum: f64,
        tolerance: f64,
    },
    /// A value lies outside its admissible range.
    #[error("{what} at row {row}, column {col} is {value}, outside the admissible range")]
    OutOfRange {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    /// A class label is not smaller than the class count.
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    Label {
        row: usize,
        label: usize,
        classes: usize,
    },
    /// Container shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid argument for a numerical routine.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration (split fractions, conformal settings, empty groups).
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(alloc::format!($($arg)*)) };
}
macro_rules! shape {
    ($($arg:tt)*) => { $crate::error::Error::Shape(alloc::format!($($arg)*)) };
}
macro_rules! config {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use {config, domain, shape};
