//! Grid case data, MATPOWER-style ingestion and the TSO/DSO split.

mod boundary;
mod case;
mod matpower;
mod partition;

use thiserror::Error;

pub use boundary::{BoundaryVector, Component};
pub use case::{Branch, Bus, BusType, Generator, NetworkCase, QuadraticCost};
pub use matpower::{parse_matpower_case, print_matpower_case};
pub use partition::{
    ieee14_split, partition, whole_network, AttachmentKind, BoundaryAttachment, GenSource, RegionBranch, RegionBus, RegionGen,
    RegionKind, RegionModel, ATTACHMENT_LIMIT,
};

/// The IEEE 14-bus case file, verbatim.
pub const IEEE14_CASE: &str = include_str!("../../data/case14.m");

/// Voltage band used for the study, in p.u.
pub const STUDY_VMIN: f64 = 0.9;
pub const STUDY_VMAX: f64 = 1.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

/// IEEE 14-bus case with the study voltage band applied.
pub fn study_case() -> NetworkCase {
    NetworkCase::ieee14()
        .with_voltage_limits(STUDY_VMIN, STUDY_VMAX)
        .expect("study limits are valid")
}
