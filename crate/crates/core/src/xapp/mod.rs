//! The four Near-RT RIC applications.

pub mod bmm;
pub mod qra;
pub mod ssd;
pub mod ts;
