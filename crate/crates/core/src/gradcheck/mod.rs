//! Finite-difference gradient checking.

mod numeric;

pub use numeric::{central_difference, compare, relative_error, CheckOutcome, STEP, TOLERANCE};
