// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod seeding;
pub mod simgen;
pub mod sketch;
pub mod special;
pub mod testing;
pub mod theory;
pub mod variance;

pub use error::{Error, Result};
