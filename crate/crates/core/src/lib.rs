#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod behavior;
pub mod bell;
pub mod error;
pub mod lab;
pub mod nelder_mead;
pub mod npa;
pub mod par;
pub mod protocol;
pub mod qcore;
pub mod sdp;

pub use error::{Error, Result};
