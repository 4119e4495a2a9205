// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amortize;
pub mod chains;
pub mod constraints;
pub mod dist;
pub mod error;
pub mod exante;
pub mod generate;
pub mod instance;
pub mod par;
pub mod plc;
pub mod policies;
pub mod reproduce;
pub mod selection;
pub mod simplex;
