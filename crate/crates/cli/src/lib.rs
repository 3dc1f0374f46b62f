//! Library half of the collapse-lab binary: config grammar, experiment
//! drivers, the acceptance check suite, and result serialization live here
//! so integration tests can call them without shelling out.

// Guards use `!(x > 0.0)` on purpose: the negation also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod experiments;
pub mod output;
