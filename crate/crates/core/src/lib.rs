#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acm;
pub mod ferrysim;
pub mod linkmodel;
pub mod moga;
pub mod scenario;
pub mod staticrelay;
