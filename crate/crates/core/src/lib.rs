//! Reference-count bug checking for driver-style programs written in KIR.

pub mod kir;
pub mod parse;
pub mod refmodel;
pub mod harness;
pub mod slicer;
pub mod engine;
pub mod report;
pub mod pipeline;
pub mod corpus;
pub mod cli;
