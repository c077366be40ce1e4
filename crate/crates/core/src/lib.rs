pub(crate) mod assign;
pub mod bim;
pub mod config;
pub mod entities;
pub mod geom;
pub mod graph;
pub mod ingest;
pub mod passage;
pub mod synth;
