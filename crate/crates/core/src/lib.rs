pub mod dataset;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod models;
pub mod seed;
pub mod explain;
pub mod dissonance;
pub mod experiment;
pub mod report;
