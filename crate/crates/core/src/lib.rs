pub mod error;
pub mod linalg;
pub mod model;
pub mod poly;
pub mod rng;
pub mod moments;
pub mod simulate;
pub mod estimate;
pub mod stats;
pub mod harness;
