pub mod fit;
pub mod metrics;
pub mod simulate;
pub mod summarize;
